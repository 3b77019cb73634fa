"""Named-record weight container and the parameter bundles stored in it.

The CRWT layout: ASCII magic "CRWT", a little-endian uint32 record count,
then per record a uint32 name length, the UTF-8 name, a uint32 rank,
rank x uint32 dimensions, and the little-endian float32 values in row-major
order. Rank 0 encodes a scalar carrying exactly one value. Names must be
unique; record order is preserved so rewriting a file is byte-stable.

Values are stored in float32, so round-tripping float64 parameters keeps
about seven significant digits. That is plenty for the reproducible
pipelines here, which always regenerate weights from seeds.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .corr import CfaParams
from .errors import FormatError, ParameterError
from .sstrans import ExpandedAttentionParams, ModeParams

CRWT_MAGIC = b"CRWT"


def write_weights(path, records: dict[str, np.ndarray]) -> None:
    """Serialize named arrays in insertion order."""
    if not records:
        raise ParameterError("refusing to write an empty weight file")
    chunks = [CRWT_MAGIC, struct.pack("<I", len(records))]
    for name, value in records.items():
        if not name:
            raise ParameterError("weight record names must be non-empty")
        # ascontiguousarray would promote 0-d scalars to rank 1
        arr = np.asarray(value, dtype="<f4", order="C")
        if not np.all(np.isfinite(arr)):
            raise ParameterError(f"record {name!r} holds non-finite values")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            chunks.append(struct.pack("<I", dim))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_weights(path) -> dict[str, np.ndarray]:
    """Parse a CRWT file into {name: float64 array} preserving order."""
    blob = Path(path).read_bytes()
    if blob[:4] != CRWT_MAGIC:
        raise FormatError(f"bad weight-file magic {blob[:4]!r}", offset=0)
    if len(blob) < 8:
        raise FormatError("weight header truncated", offset=len(blob))
    (count,) = struct.unpack_from("<I", blob, 4)
    pos = 8
    records: dict[str, np.ndarray] = {}

    def take(n: int, what: str) -> int:
        nonlocal pos
        if pos + n > len(blob):
            raise FormatError(f"truncated while reading {what}", offset=len(blob))
        start = pos
        pos += n
        return start

    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, take(4, "record name length"))
        raw_name = blob[take(name_len, "record name") : pos]
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("record name is not valid UTF-8", offset=pos - name_len) from None
        if name in records:
            raise FormatError(f"duplicate record name {name!r}", offset=pos - name_len)
        (rank,) = struct.unpack_from("<I", blob, take(4, "record rank"))
        dims = []
        for _ in range(rank):
            (dim,) = struct.unpack_from("<I", blob, take(4, "record dimension"))
            if dim < 1:
                raise FormatError(f"record {name!r} has a zero dimension", offset=pos - 4)
            dims.append(dim)
        n_values = 1
        for dim in dims:
            n_values *= dim
        start = take(4 * n_values, f"values of record {name!r}")
        raw = np.frombuffer(blob[start:pos], dtype="<f4")
        if not np.all(np.isfinite(raw)):
            raise FormatError(f"record {name!r} holds non-finite values", offset=start)
        records[name] = raw.astype(np.float64).reshape(dims)
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes after last record", offset=pos)
    return records


def _require(records: dict[str, np.ndarray], name: str) -> np.ndarray:
    if name not in records:
        raise FormatError(f"weight file lacks record {name!r}")
    return records[name]


def _scalar(records: dict[str, np.ndarray], name: str) -> float:
    arr = np.asarray(_require(records, name))
    if arr.size != 1:
        raise FormatError(f"record {name!r} must hold exactly one value, has {arr.size}")
    return float(arr.reshape(()))


def sstrans_records(params: ExpandedAttentionParams) -> dict[str, np.ndarray]:
    """Flatten smoothing-transform parameters into named records."""
    records: dict[str, np.ndarray] = {}
    for k, mode in enumerate(params.modes):
        records[f"sstrans/mode{k}/query"] = mode.query
        records[f"sstrans/mode{k}/key"] = mode.key
        records[f"sstrans/mode{k}/value"] = mode.value
        records[f"sstrans/mode{k}/output"] = mode.output
    records["sstrans/scorer_weights"] = params.scorer_weights
    records["sstrans/scorer_bias"] = params.scorer_bias
    records["sstrans/position_bias"] = params.position_bias
    records["sstrans/skip_weight"] = np.float64(params.skip_weight)
    return records


def sstrans_from_records(records: dict[str, np.ndarray]) -> ExpandedAttentionParams:
    """Rebuild smoothing-transform parameters; shapes fix N and the radius."""
    scorer_weights = _require(records, "sstrans/scorer_weights")
    if scorer_weights.ndim != 2:
        raise FormatError("sstrans/scorer_weights must be rank 2")
    n_modes = scorer_weights.shape[0]
    modes = []
    for k in range(n_modes):
        modes.append(
            ModeParams(
                query=_require(records, f"sstrans/mode{k}/query"),
                key=_require(records, f"sstrans/mode{k}/key"),
                value=_require(records, f"sstrans/mode{k}/value"),
                output=_require(records, f"sstrans/mode{k}/output"),
            )
        )
    position_bias = _require(records, "sstrans/position_bias")
    if position_bias.ndim != 2 or position_bias.shape[0] != position_bias.shape[1]:
        raise FormatError("sstrans/position_bias must be square")
    if position_bias.shape[0] % 2 != 1:
        raise FormatError("sstrans/position_bias must have odd side length")
    return ExpandedAttentionParams(
        modes=tuple(modes),
        scorer_weights=scorer_weights,
        scorer_bias=_require(records, "sstrans/scorer_bias"),
        position_bias=position_bias,
        radius=(position_bias.shape[0] - 1) // 2,
        skip_weight=_scalar(records, "sstrans/skip_weight"),
    )


def cfa_records(params: CfaParams) -> dict[str, np.ndarray]:
    """Flatten correlation-projection parameters into named records."""
    return {
        "cfa/projections": params.projections,
        "cfa/norm_gain": np.float64(params.norm_gain),
        "cfa/norm_bias": np.float64(params.norm_bias),
        "cfa/norm_eps": np.float64(params.norm_eps),
    }


def cfa_from_records(records: dict[str, np.ndarray]) -> CfaParams:
    """Rebuild correlation-projection parameters from named records."""
    proj = _require(records, "cfa/projections")
    return CfaParams(
        projections=proj,
        norm_gain=_scalar(records, "cfa/norm_gain"),
        norm_bias=_scalar(records, "cfa/norm_bias"),
        norm_eps=_scalar(records, "cfa/norm_eps"),
    )
