"""FlowField container, translation/upsampling ops, .flo round trips."""

import numpy as np
import numpy.testing as npt
import pytest

from flowcorr.errors import DimensionError, FormatError
from flowcorr.flowfield import (
    FLO_MAGIC,
    FlowField,
    constant_flow,
    read_flo,
    translate_field,
    upsample_flow,
    write_flo,
)


def random_field(rng, h, w, invalid_frac=0.2):
    # float32-representable values so disk round trips stay bit-exact
    flow = rng.normal(size=(h, w, 2)).astype(np.float32).astype(np.float64)
    valid = rng.random(size=(h, w)) >= invalid_frac
    flow[~valid] = 0.0
    return FlowField(flow, valid)


def test_field_validation():
    with pytest.raises(DimensionError):
        FlowField(np.zeros((2, 2)), np.ones((2, 2), dtype=bool))
    with pytest.raises(DimensionError):
        FlowField(np.zeros((2, 2, 3)), np.ones((2, 2), dtype=bool))
    with pytest.raises(DimensionError):
        FlowField(np.zeros((2, 2, 2)), np.ones((2, 3), dtype=bool))
    with pytest.raises(DimensionError):
        FlowField(np.zeros((0, 2, 2)), np.ones((0, 2), dtype=bool))


def test_field_finiteness_only_enforced_where_valid():
    flow = np.zeros((2, 2, 2))
    flow[0, 0, 0] = np.nan
    valid = np.ones((2, 2), dtype=bool)
    with pytest.raises(DimensionError):
        FlowField(flow, valid)
    valid[0, 0] = False
    field = FlowField(flow, valid)  # NaN hidden behind the mask is fine
    assert not field.valid[0, 0]


def test_constant_flow_and_magnitude():
    field = constant_flow(3, 4, u=3.0, v=4.0)
    assert field.height == 3 and field.width == 4
    assert field.valid.all()
    npt.assert_allclose(field.magnitude(), np.full((3, 4), 5.0), atol=1e-12)


def test_translate_field_matches_pixel_loop():
    rng = np.random.default_rng(0)
    h, w = 5, 7
    for du, dv in [(2, 1), (-2, 1), (2, -1), (-2, -1), (0, 0), (7, 0), (0, -5)]:
        field = random_field(rng, h, w)
        moved = translate_field(field, du, dv)
        for y in range(h):
            for x in range(w):
                sy, sx = y - dv, x - du
                if 0 <= sy < h and 0 <= sx < w:
                    assert moved.valid[y, x] == field.valid[sy, sx]
                    npt.assert_array_equal(moved.flow[y, x], field.flow[sy, sx])
                else:
                    assert not moved.valid[y, x]
                    npt.assert_array_equal(moved.flow[y, x], [0.0, 0.0])


def test_translate_then_untranslate_restores_interior():
    rng = np.random.default_rng(1)
    field = random_field(rng, 6, 6, invalid_frac=0.0)
    back = translate_field(translate_field(field, 2, 1), -2, -1)
    npt.assert_array_equal(back.flow[0:5, 0:4], field.flow[0:5, 0:4])
    assert back.valid[0:5, 0:4].all()
    # content pushed past the border on the way out never comes back
    assert not back.valid[5, :].any()
    assert not back.valid[:, 4:].any()


def test_upsample_flow_repeats_blocks():
    rng = np.random.default_rng(2)
    field = random_field(rng, 3, 2)
    up = upsample_flow(field, 3)
    assert up.flow.shape == (9, 6, 2)
    for y in range(9):
        for x in range(6):
            npt.assert_array_equal(up.flow[y, x], field.flow[y // 3, x // 3])
            assert up.valid[y, x] == field.valid[y // 3, x // 3]
    with pytest.raises(DimensionError):
        upsample_flow(field, 0)


def test_flo_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    for i in range(10):
        field = random_field(rng, int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        path = tmp_path / f"f{i}.flo"
        write_flo(path, field)
        loaded = read_flo(path)
        npt.assert_array_equal(loaded.valid, field.valid)
        npt.assert_array_equal(loaded.flow, field.flow)
        # A second write of the loaded field reproduces the file bytes.
        path2 = tmp_path / f"f{i}b.flo"
        write_flo(path2, loaded)
        assert path.read_bytes() == path2.read_bytes()


def test_flo_header_layout(tmp_path):
    field = constant_flow(2, 3, u=1.0, v=-2.0)
    path = tmp_path / "layout.flo"
    write_flo(path, field)
    blob = path.read_bytes()
    assert np.frombuffer(blob, dtype="<f4", count=1)[0] == np.float32(FLO_MAGIC)
    w, h = np.frombuffer(blob, dtype="<i4", count=2, offset=4)
    assert (w, h) == (3, 2)
    assert len(blob) == 12 + 8 * 6
    pairs = np.frombuffer(blob, dtype="<f4", offset=12).reshape(2, 3, 2)
    npt.assert_array_equal(pairs[..., 0], np.full((2, 3), 1.0, dtype=np.float32))
    npt.assert_array_equal(pairs[..., 1], np.full((2, 3), -2.0, dtype=np.float32))


def test_flo_invalid_pixels_encoded_large(tmp_path):
    flow = np.zeros((1, 2, 2))
    valid = np.array([[True, False]])
    path = tmp_path / "inv.flo"
    write_flo(path, FlowField(flow, valid))
    pairs = np.frombuffer(path.read_bytes(), dtype="<f4", offset=12)
    assert np.all(np.abs(pairs[2:]) > 1e9)
    loaded = read_flo(path)
    assert loaded.valid[0, 0] and not loaded.valid[0, 1]
    npt.assert_array_equal(loaded.flow[0, 1], [0.0, 0.0])


def test_flo_malformed_inputs(tmp_path):
    short = tmp_path / "short.flo"
    short.write_bytes(b"\x00" * 5)
    with pytest.raises(FormatError) as err:
        read_flo(short)
    assert "offset 0" in str(err.value)

    bad_magic = tmp_path / "magic.flo"
    bad_magic.write_bytes(np.float32(1.0).tobytes() + b"\x00" * 16)
    with pytest.raises(FormatError) as err:
        read_flo(bad_magic)
    assert "offset 0" in str(err.value)

    bad_dims = tmp_path / "dims.flo"
    bad_dims.write_bytes(
        np.float32(FLO_MAGIC).tobytes() + np.array([0, 4], dtype="<i4").tobytes() + b"\x00" * 8
    )
    with pytest.raises(FormatError) as err:
        read_flo(bad_dims)
    assert "offset 4" in str(err.value)

    truncated = tmp_path / "trunc.flo"
    write_flo(truncated, constant_flow(2, 2))
    blob = truncated.read_bytes()
    truncated.write_bytes(blob[:-4])
    with pytest.raises(FormatError) as err:
        read_flo(truncated)
    assert f"offset {len(blob) - 4}" in str(err.value)
