"""Gradient harness: the checker itself must catch wrong gradients."""

import pytest

from flowcorr.gradcheck import (
    check_cfa_gradients,
    check_sstrans_gradients,
    run_gradient_checks,
)


def test_default_configurations_pass():
    results = run_gradient_checks(0, [(2, 2, 3, 2), (2, 3, 2, 1)])
    assert results
    assert all(r.passed for r in results)
    # Both suites actually ran.
    labels = {r.label.split()[0] for r in results}
    assert labels == {"sstrans", "cfa"}


def test_checked_tensor_inventory():
    sst = check_sstrans_gradients(1, 2, 2, 3, modes=2, radius=1)
    names = {r.tensor for r in sst}
    assert "input" in names
    assert "scorer_weights" in names and "scorer_bias" in names
    assert "position_bias" in names and "skip_weight" in names
    assert any(n.endswith("query") for n in names)
    assert any(n.endswith("output") for n in names)

    raw = check_cfa_gradients(1, 2, 2, 3, modes=2, normalized=False)
    assert {r.tensor for r in raw} == {"frame1", "frame2", "projections"}
    norm = check_cfa_gradients(1, 2, 2, 3, modes=2, normalized=True)
    assert {"norm_gain", "norm_bias"} <= {r.tensor for r in norm}


def test_perturbed_gradients_are_flagged():
    # Negative control: corrupt the analytic side and the checker must fail.
    bad = check_sstrans_gradients(2, 2, 2, 3, modes=2, radius=1, perturb=1e-2)
    assert any(not r.passed for r in bad)
    bad = check_cfa_gradients(2, 2, 2, 3, modes=2, perturb=1e-2)
    assert any(not r.passed for r in bad)


def test_result_lines_render():
    results = check_cfa_gradients(3, 2, 2, 2, modes=1)
    for r in results:
        line = r.line()
        assert r.tensor in line
        assert line.startswith("pass") or line.startswith("FAIL")


def test_empty_size_list_is_vacuous():
    assert run_gradient_checks(0, []) == []


@pytest.mark.parametrize("normalized", [False, True])
def test_tolerance_knobs_respected(normalized):
    # With an absurdly tight budget even correct gradients fail, which shows
    # the tolerance arguments flow through.
    results = check_cfa_gradients(
        4, 2, 2, 2, modes=1, normalized=normalized, rel_tol=0.0, abs_tol=1e-18
    )
    assert any(not r.passed for r in results)
