import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaystab import (
    CommensurabilityError,
    HistoryFunction,
    KernelPiece,
    PiecewiseKernel,
    SpecValidationError,
    SystemSpec,
    Trajectory,
    check_commensurate,
    discretize_measure,
    dumps,
    loads,
    validate,
)
from delaystab.model import (
    find_violations,
    grid_size,
    kernel_l1_norm,
    kernel_value,
    matnorm,
    measure_total_variation,
)

from conftest import const_kernel, mixed, scalar_ide


def test_minimal_spec_is_valid():
    s = scalar_ide(0.5)
    assert validate(s) is s
    assert find_violations(s) == []


def test_unordered_delays_rejected():
    s = SystemSpec.scalar("ide", a=[0.1, 0.2], tau=[1.0, 0.5])
    with pytest.raises(SpecValidationError) as exc:
        validate(s)
    assert "delays not strictly increasing" in exc.value.violations


def test_kernel_gap_reported():
    pieces = [const_kernel(1.0, 0.0, 0.4), const_kernel(1.0, 0.5, 1.0)]
    s = SystemSpec.scalar("ide", tau_star=1.0, kernel=pieces)
    assert "kernel gap at [0.4,0.5)" in find_violations(s)


def test_kernel_overlap_and_tail():
    pieces = [const_kernel(1.0, 0.0, 0.6), const_kernel(1.0, 0.5, 0.9)]
    v = find_violations(SystemSpec.scalar("ide", tau_star=1.0, kernel=pieces))
    assert any(m.startswith("kernel overlap at [0.5,0.6)") for m in v)
    assert any(m.startswith("kernel gap at [0.9,1)") for m in v)


def test_delay_outside_horizon():
    s = SystemSpec("ide", 1, 1.0, (1.5,), (np.array([[0.1]]),))
    assert any("outside (0, tau_star=1.0]" in m for m in find_violations(s))


def test_dimension_mismatch():
    s = SystemSpec("ide", 2, 1.0, (1.0,), (np.eye(3),))
    assert any("dimension mismatch" in m for m in find_violations(s))


def test_degree_limit():
    p = KernelPiece(0.0, 1.0, np.ones((5, 1, 1)))
    v = find_violations(SystemSpec.scalar("ide", tau_star=1.0, kernel=[p]))
    assert any("degree 4" in m for m in v)


def test_kernel_value():
    s = SystemSpec.scalar("ide", tau_star=1.0, kernel=[KernelPiece(0, 1, [0.0, 0.0, 1.0])])
    assert kernel_value(s, 0.5)[0, 0] == pytest.approx(0.25)
    assert kernel_value(s, 1.0)[0, 0] == pytest.approx(1.0)  # closed right end
    assert kernel_value(mixed(), 0.3)[0, 0] == pytest.approx(0.2)
    with pytest.raises(ValueError):
        kernel_value(s, 1.5)


def test_discretize_single_atom():
    m = discretize_measure(scalar_ide(0.5), 0.25)
    np.testing.assert_array_equal(m.entries[:, 0, 0], [0, 0, 0, 0, 0.5])
    assert m.support_length == 5


def test_discretize_uniform_density():
    s = SystemSpec.scalar("ide", tau_star=1.0, kernel=[const_kernel(1.0)])
    m = discretize_measure(s, 0.25)
    np.testing.assert_allclose(m.entries[:4, 0, 0], 0.25, rtol=0, atol=1e-15)
    assert m.entries[4, 0, 0] == 0.0


def test_discretize_linear_density():
    s = SystemSpec.scalar("ide", tau_star=1.0, kernel=[KernelPiece(0, 1, [0.0, 1.0])])
    m = discretize_measure(s, 0.5)
    np.testing.assert_allclose(m.entries[:2, 0, 0], [0.125, 0.375], atol=1e-15)


def test_measure_has_no_atom_at_zero():
    m = discretize_measure(scalar_ide(0.5), 0.1)
    assert m.entries[0, 0, 0] == 0.0


@pytest.mark.parametrize("h", [0.1, 0.01])
def test_total_mass_matches(h):
    s = mixed(a=-0.3, c=0.2)
    m = discretize_measure(s, h)
    assert m.total_variation() == pytest.approx(measure_total_variation(s), abs=h)
    assert measure_total_variation(s) == pytest.approx(0.5)
    assert kernel_l1_norm(s) == pytest.approx(0.2)


def test_non_commensurate_step_suggests_fix():
    s = SystemSpec.scalar("ide", a=[0.5, 0.1], tau=[0.3, 1.0])
    with pytest.raises(CommensurabilityError) as exc:
        check_commensurate(s, 0.25)
    assert "try h=" in str(exc.value)
    h = exc.value.suggested_step
    assert h <= 0.25
    assert check_commensurate(s, h) == round(1.0 / h)


def test_grid_size():
    assert grid_size(1.0, 0.01) == 100
    with pytest.raises(CommensurabilityError):
        grid_size(1.0, 0.3)
    with pytest.raises(ValueError):
        grid_size(1.0, 0.0)


def test_operator_norm():
    assert matnorm(np.array([[3.0, 0], [0, -4.0]])) == pytest.approx(4.0)
    assert matnorm(np.array([3.0, 4.0])) == pytest.approx(5.0)


def test_history_helpers():
    H = HistoryFunction.constant(2.0, 1.0, 0.25)
    assert H.values.shape == (5, 1)
    assert H.tau_star == pytest.approx(1.0)
    np.testing.assert_allclose(H.times, [-1, -0.75, -0.5, -0.25, 0])
    G = HistoryFunction.from_function(lambda s: [s, -s], 1.0, 0.5, n=2, x0=[1, 2])
    np.testing.assert_allclose(G.values, [[-1, 1], [-0.5, 0.5], [0, 0]])
    np.testing.assert_allclose(G.scaled(3.0).x0, [3, 6])


def test_trajectory_indexing():
    tr = Trajectory(0.5, -1.0, np.arange(6.0)[:, None])
    assert tr.index_of(0.0) == 2
    assert tr.at(1.0)[0] == 4.0
    np.testing.assert_array_equal(tr.segment(-0.5, 0.5)[:, 0], [1, 2, 3])
    with pytest.raises(ValueError):
        tr.index_of(0.2)


def test_loads_parse_error():
    with pytest.raises(SpecValidationError) as exc:
        loads("{\n  \"kind\": ide\n}")
    assert exc.value.violations[0].startswith("parse error at line 2")


def test_loads_missing_fields():
    with pytest.raises(SpecValidationError) as exc:
        loads(json.dumps({"kind": "ide"}))
    assert "missing field 'dimension'" in exc.value.violations


def test_loads_validates():
    doc = {"kind": "ide", "dimension": 1, "tau_star": 1.0,
           "delay_terms": [{"tau": 1.0, "A": [[0.5]]}, {"tau": 0.5, "A": [[0.1]]}]}
    with pytest.raises(SpecValidationError) as exc:
        loads(json.dumps(doc))
    assert "delays not strictly increasing" in exc.value.violations


def test_loads_history_and_x0():
    doc = {"kind": "dde", "dimension": 1, "tau_star": 1.0,
           "delay_terms": [{"tau": 1.0, "A": [[0.5]]}],
           "history": {"step": 0.5, "values": [1.0, 1.0, 1.0]}, "x0": [2.0]}
    spec, H = loads(json.dumps(doc))
    assert H.values.shape == (3, 1)
    assert H.x0[0] == 2.0
    doc["history"]["values"] = [1.0, 1.0]
    with pytest.raises(SpecValidationError) as exc:
        loads(json.dumps(doc))
    assert "expected 3 samples" in exc.value.violations[0]


def test_round_trip_is_byte_identical(tmp_path):
    s = SystemSpec(
        "dde", 2, 2.0, (0.5, 2.0), (np.array([[0.1, 0.2], [0.0, -0.3]]), np.eye(2) * 0.25),
        PiecewiseKernel((KernelPiece(0, 1.5, np.ones((2, 2, 2)) * 0.1), KernelPiece(1.5, 2.0, np.ones((1, 2, 2))))),
    )
    H = HistoryFunction.constant([1.0, -1.0], 2.0, 0.5, x0=[0.5, 0.25])
    text = dumps(s, H)
    s2, H2 = loads(text)
    assert s2 == s
    assert dumps(s2, H2) == text


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(1, 3),
    ndelays=st.integers(0, 3),
    data=st.data(),
)
def test_round_trip_property(n, ndelays, data):
    taus = sorted(set(data.draw(st.lists(st.floats(0.01, 2.0), min_size=ndelays, max_size=ndelays))))
    tau_star = max(taus + [1.0])
    mats = [np.array(data.draw(st.lists(finite, min_size=n * n, max_size=n * n))).reshape(n, n) for _ in taus]
    deg = data.draw(st.integers(0, 3))
    coeffs = np.array(data.draw(st.lists(finite, min_size=(deg + 1) * n * n, max_size=(deg + 1) * n * n)))
    kern = (KernelPiece(0.0, tau_star, coeffs.reshape(deg + 1, n, n)),)
    s = SystemSpec(data.draw(st.sampled_from(["ide", "dde"])), n, tau_star, tuple(taus), tuple(mats),
                   PiecewiseKernel(kern))
    text = dumps(s)
    s2, _ = loads(text)
    assert s2 == s
    assert dumps(s2) == text
