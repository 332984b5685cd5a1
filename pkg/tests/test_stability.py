import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaystab import Box, HistoryFunction, SystemSpec, Trajectory, simulate
from delaystab.stability import (
    NormKind,
    NormSeries,
    battery,
    check_criterion,
    default_horizon,
    default_step,
    fit_decay,
    norm_csv,
    norm_series,
    partial_trajectory,
    report_json,
    window_norm,
)
from delaystab.timedomain import build_modal_history

from conftest import mixed, scalar_dde, scalar_ide
from test_spectrum import DDE_TENTH_ROOT

LN2 = math.log(2)
IDE_WINDOW = (-2, 1, 0, 20)
DDE_WINDOW = (-2, 1, 0, 4)


def ide_fixture(h=0.01, T=5.0):
    s = scalar_ide(0.5)
    return s, simulate(s, HistoryFunction.constant(1.0, 1.0, h), T, h)


def synthetic(f, L=1.0, T=10.0, h=0.01):
    t = h * np.arange(int(round(T / h)) + 1)
    return NormSeries(NormKind("sup"), t, f(t), L)


# -- norm kinds ------------------------------------------------------------------

def test_parse_norm_kind():
    assert NormKind.parse("l1") == NormKind("lp", 1.0)
    assert NormKind.parse("linf").p == math.inf
    assert NormKind.parse("sup").kind == "sup"
    assert NormKind.parse("bv").label == "bv"
    assert NormKind.parse("l3").label == "l3"
    with pytest.raises(ValueError):
        NormKind.parse("l0.5")
    with pytest.raises(ValueError):
        NormKind("lp", 0.5)
    with pytest.raises(ValueError):
        NormKind.parse("energy")


# -- window norms ------------------------------------------------------------------

def test_window_norm_constant():
    w = np.ones((101, 1))
    for k in ("l1", "l2", "linf", "sup"):
        assert window_norm(w, k, 0.01) == pytest.approx(1.0, abs=1e-14)
    assert window_norm(w, "bv", 0.01) == 1.0


def test_window_norm_exponential_l2():
    h = 0.001
    s = np.linspace(-1, 0, 1001)
    val = window_norm(np.exp(s)[:, None], "l2", h)
    assert abs(val - math.sqrt((1 - math.exp(-2)) / 2)) < 10 * h


@pytest.mark.parametrize("m", [2, 5, 10])
def test_window_norm_alternating_bv(m):
    w = np.array([(-1.0) ** i for i in range(m)])[:, None]
    assert window_norm(w, "bv", 0.1) == 2 * (m - 1) + 1


def test_window_norm_vector_and_errors():
    w = np.array([[3.0, 4.0], [0.0, 0.0]])
    assert window_norm(w, "sup", 1.0) == 5.0
    assert window_norm(w, "l1", 1.0) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        window_norm(np.ones((3, 1)), "l0.5", 0.1)
    with pytest.raises(ValueError):
        window_norm(np.zeros((0, 1)), "l1", 0.1)


# -- partial trajectories -----------------------------------------------------------

def test_partial_trajectory_at_zero():
    s, tr = ide_fixture()
    w = partial_trajectory(tr, 0.0, 1.0)
    assert w.shape == (101, 1)
    assert np.all(w[:-1] == 1.0) and w[-1, 0] == -0.5


def test_partial_trajectory_at_tau_star():
    _, tr = ide_fixture()
    w = partial_trajectory(tr, 1.0, 1.0)
    assert np.all(w[:-1] == -0.5) and w[-1, 0] == 0.25
    np.testing.assert_array_equal(w, tr.segment(0.0, 1.0))


def test_partial_trajectory_constant_and_errors():
    tr = Trajectory(0.1, -1.0, np.full((31, 1), 2.0))
    for t in (0.0, 0.7, 2.0):
        assert np.all(partial_trajectory(tr, t, 1.0) == 2.0)
    with pytest.raises(ValueError):
        partial_trajectory(tr, 0.05, 1.0)
    with pytest.raises(ValueError):
        partial_trajectory(tr, 2.5, 1.0)
    with pytest.raises(ValueError):
        partial_trajectory(tr, -0.1, 1.0)


# -- norm series ---------------------------------------------------------------------

def test_norm_series_ide_fixture():
    _, tr = ide_fixture()
    ser = norm_series(tr, "sup", 1.0)
    assert ser.times.size == 501
    idx = [0, 100, 200, 300, 400]
    np.testing.assert_allclose(ser.values[idx], [1, 0.5, 0.25, 0.125, 0.0625], rtol=0, atol=1e-15)
    assert ser.point_values is None


@pytest.mark.parametrize("kind", ["l1", "l2", "l3", "linf", "sup", "bv"])
def test_norm_series_matches_window_norm(kind):
    s = mixed("ide")
    h = 0.02
    H = HistoryFunction.from_function(lambda u: math.sin(4 * u) + 0.3, 1.0, h)
    tr = simulate(s, H, 4.0, h)
    ser = norm_series(tr, kind, 1.0)
    for t in (0.0, 0.5, 1.0, 2.34, 4.0):
        j = int(round(t / h))
        assert ser.values[j] == pytest.approx(window_norm(partial_trajectory(tr, t, 1.0), kind, h), rel=1e-12)


def test_norm_series_zero_trajectory():
    tr = Trajectory(0.1, -1.0, np.zeros((41, 2)))
    for k in ("l1", "sup", "bv"):
        assert not np.any(norm_series(tr, k, 1.0).values)


def test_norm_series_modal_real_root():
    s = scalar_dde(0.1)
    h = 0.01
    tr = simulate(s, build_modal_history(s, DDE_TENTH_ROOT, h), 6.0, h)
    ser = norm_series(tr, "linf", 1.0, "dde")
    ratio = ser.values * np.exp(-DDE_TENTH_ROOT * ser.times)
    # sup over [t - 1, t] of exp(z0 s) for z0 < 0 sits at the left end
    assert np.max(np.abs(ratio / ratio[0] - 1)) < 1e-6
    np.testing.assert_allclose(ser.point_values, np.exp(DDE_TENTH_ROOT * ser.times), rtol=1e-6)


def test_sup_rejected_for_dde():
    s = scalar_dde(1.0)
    tr = simulate(s, HistoryFunction.constant(1.0, 1.0, 0.1, x0=[1.0]), 3.0, 0.1)
    with pytest.raises(ValueError, match="only offered for IDEs"):
        norm_series(tr, "sup", 1.0, "dde")


def test_norm_series_needs_history():
    tr = Trajectory(0.1, 0.0, np.ones((20, 1)))
    with pytest.raises(ValueError):
        norm_series(tr, "l1", 1.0)


# -- decay fits ------------------------------------------------------------------------

def test_fit_exponential_decay():
    nu, C = fit_decay(synthetic(lambda t: np.exp(-t)))
    assert nu == pytest.approx(1.0, abs=1e-3)
    assert C >= 1.0


def test_fit_constant():
    nu, C = fit_decay(synthetic(lambda t: np.full_like(t, 3.0)))
    assert abs(nu) < 1e-9
    assert C == pytest.approx(3.0)


def test_fit_growth():
    nu, _ = fit_decay(synthetic(lambda t: np.exp(0.5 * t)))
    assert nu == pytest.approx(-0.5, abs=1e-3)


def test_fit_zero_envelope_and_short_series():
    nu, C = fit_decay(synthetic(lambda t: np.where(t < 3, 1.0, 0.0)))
    assert nu == math.inf and C == 1.0
    with pytest.raises(ValueError):
        fit_decay(synthetic(lambda t: np.exp(-t), T=4.0))


def test_fit_oscillating_envelope():
    nu, _ = fit_decay(synthetic(lambda t: np.exp(-0.3 * t) * np.abs(np.cos(7 * t)), T=30.0))
    assert nu == pytest.approx(0.3, rel=0.01)


# -- invariants over simulated windows ------------------------------------------------

BATTERY_SPECS = [scalar_ide(0.5), scalar_ide(2.0), scalar_ide(0.9), mixed("ide"), scalar_dde(1.0), mixed("dde")]


@pytest.mark.parametrize("spec", BATTERY_SPECS, ids=lambda s: f"{s.kind.value}")
def test_norm_comparisons_on_all_windows(spec):
    h = 0.01
    for hid, H in battery(spec, h):
        tr = simulate(spec, H, 5.0, h)
        kind = spec.kind
        l1 = norm_series(tr, "l1", 1.0, kind).values
        linf = norm_series(tr, "linf", 1.0, kind).values
        bv = norm_series(tr, "bv", 1.0, kind).values
        for p in (2.0, 3.0):
            lp = norm_series(tr, f"l{p:g}", 1.0, kind).values
            assert np.all(l1 <= 1.0 ** (1 - 1 / p) * lp * (1 + 1e-12) + 1e-15)
        assert np.all(linf <= bv)


@pytest.mark.parametrize("spec,window", [
    (scalar_ide(0.5), IDE_WINDOW), (scalar_ide(0.9), IDE_WINDOW), (mixed("ide"), IDE_WINDOW),
    (scalar_dde(1.0), DDE_WINDOW), (scalar_dde(0.1), DDE_WINDOW),
], ids=["ide0.5", "ide0.9", "mixed", "dde1", "dde0.1"])
def test_modal_fit_matches_root(spec, window):
    from delaystab import find_roots

    h = 0.01
    rep = find_roots(spec, Box(*window))
    z = max(rep.roots, key=lambda r: r.z.real).z
    T = math.ceil(max(20.0, 20 / abs(z.real)))
    tr = simulate(spec, build_modal_history(spec, z, h), T, h)
    nu, _ = fit_decay(norm_series(tr, "l2", 1.0, spec.kind))
    assert nu == pytest.approx(-z.real, rel=0.02)


@settings(max_examples=15, deadline=None)
@given(alpha=st.floats(0.01, 100), kind=st.sampled_from(["ide", "dde"]))
def test_scaling_invariance(alpha, kind):
    s = mixed(kind)
    h = 0.05
    H = HistoryFunction.from_function(lambda u: math.cos(2 * u) + 0.5, 1.0, h, x0=[1.0] if kind == "dde" else None)
    a = norm_series(simulate(s, H, 8.0, h), "l2", 1.0, kind)
    b = norm_series(simulate(s, H.scaled(alpha), 8.0, h), "l2", 1.0, kind)
    np.testing.assert_allclose(b.values, alpha * a.values, rtol=1e-12, atol=0)
    assert fit_decay(b)[0] == pytest.approx(fit_decay(a)[0], abs=1e-9)


@pytest.mark.parametrize("spec", [scalar_dde(1.0), scalar_dde(0.1), mixed("dde")], ids=["dde1", "dde0.1", "mixed"])
def test_dde_combined_rate_matches_state_rate(spec):
    h = 0.01
    H = HistoryFunction.constant(1.0, 1.0, h, x0=[1.0])
    ser = norm_series(simulate(spec, H, 60.0, h), "l2", 1.0, "dde")
    a = fit_decay(ser, combined=True)[0]
    b = fit_decay(ser, combined=False)[0]
    assert a == pytest.approx(b, rel=0.02)


# -- verdicts ----------------------------------------------------------------------------

def test_verdict_stable_ide():
    v = check_criterion(scalar_ide(0.5), IDE_WINDOW, T=20.0, h=1e-3, norm_kind="sup")
    assert v.verdict == "stable"
    assert 0.62 <= v.fitted_decay_rate <= 0.77
    assert v.fitted_constant >= 1.0
    assert len(v.per_history) >= 3
    assert [f.history_id for f in v.per_history][:2] == ["constant", "sawtooth"]
    # margin form: rates below |alpha| keep finite constants
    assert len(v.margin_constants) == 2 and all(np.isfinite(c) for c in v.margin_constants.values())


def test_verdict_unstable_ide():
    v = check_criterion(scalar_ide(2.0), IDE_WINDOW, T=20.0, h=1e-2, norm_kind="l2")
    assert v.verdict == "unstable"
    assert v.windowed_abscissa == pytest.approx(LN2, abs=1e-4)


def test_verdict_marginal_dde():
    v = check_criterion(scalar_dde(math.pi / 2), DDE_WINDOW, h=1e-2, norm_kind="l2")
    assert v.verdict == "marginal"
    assert abs(v.windowed_abscissa) < 1e-6


def test_verdict_dde_checks_rate_itself():
    v = check_criterion(scalar_dde(1.0), DDE_WINDOW, h=1e-2, norm_kind="l2")
    assert v.verdict == "stable"
    (nu0,) = v.margin_constants
    assert nu0 == pytest.approx(0.3181315052, abs=1e-9)
    assert "no margin" in v.notes or "rate |alpha| itself" in v.notes


def test_verdict_no_roots():
    s = SystemSpec.scalar("ide", a=[0.0], tau=[1.0])
    v = check_criterion(s, IDE_WINDOW, T=10.0, h=0.1, norm_kind="l1")
    assert v.windowed_abscissa is None
    # zero dynamics: x = 0 after tau*, every envelope vanishes
    assert v.verdict == "stable" and all(f.nu_hat == math.inf for f in v.per_history)


def test_battery_is_seeded():
    s = scalar_ide(0.5)
    a = battery(s, 0.1, seed=3)[1][1].values
    b = battery(s, 0.1, seed=3)[1][1].values
    c = battery(s, 0.1, seed=4)[1][1].values
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.any(a < 0) and np.any(a > 0)


def test_default_step_and_horizon():
    s = SystemSpec.scalar("ide", a=[0.1, 0.2], tau=[0.3, 1.0])
    h = default_step(s)
    assert h <= 0.003 + 1e-15
    assert abs(0.3 / h - round(0.3 / h)) < 1e-9
    assert default_horizon(scalar_ide(0.5), -0.01, 0.01) == pytest.approx(2000.0)
    assert default_horizon(scalar_ide(0.5), -2.0, 0.01) == pytest.approx(10.0)
    assert default_horizon(scalar_ide(0.5), 0.0, 0.01) == pytest.approx(1e4)


def test_threads_do_not_change_results(monkeypatch):
    s = mixed("ide")
    a = check_criterion(s, IDE_WINDOW, T=10.0, h=0.01, norm_kind="l2")
    monkeypatch.setenv("DELAYSTAB_THREADS", "3")
    b = check_criterion(s, IDE_WINDOW, T=10.0, h=0.01, norm_kind="l2")
    assert [(f.history_id, f.nu_hat, f.C_hat) for f in a.per_history] == [
        (f.history_id, f.nu_hat, f.C_hat) for f in b.per_history
    ]


def test_report_json_and_norm_csv():
    v = check_criterion(scalar_ide(0.5), IDE_WINDOW, T=10.0, h=0.01, norm_kind="sup")
    d = json.loads(report_json(v, "out/spectrum.csv"))
    assert set(d) == {"windowed_abscissa", "roots_csv_path", "per_history", "verdict", "notes"}
    assert d["verdict"] == "stable"
    assert set(d["per_history"][0]) == {"history_id", "norm_kind", "nu_hat", "C_hat"}
    text = norm_csv(v.per_history[0].series)
    assert text.startswith("t,norm\n0,1\n")
