"""State-space norms along trajectories, decay-rate fits and the verdict.

The state at time ``t`` is the partial trajectory ``X_t(s) = X(t + s)`` on
``[-tau*, 0]``, measured in ``L^p``, sup or BV (total variation plus sup).
Decay rates are fitted on per-window envelopes: the maximum of the norm
series over consecutive windows of length ``tau*`` is regressed in log
scale against the window midpoints.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .model import HistoryFunction, Kind, SystemSpec, Trajectory, _suggest_step, grid_size
from .spectrum import Box, SpectrumReport, default_window, find_roots, spectral_abscissa
from .timedomain import build_modal_history, simulate

__all__ = [
    "NormKind",
    "NormSeries",
    "HistoryFit",
    "CriterionVerdict",
    "partial_trajectory",
    "window_norm",
    "norm_series",
    "fit_decay",
    "battery",
    "default_step",
    "default_horizon",
    "check_criterion",
    "report_json",
    "norm_csv",
    "TOL_MARG",
]

TOL_MARG = 1e-4
FIT_START_WINDOWS = 2.0
HORIZON_CAP_WINDOWS = 1e4


@dataclass(frozen=True)
class NormKind:
    """``kind`` is ``"lp"``, ``"sup"`` or ``"bv"``; ``p`` is used for ``"lp"``."""

    kind: str
    p: float = 2.0

    @classmethod
    def parse(cls, text: "str | NormKind") -> "NormKind":
        if isinstance(text, NormKind):
            return text
        t = str(text).strip().lower()
        if t in ("sup", "binf", "b_inf"):
            return cls("sup")
        if t == "bv":
            return cls("bv")
        if t == "linf":
            return cls("lp", math.inf)
        if t.startswith("l"):
            p = float(t[1:].lstrip("p:") or "nan")
            if not p >= 1:
                raise ValueError(f"L^p norm needs p >= 1, got {text!r}")
            return cls("lp", p)
        raise ValueError(f"unknown norm kind {text!r}")

    def __post_init__(self):
        if self.kind not in ("lp", "sup", "bv"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "lp" and not self.p >= 1:
            raise ValueError(f"L^p norm needs p >= 1, got p={self.p}")

    @property
    def label(self) -> str:
        if self.kind == "lp":
            return "linf" if math.isinf(self.p) else f"l{self.p:g}"
        return self.kind


@dataclass(frozen=True)
class NormSeries:
    norm_kind: NormKind
    times: np.ndarray
    values: np.ndarray
    window_length: float
    point_values: np.ndarray | None = None  # |X(t)|, DDE only

    @property
    def combined(self) -> np.ndarray:
        """``||X_t|| + |X(t)|`` for DDEs, ``||X_t||`` otherwise."""
        if self.point_values is None:
            return self.values
        return self.values + self.point_values


@dataclass(frozen=True)
class HistoryFit:
    history_id: str
    nu_hat: float
    C_hat: float
    norm_kind: str
    series: NormSeries | None = None


@dataclass
class CriterionVerdict:
    windowed_abscissa: float | None
    fitted_decay_rate: float
    fitted_constant: float
    verdict: str
    norm_kind: str
    notes: str = ""
    per_history: list[HistoryFit] = field(default_factory=list)
    spectrum: SpectrumReport | None = None
    margin_constants: dict = field(default_factory=dict)


def _pointwise(values: np.ndarray) -> np.ndarray:
    v = values.reshape(values.shape[0], -1) if values.ndim > 1 else values[:, None]
    if values.ndim == 3:
        return np.array([np.linalg.norm(m, 2) for m in values])
    return np.linalg.norm(v, axis=1)


def partial_trajectory(traj: Trajectory, t: float, tau_star: float) -> np.ndarray:
    """Samples of ``X`` on ``[t - tau*, t]`` (``tau*/h + 1`` of them)."""
    if t < -1e-12:
        raise ValueError(f"t must be nonnegative, got {t}")
    J = grid_size(tau_star, traj.step)
    i = traj.index_of(t)
    if i - J < 0 or i >= traj.values.shape[0]:
        raise ValueError(f"window [{t - tau_star}, {t}] is outside the trajectory")
    return traj.values[i - J : i + 1]


def window_norm(window: np.ndarray, norm_kind, step: float) -> float:
    """Norm of one sampled window.

    ``L^p``: trapezoid rule on ``|X|^p``; sup: max of ``|X|``; BV: discrete
    total variation plus sup.
    """
    nk = NormKind.parse(norm_kind)
    window = np.asarray(window, dtype=float)
    if window.shape[0] == 0:
        raise ValueError("empty window")
    a = _pointwise(window)
    if nk.kind == "sup" or (nk.kind == "lp" and math.isinf(nk.p)):
        return float(a.max())
    if nk.kind == "bv":
        d = np.diff(window.reshape(window.shape[0], -1), axis=0)
        tv = float(np.linalg.norm(d, axis=1).sum()) if window.ndim < 3 else float(
            sum(np.linalg.norm(m, 2) for m in np.diff(window, axis=0))
        )
        return tv + float(a.max())
    ap = a**nk.p
    integral = step * (ap.sum() - 0.5 * (ap[0] + ap[-1]))
    return float(max(integral, 0.0) ** (1.0 / nk.p))


def norm_series(
    traj: Trajectory, norm_kind, tau_star: float, kind: Kind | str = Kind.IDE, t_max: float | None = None
) -> NormSeries:
    """``||X_t||`` at every grid ``t`` in ``[0, T]`` (plus ``|X(t)|`` for DDEs).

    ``traj`` must start at ``-tau*`` or earlier.
    """
    nk = NormKind.parse(norm_kind)
    kind = Kind(kind)
    if kind is Kind.DDE and nk.kind == "sup":
        raise ValueError("the sup (B^inf) state space is only offered for IDEs; use linf for DDEs")
    h = traj.step
    J = grid_size(tau_star, h)
    i0 = traj.index_of(0.0)
    if i0 < J:
        raise ValueError("trajectory does not cover [-tau_star, 0]")
    i1 = traj.values.shape[0] - 1 if t_max is None else traj.index_of(t_max)
    seg = traj.values[i0 - J : i1 + 1]
    a = _pointwise(seg)
    if nk.kind == "sup" or (nk.kind == "lp" and math.isinf(nk.p)):
        vals = sliding_window_view(a, J + 1).max(axis=1)
    elif nk.kind == "bv":
        flat = seg.reshape(seg.shape[0], -1)
        if seg.ndim == 3:
            d = np.array([np.linalg.norm(m, 2) for m in np.diff(seg, axis=0)])
        else:
            d = np.linalg.norm(np.diff(flat, axis=0), axis=1)
        tv = sliding_window_view(d, J).sum(axis=1) if J > 0 else np.zeros(a.size)
        vals = tv + sliding_window_view(a, J + 1).max(axis=1)
    else:
        ap = a**nk.p
        s = sliding_window_view(ap, J + 1).sum(axis=1) - 0.5 * (ap[: ap.size - J] + ap[J:])
        vals = np.maximum(h * s, 0.0) ** (1.0 / nk.p)
    times = h * np.arange(vals.size)
    point = a[J:] if kind is Kind.DDE else None
    return NormSeries(nk, times, vals, tau_star, point)


def fit_decay(
    series: NormSeries, fit_start: float | None = None, x0_norm: float | None = None, combined: bool = True
) -> tuple[float, float]:
    """Fit ``||X_t|| ~ C exp(-nu t)`` on window envelopes.

    Returns ``(nu_hat, C_hat)``.  ``nu_hat`` is ``inf`` when an envelope is
    exactly zero (the solution vanished).
    """
    L = series.window_length
    if fit_start is None:
        fit_start = FIT_START_WINDOWS * L
    y = series.combined if combined else series.values
    t = series.times
    h = t[1] - t[0] if t.size > 1 else L
    per = int(round(L / h))
    i_start = int(round(fit_start / h))
    nwin = (t.size - 1 - i_start) // per
    if nwin < 3:
        raise ValueError(f"need at least 3 windows of length {L} after t={fit_start}, have {nwin}")
    env = np.array([y[i_start + k * per : i_start + (k + 1) * per].max() for k in range(nwin)])
    if np.any(env <= 0):
        return math.inf, 1.0
    mids = t[i_start] + L * (np.arange(nwin) + 0.5)
    slope, intercept = np.polyfit(mids, np.log(env), 1)
    if x0_norm is None:
        x0_norm = float(y[0])
    scale = max(1.0, 1.0 / x0_norm) if x0_norm > 0 else 1.0
    C = max(1.0, math.exp(intercept) * scale)
    return float(-slope), float(C)


# ---------------------------------------------------------------------------
# verdict


def default_step(spec: SystemSpec, per_window: int = 100) -> float:
    """Coarsest grid step commensurate with every delay and ``<= tau_1 / per_window``."""
    tau1 = spec.delays[0] if spec.delays else spec.tau_star
    return _suggest_step((spec.tau_star, *spec.delays), tau1 / per_window)


def default_horizon(spec: SystemSpec, abscissa: float | None, h: float) -> float:
    T = 10.0 * spec.tau_star
    if abscissa is not None and abscissa != 0:
        T = max(T, 20.0 / abs(abscissa))
    elif abscissa == 0:
        T = HORIZON_CAP_WINDOWS * spec.tau_star
    T = min(T, HORIZON_CAP_WINDOWS * spec.tau_star)
    return h * math.ceil(T / h - 1e-9)


def _sawtooth(spec: SystemSpec, h: float, seed: int) -> HistoryFunction:
    rng = np.random.default_rng(seed)
    phases = rng.random(spec.dimension)
    J = grid_size(spec.tau_star, h)
    s = h * (np.arange(J + 1) - J)
    u = 3.0 * (s[:, None] + spec.tau_star) / spec.tau_star + phases[None, :]
    vals = np.where(np.floor(u) % 2 == 0, 1.0, -1.0) * (u - np.floor(u))
    x0 = -np.ones(spec.dimension) if spec.kind is Kind.DDE else None
    return HistoryFunction(h, vals, x0)


def battery(spec: SystemSpec, h: float, report: SpectrumReport | None = None, seed: int = 0):
    """Histories used to probe decay: constant, sawtooth, modal at the rightmost root."""
    n = spec.dimension
    x0 = np.ones(n) if spec.kind is Kind.DDE else None
    out = [("constant", HistoryFunction.constant(np.ones(n), spec.tau_star, h, x0))]
    out.append(("sawtooth", _sawtooth(spec, h, seed)))
    if report is not None and report.roots:
        certified = [r for r in report.roots if not r.cluster] or report.roots
        top = max(certified, key=lambda r: (r.z.real, -abs(r.z.imag)))
        try:
            out.append((f"modal({top.z.real:.6g}{top.z.imag:+.6g}j)", build_modal_history(spec, top.z, h)))
        except ValueError:
            pass
    return out


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DELAYSTAB_THREADS", "1")))
    except ValueError:
        return 1


def check_criterion(
    spec: SystemSpec,
    window: Box | Sequence[float] | None = None,
    T: float | None = None,
    h: float | None = None,
    norm_kind="sup",
    seed: int = 0,
    tol_marg: float = TOL_MARG,
    root_tol: float = 1e-10,
) -> CriterionVerdict:
    """Confront the windowed spectral abscissa with decay fitted from simulations."""
    nk = NormKind.parse(norm_kind)
    window = default_window(spec) if window is None else Box(*map(float, window))
    report = find_roots(spec, window, root_tol)
    alpha, note = spectral_abscissa(spec, report=report)
    if h is None:
        h = default_step(spec)
    if T is None:
        T = default_horizon(spec, alpha, h)

    hist = battery(spec, h, report, seed)

    def run(item):
        hid, H = item
        traj = simulate(spec, H, T, h)
        ser = norm_series(traj, nk, spec.tau_star, spec.kind)
        nu, C = fit_decay(ser)
        return HistoryFit(hid, nu, C, nk.label, ser)

    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        fits = list(ex.map(run, hist))

    nus = [f.nu_hat for f in fits]
    a = -math.inf if alpha is None else alpha
    if alpha is not None and abs(alpha) <= tol_marg:
        verdict = "marginal"
    elif a < -tol_marg and all(nu > 0 for nu in nus):
        verdict = "stable"
    elif a > tol_marg and any(nu < 0 for nu in nus):
        verdict = "unstable"
    else:
        verdict = "inconsistent"

    notes = [note]
    margins = {}
    if verdict == "stable" and alpha is not None:
        nu0 = -alpha
        rates = (0.5 * nu0, 0.9 * nu0) if spec.kind is Kind.IDE else (nu0,)
        for nu in rates:
            Cs = []
            for f in fits:
                y = f.series.combined
                w = y * np.exp(nu * f.series.times)
                Cs.append(float(w.max() / y[0]) if y[0] > 0 else math.inf)
            margins[round(nu, 12)] = max(Cs)
        kind_txt = (
            "IDE: margin rates nu < |alpha| give finite constants"
            if spec.kind is Kind.IDE
            else "DDE: constant at the rate |alpha| itself"
        )
        notes.append(
            kind_txt + " (" + ", ".join(f"nu={k:.6g}: C={v:.4g}" for k, v in margins.items()) + ")"
        )
    notes.append("verdict is windowed: zeros outside the search window are not certified absent")
    return CriterionVerdict(
        windowed_abscissa=alpha,
        fitted_decay_rate=min(nus) if nus else math.nan,
        fitted_constant=max(f.C_hat for f in fits) if fits else math.nan,
        verdict=verdict,
        norm_kind=nk.label,
        notes=" | ".join(notes),
        per_history=fits,
        spectrum=report,
        margin_constants=margins,
    )


def _num(x):
    if x is None:
        return None
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def report_json(v: CriterionVerdict, roots_csv_path: str | None = None) -> str:
    d = {
        "windowed_abscissa": _num(v.windowed_abscissa),
        "roots_csv_path": roots_csv_path,
        "per_history": [
            {"history_id": f.history_id, "norm_kind": f.norm_kind, "nu_hat": _num(f.nu_hat), "C_hat": _num(f.C_hat)}
            for f in v.per_history
        ],
        "verdict": v.verdict,
        "notes": v.notes,
    }
    return json.dumps(d, indent=2) + "\n"


def norm_csv(series: NormSeries, combined: bool = False) -> str:
    """``t,norm`` rows with 17 significant digits."""
    y = series.combined if combined else series.values
    lines = ["t,norm"]
    lines.extend(f"{t:.17g},{v:.17g}" for t, v in zip(series.times, y))
    return "\n".join(lines) + "\n"
