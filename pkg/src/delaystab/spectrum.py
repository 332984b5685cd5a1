"""Zeros of ``det Delta`` in rectangles, certified by the argument principle.

Boxes are ``(x_min, x_max, y_min, y_max)``.  The winding number of
``det Delta`` around a box boundary is obtained by phase tracking: the
boundary is sampled and refined until successive phase increments stay
below ``pi / 2`` and the logarithmic derivative rules out a full turn
hidden between two samples.  ``find_roots`` quadrisects boxes until each holds at most
one zero, then polishes with Newton's method.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize

from .charmat import delta_batch, delta_prime_batch, det_batch, eval_char, kernel_moment_transform
from .model import Kind, NumericalError, SystemSpec, kernel_l1_norm, matnorm

__all__ = [
    "Box",
    "Root",
    "SpectrumReport",
    "NumericalError",
    "RootNearBoundaryError",
    "winding_number",
    "winding_number_dilated",
    "newton",
    "find_roots",
    "spectral_abscissa",
    "default_window",
    "levin_lower_bound_probe",
    "riemann_lebesgue_probe",
    "spectrum_csv",
    "CLUSTER_SIZE",
    "ROOT_RESIDUAL_TOL",
    "BOUNDARY_TOL",
]

log = logging.getLogger(__name__)

CLUSTER_SIZE = 1e-6
ROOT_RESIDUAL_TOL = 1e-10
BOUNDARY_TOL = 1e-12
MAX_BOUNDARY_SAMPLES = 20_000
MAX_DILATIONS = 5
DILATION = 1.0 + 1e-3
NEWTON_MAXITER = 100
# split ratios tried in turn when a cut passes too close to a zero
_SPLITS = (0.5, 0.5 + 0.0137, 0.5 - 0.0291, 0.5 + 0.0573, 0.5 - 0.0811)


class RootNearBoundaryError(NumericalError):
    """``|det Delta|`` nearly vanishes on the box boundary."""

    def __init__(self, box, z):
        self.box = box
        self.z = z
        super().__init__(f"root near boundary of box {tuple(box)} at z={z:.6g}")


class Box(NamedTuple):
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    @property
    def size(self) -> float:
        return max(self.x_max - self.x_min, self.y_max - self.y_min)

    def contains(self, z: complex) -> bool:
        return self.x_min <= z.real <= self.x_max and self.y_min <= z.imag <= self.y_max

    def dilate(self, factor: float) -> "Box":
        c = self.center
        hx = 0.5 * (self.x_max - self.x_min) * factor
        hy = 0.5 * (self.y_max - self.y_min) * factor
        return Box(c.real - hx, c.real + hx, c.imag - hy, c.imag + hy)

    def reflect(self) -> "Box":
        return Box(self.x_min, self.x_max, -self.y_max, -self.y_min)

    def split(self, rx: float = 0.5, ry: float = 0.5) -> list["Box"]:
        xm = self.x_min + rx * (self.x_max - self.x_min)
        ym = self.y_min + ry * (self.y_max - self.y_min)
        return [
            Box(self.x_min, xm, self.y_min, ym),
            Box(xm, self.x_max, self.y_min, ym),
            Box(self.x_min, xm, ym, self.y_max),
            Box(xm, self.x_max, ym, self.y_max),
        ]


@dataclass(frozen=True)
class Root:
    z: complex
    residual: float
    cluster_count: int = 1
    cluster: bool = False


@dataclass
class SpectrumReport:
    window: Box
    roots: list[Root] = field(default_factory=list)
    total_winding: int = 0
    abscissa: float | None = None
    truncation_note: str = ""

    @property
    def zeros(self) -> np.ndarray:
        return np.array([r.z for r in self.roots], dtype=complex)


# ---------------------------------------------------------------------------
# winding numbers


def _boundary_points(box: Box, u: np.ndarray) -> np.ndarray:
    """Map ``u in [0, 4]`` counterclockwise around the box, one unit per edge."""
    x0, x1, y0, y1 = box
    u = np.asarray(u, dtype=float)
    edge = np.minimum(np.floor(u).astype(int), 3)
    f = u - edge
    x = np.choose(edge, [x0 + f * (x1 - x0), np.full_like(f, x1), x1 - f * (x1 - x0), np.full_like(f, x0)])
    y = np.choose(edge, [np.full_like(f, y0), y0 + f * (y1 - y0), np.full_like(f, y1), y1 - f * (y1 - y0)])
    return x + 1j * y


def _initial_params(spec: SystemSpec, box: Box) -> np.ndarray:
    # e^{-tau z} turns once per 2*pi/tau along the imaginary direction
    density = 8.0 * max(1.0, spec.tau_star)
    parts = []
    for k, length in enumerate(
        (box.x_max - box.x_min, box.y_max - box.y_min, box.x_max - box.x_min, box.y_max - box.y_min)
    ):
        m = max(16, int(math.ceil(density * length)))
        parts.append(k + np.arange(m) / m)
    parts.append(np.array([4.0]))
    return np.concatenate(parts)


def _log_derivative(spec: SystemSpec, z: np.ndarray) -> np.ndarray:
    """``(det Delta)' / det Delta = trace(Delta^{-1} Delta')`` on an array of points."""
    D = delta_batch(spec, z)
    Dp = delta_prime_batch(spec, z)
    if spec.dimension == 1:
        return Dp[:, 0, 0] / D[:, 0, 0]
    with np.errstate(all="ignore"):
        try:
            return np.trace(np.linalg.solve(D, Dp), axis1=1, axis2=2)
        except np.linalg.LinAlgError:
            return np.full(z.shape, np.inf)


def winding_number(
    spec: SystemSpec,
    box: Box,
    boundary_tol: float = BOUNDARY_TOL,
    max_samples: int = MAX_BOUNDARY_SAMPLES,
) -> int:
    """Number of zeros of ``det Delta`` inside ``box`` (counted with multiplicity).

    Raises
    ------
    RootNearBoundaryError
        When ``|det Delta|`` drops below ``boundary_tol`` on a boundary sample.
    NumericalError
        When phase tracking needs more than ``max_samples`` samples.
    """
    box = Box(*map(float, box))
    if not (box.x_max > box.x_min and box.y_max > box.y_min):
        raise ValueError(f"degenerate box {tuple(box)}")
    u = _initial_params(spec, box)
    edges = np.array([box.x_max - box.x_min, box.y_max - box.y_min] * 2)
    z = _boundary_points(box, u)
    vals = det_batch(spec, z)
    speed = np.abs(_log_derivative(spec, z))
    while True:
        small = np.abs(vals) < boundary_tol
        if np.any(small):
            raise RootNearBoundaryError(box, complex(z[small][0]))
        dphi = np.angle(vals[1:] / vals[:-1])
        # arc length times |(det)'/det| estimates the phase turn; aliasing hides
        # turns beyond pi from the increment test alone
        ds = np.diff(u) * edges[np.minimum(np.floor(u[:-1]).astype(int), 3)]
        fast = ds * np.maximum(speed[1:], speed[:-1]) > np.pi
        bad = np.flatnonzero((np.abs(dphi) >= 0.5 * np.pi) | fast)
        if bad.size == 0:
            break
        if u.size + bad.size > max_samples:
            raise NumericalError(
                f"phase tracking on box {tuple(box)} exceeded {max_samples} boundary samples"
            )
        mids = 0.5 * (u[bad] + u[bad + 1])
        mz = _boundary_points(box, mids)
        u = np.insert(u, bad + 1, mids)
        z = np.insert(z, bad + 1, mz)
        vals = np.insert(vals, bad + 1, det_batch(spec, mz))
        speed = np.insert(speed, bad + 1, np.abs(_log_derivative(spec, mz)))
    return int(round(np.sum(dphi) / (2.0 * np.pi)))


def winding_number_dilated(spec: SystemSpec, box: Box, boundary_tol: float = BOUNDARY_TOL) -> tuple[int, Box]:
    """Winding number, dilating the box about its center if a zero sits on its edge.

    Returns the winding and the box it was actually computed on.
    """
    box = Box(*map(float, box))
    for _ in range(MAX_DILATIONS + 1):
        try:
            return winding_number(spec, box, boundary_tol), box
        except RootNearBoundaryError:
            log.debug("root near boundary of %s, dilating", box)
            box = box.dilate(DILATION)
    raise NumericalError(f"root near boundary persists after {MAX_DILATIONS} dilations of {tuple(box)}")


# ---------------------------------------------------------------------------
# root finding


def newton(spec: SystemSpec, z0: complex, maxiter: int = NEWTON_MAXITER, xtol: float = 1e-15):
    """Newton's method on ``det Delta``.  Returns ``(z, converged, iterations)``."""
    z = complex(z0)
    for it in range(1, maxiter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            cv = eval_char(spec, z)
        if not (np.isfinite(cv.det) and np.isfinite(cv.det_derivative)):
            return z0, False, it
        if cv.det == 0:
            return z, True, it
        if cv.det_derivative == 0 or not np.isfinite(cv.det_derivative):
            return z, False, it
        step = cv.det / cv.det_derivative
        z = z - step
        if not np.isfinite(z):
            return z0, False, it
        if abs(step) <= xtol * max(1.0, abs(z)):
            return z, True, it
    return z, False, maxiter


def _residual(spec: SystemSpec, z: complex) -> tuple[float, float]:
    D = delta_batch(spec, np.array([z]))[0]
    det = np.linalg.det(D) if spec.dimension > 1 else D[0, 0]
    return float(abs(det)), max(1.0, matnorm(D))


def _cluster_center(spec: SystemSpec, box: Box, m: int) -> complex:
    """Newton for a zero of multiplicity ``m``; the box center if it fails."""
    z = box.center
    for _ in range(NEWTON_MAXITER):
        with np.errstate(all="ignore"):
            cv = eval_char(spec, z)
        if cv.det == 0 or not (np.isfinite(cv.det_derivative) and cv.det_derivative != 0):
            break
        step = m * cv.det / cv.det_derivative
        z = z - step
        if not (np.isfinite(z) and box.contains(z)):
            return box.center
        if abs(step) <= 1e-15 * max(1.0, abs(z)):
            break
    return z


def _split_box(spec, box, parent_w, boundary_tol):
    last = None
    for r in _SPLITS:
        children = box.split(r, r)
        try:
            ws = [winding_number(spec, c, boundary_tol) for c in children]
        except RootNearBoundaryError as exc:
            last = exc
            continue
        if sum(ws) != parent_w:
            last = NumericalError(f"winding not conserved splitting {tuple(box)}: {parent_w} != {ws}")
            continue
        return list(zip(children, ws))
    raise NumericalError(f"could not split box {tuple(box)} cleanly") from last


def find_roots(
    spec: SystemSpec,
    window: Box | Sequence[float],
    tol: float = ROOT_RESIDUAL_TOL,
    cluster_size: float = CLUSTER_SIZE,
    boundary_tol: float = BOUNDARY_TOL,
) -> SpectrumReport:
    """Locate all zeros of ``det Delta`` in ``window``.

    Winding-1 boxes are polished by Newton from their center; boxes that
    still hold several zeros at side ``< cluster_size`` are reported as a
    single cluster root carrying its winding count.
    """
    window = Box(*map(float, window))
    w, box = winding_number_dilated(spec, window, boundary_tol)
    roots: list[Root] = []
    stack = [(box, w)]
    while stack:
        b, wb = stack.pop()
        if wb == 0:
            continue
        if wb < 0:
            raise NumericalError(f"negative winding {wb} on box {tuple(b)}")
        if wb == 1:
            z, ok, _ = newton(spec, b.center)
            if ok and b.contains(z):
                res, scale = _residual(spec, z)
                if res < tol * scale:
                    roots.append(Root(z, res, 1, False))
                    continue
        if b.size < cluster_size:
            z = b.center
            res, _ = _residual(spec, z)
            roots.append(Root(z, res, wb, True))
            continue
        try:
            stack.extend(_split_box(spec, b, wb, boundary_tol))
        except NumericalError:
            if wb < 2:
                raise
            # a multiple zero flattens |det| below boundary_tol around it
            z = _cluster_center(spec, b, wb)
            res, _ = _residual(spec, z)
            roots.append(Root(z, res, wb, True))
    roots.sort(key=lambda r: (r.z.real, r.z.imag))
    total = sum(r.cluster_count for r in roots)
    absc = max((r.z.real for r in roots), default=None)
    return SpectrumReport(box, roots, total, absc, "")


def default_window(spec: SystemSpec) -> Box:
    """``[-2 g, x_right] x [0, y_max]`` sized from crude bounds on the data.

    ``g`` grows with the log of the total measure mass over the first delay;
    ``y_max = max(20, 10 * 2 pi / tau_1)``.
    """
    mass = sum(matnorm(A) for A in spec.matrices) + kernel_l1_norm(spec)
    tau1 = spec.delays[0] if spec.delays else spec.tau_star
    g = 1.0 + math.log1p(mass) / tau1
    x_right = 1.0
    y_max = max(20.0, 10.0 * 2.0 * math.pi / tau1)
    if spec.kind is Kind.DDE:
        # |z| <= ||mu_hat(z)|| <= mass on the closed right half-plane
        x_right = max(1.0, mass + 0.5)
        y_max = max(y_max, mass + 1.0)
    elif mass >= 1.0:
        x_right = max(1.0, math.log(mass) / tau1 + 0.5)
    return Box(-2.0 * g, x_right, 0.0, y_max)


def spectral_abscissa(
    spec: SystemSpec,
    window: Box | Sequence[float] | None = None,
    tol: float = ROOT_RESIDUAL_TOL,
    report: SpectrumReport | None = None,
) -> tuple[float | None, str]:
    """Largest real part of the zeros found in ``window`` plus a truncation note.

    ``None`` means no zero was found in the window.
    """
    if report is None:
        window = default_window(spec) if window is None else Box(*map(float, window))
        report = find_roots(spec, window, tol)
    win = report.window
    note = (
        f"windowed: only Re z in [{win.x_min:.6g}, {win.x_max:.6g}], Im z in "
        f"[{win.y_min:.6g}, {win.y_max:.6g}] searched; |Im z| > {win.y_max:.6g} unexplored."
    )
    if spec.kernel.empty:
        note += " No distributed kernel: det Delta is an exponential polynomial in z."
    else:
        beta = max(abs(win.x_min), abs(win.x_max))
        ys = [win.y_max, 10.0 * win.y_max, 100.0 * win.y_max]
        probe = riemann_lebesgue_probe(spec, beta, ys)
        vals = ", ".join(f"y={y:.4g}: {v:.3e}" for y, v in probe)
        note += (
            " Kernel transform sup_x |R(x+iy)| over |x| <= "
            f"{beta:.4g} decays ({vals}), so high zeros follow those of the pointwise part."
        )
    report.truncation_note = note
    return report.abscissa, note


# ---------------------------------------------------------------------------
# probes


def levin_lower_bound_probe(
    spec: SystemSpec,
    beta: float,
    delta: float,
    y_max: float,
    grid_step: float,
    roots: Sequence[complex] | None = None,
) -> tuple[float, complex]:
    """Empirical ``min |det Delta|`` on ``|Re z| < beta - delta, |Im z| <= y_max``
    away from the ``delta``-disks around every zero.

    ``roots`` defaults to the zeros found in ``[-beta, beta] x [-(y_max + delta), y_max + delta]``.
    """
    if not (0 < delta < beta):
        raise ValueError(f"need 0 < delta < beta, got delta={delta}, beta={beta}")
    if roots is None:
        rep = find_roots(spec, Box(-beta, beta, 0.0, y_max + delta))
        zs = rep.zeros
        roots = np.concatenate([zs, np.conj(zs[np.abs(zs.imag) > 0])])
    roots = np.asarray(roots, dtype=complex)
    half = beta - delta
    k = int(math.floor(half / grid_step))
    xs = grid_step * np.arange(-k, k + 1)
    xs = xs[np.abs(xs) < half]
    m = int(math.floor(y_max / grid_step + 1e-9))
    ys = grid_step * np.arange(-m, m + 1)
    Z = (xs[None, :] + 1j * ys[:, None]).ravel()
    if roots.size:
        dist = np.min(np.abs(Z[:, None] - roots[None, :]), axis=1)
        Z = Z[dist >= delta]
    if Z.size == 0:
        raise ValueError("the delta-disks around the zeros cover the whole sample window")
    vals = np.abs(det_batch(spec, Z))
    i = int(np.argmin(vals))
    return float(vals[i]), complex(Z[i])


def riemann_lebesgue_probe(spec: SystemSpec, beta: float, y_list: Sequence[float]) -> list[tuple[float, float]]:
    """``[(y, sup_{|x| <= beta} |R(x + i y)|)]`` for each ``y``.

    The sup is taken on a grid of step ``beta / 100`` and refined by a bounded
    scalar search around the best grid point.
    """
    out = []
    if spec.kernel.empty:
        return [(float(y), 0.0) for y in y_list]

    def absR(x, y):
        R = kernel_moment_transform(spec, np.atleast_1d(x) + 1j * y)
        return np.array([matnorm(M) for M in R])

    step = beta / 100.0
    xs = np.linspace(-beta, beta, 201)
    for y in y_list:
        vals = absR(xs, y)
        i = int(np.argmax(vals))
        best = float(vals[i])
        lo, hi = max(-beta, xs[i] - step), min(beta, xs[i] + step)
        res = optimize.minimize_scalar(
            lambda x: -absR(x, y)[0], bounds=(lo, hi), method="bounded", options={"xatol": 1e-10}
        )
        best = max(best, float(-res.fun))
        out.append((float(y), best))
    return out


def spectrum_csv(report: SpectrumReport) -> str:
    """``re,im,residual,cluster_count`` rows ordered by real part descending."""
    rows = sorted(report.roots, key=lambda r: (-r.z.real, r.z.imag))
    lines = ["re,im,residual,cluster_count"]
    for r in rows:
        lines.append(f"{r.z.real:.17g},{r.z.imag:.17g},{r.residual:.17g},{r.cluster_count}")
    return "\n".join(lines) + "\n"
