"""Grid simulation of IDE/DDE trajectories and of their resolvents.

Conventions on the grid ``t_j = j h``:

* Trajectories are right-continuous at ``t = 0``: the sample at ``0`` is the
  solution value ``x(0)`` and the history ``X0`` is used on ``[-tau*, 0)``.
  The history sample ``X0(0)`` only enters as a left limit (the distributed
  term and, for DDEs, the derivative jumps at ``t = tau_k``).
* The forcing ``f`` is stored right-continuously, so at ``t = tau_k`` the
  atom ``A_k`` acts on ``x(0)`` and not on ``X0(0)``.
* Distributed convolutions use the composite trapezoid rule with one-sided
  kernel values at nodes; atoms sit exactly on the grid.

With those conventions both schemes are discrete Volterra equations in the
trapezoid node measure ``W``::

    IDE:  x_j + sum_i W_i x_{j-i} = f_j + c_j x_0
    DDE:  x_{j+1} = x_j + h/2 (g+_j + g-_{j+1}),
          g+_j = f_j + c_j x_0 - sum_i W_i x_{j-i}

where ``c_j = (h/2) N(t_j+)`` corrects the trapezoid end weight at lag
``t_j`` while ``t_j < tau*``, and ``g-`` differs from ``g+`` only at
``t = tau_k`` by ``A_k (x_0 - X0(0))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .charmat import delta_batch
from .model import (
    GridMeasure,
    HistoryFunction,
    Kind,
    NumericalError,
    SystemSpec,
    Trajectory,
    _kernel_one_sided,
    check_commensurate,
    discretize_measure,
    grid_size,
    matnorm,
)

__all__ = [
    "ForcingFunction",
    "build_forcing",
    "simulate_ide",
    "simulate_dde",
    "simulate",
    "compute_resolvent",
    "differential_resolvent",
    "resolvent_residual",
    "solve_via_resolvent",
    "null_vector",
    "build_modal_history",
    "modal_trajectory",
    "trajectory_csv",
    "resolvent_csv",
]

# above this many nonzero lags the per-step convolution switches to a dense einsum
_DENSE_LAGS = 16
_SINGULAR_COND = 1e12


@dataclass(frozen=True)
class ForcingFunction:
    """History-induced forcing on ``[0, tau*]``; zero afterwards.

    ``values`` are right limits, ``left_values`` left limits (they differ
    only at the pointwise delays).
    """

    step: float
    values: np.ndarray
    left_values: np.ndarray

    def extended(self, length: int, side: str = "+") -> np.ndarray:
        v = self.values if side == "+" else self.left_values
        out = np.zeros((length,) + v.shape[1:])
        k = min(length, v.shape[0])
        out[:k] = v[:k]
        return out


@dataclass(frozen=True)
class _Grid:
    J: int
    W: np.ndarray  # trapezoid node measure incl. atoms, (J + 1, n, n)
    c: np.ndarray  # end-weight correction (h/2) N(t_j+), (J + 1, n, n)
    atom_lags: tuple[int, ...]
    lags: np.ndarray  # nonzero lags >= 1


def _grid(spec: SystemSpec, h: float) -> _Grid:
    J = check_commensurate(spec, h)
    W = discretize_measure(spec, h, rule="trapezoid").entries.copy()
    nodes = h * np.arange(J + 1)
    c = 0.5 * h * _kernel_one_sided(spec, nodes, "+")
    atom_lags = tuple(int(round(t / h)) for t in spec.delays)
    nz = np.flatnonzero(np.any(W[1:] != 0, axis=(1, 2))) + 1
    return _Grid(J, W, c, atom_lags, nz)


def _lag_sum(g: _Grid, x: np.ndarray, j0: int, j1: int) -> np.ndarray:
    """``sum_{i >= 1} W_i x_{j-i}`` for ``j in [j0, j1)``; ``x_k = 0`` for ``k < 0``."""
    out = np.zeros((j1 - j0,) + x.shape[1:])
    if g.lags.size == 0:
        return out
    if j1 - j0 == 1 and g.lags.size > _DENSE_LAGS:
        j = j0
        imax = min(g.J, j)
        if imax >= 1:
            # x[j-1], x[j-2], ..., x[j-imax]
            out[0] = np.einsum("iab,ibc->ac", g.W[1 : imax + 1], x[j - imax : j][::-1])
        return out
    for i in g.lags:
        lo = max(j0, i)
        if lo < j1:
            out[lo - j0 :] += np.matmul(g.W[i], x[lo - i : j1 - i])
    return out


def _block_size(g: _Grid) -> int:
    if np.any(g.W[0] != 0) or g.lags.size == 0:
        return 1 if g.lags.size else 1 << 30
    return int(g.lags[0])


def _implicit(M: np.ndarray) -> np.ndarray | None:
    if not np.any(M != np.eye(M.shape[0])):
        return None
    if np.linalg.cond(M) > _SINGULAR_COND:
        raise NumericalError(
            "lag-0 correction matrix I + (h/2) N(0) is singular; the discrete equation is not well posed"
        )
    return np.linalg.inv(M)


def _check_history(spec: SystemSpec, history: HistoryFunction, h: float) -> int:
    if abs(history.step - h) > 1e-12 * h:
        raise ValueError(f"history step {history.step} does not match simulation step {h}")
    J = check_commensurate(spec, h)
    if history.values.shape != (J + 1, spec.dimension):
        raise ValueError(
            f"history must have shape ({J + 1}, {spec.dimension}), got {history.values.shape}"
        )
    return J


def build_forcing(spec: SystemSpec, history: HistoryFunction, h: float) -> ForcingFunction:
    """``f(t) = - int_t^tau* mu(ds) X0(t - s)`` on the grid of ``[0, tau*]``."""
    J = _check_history(spec, history, h)
    g = _grid(spec, h)
    X0 = history.values
    n = spec.dimension
    f = np.zeros((J + 1, n))
    for tau, A in zip(spec.delays, spec.matrices):
        L = int(round(tau / h))
        # atoms acting strictly inside the history: t_j - tau_k < 0
        f[:L] -= X0[J - L : J] @ A.T
    if not spec.kernel.empty:
        Wk = 0.5 * h * (
            _kernel_one_sided(spec, h * np.arange(J + 1), "+")
            + _kernel_one_sided(spec, h * np.arange(J + 1), "-")
        )
        Nm_half = Wk - g.c  # (h/2) N(t_j-)
        for j in range(J + 1):
            # lags i = j..J read X0 at index J + j - i
            seg = X0[j : J + 1][::-1]
            f[j] -= np.einsum("iab,ib->a", Wk[j:], seg) - Nm_half[j] @ X0[J]
    fl = f.copy()
    for tau, A in zip(spec.delays, spec.matrices):
        L = int(round(tau / h))
        fl[L] -= A @ X0[J]
    return ForcingFunction(h, f, fl)


def _steps(T: float, h: float) -> int:
    return grid_size(T, h)


def _ide_solve(g: _Grid, b: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """Solve ``x_j + sum_i W_i x_{j-i} = b_j`` (``j >= 1``) with ``x_0`` given."""
    M = b.shape[0]
    x = np.zeros_like(b)
    x[0] = x0
    inv = _implicit(np.eye(g.W.shape[1]) + g.W[0])
    L = _block_size(g)
    j = 1
    while j < M:
        j1 = min(M, j + L)
        rhs = b[j:j1] - _lag_sum(g, x, j, j1)
        x[j:j1] = rhs if inv is None else np.matmul(inv, rhs)
        j = j1
    return x


def _dde_solve(g: _Grid, f: np.ndarray, x0: np.ndarray, jump: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid stepping of ``x' = f + c x_0 - W * x`` with derivative jumps."""
    M = f.shape[0]
    n = g.W.shape[1]
    x = np.zeros_like(f)
    x[0] = x0
    cx = np.zeros_like(f)
    k = min(M, g.J + 1)
    cx[:k] = np.matmul(g.c[:k], x0)
    gp = np.zeros_like(f)  # g+ with all terms once x is known
    gp[0] = f[0] + cx[0] - g.W[0] @ x0
    inv = _implicit(np.eye(n) + 0.5 * h * g.W[0])
    L = _block_size(g)
    j = 0  # x known up to index j
    while j < M - 1:
        j1 = min(M - 1, j + L)  # compute x[j+1 .. j1]
        idx = slice(j + 1, j1 + 1)
        # g+ without the lag-0 term for indices j+1..j1 (lags >= L are known)
        part = f[idx] + cx[idx] - _lag_sum(g, x, j + 1, j1 + 1)
        if inv is None:
            gp[idx] = part
            incr = 0.5 * h * (gp[j:j1] + gp[idx] + jump[idx])
            x[idx] = x[j] + np.cumsum(incr, axis=0)
        else:
            # block size is 1 here
            rhs = x[j] + 0.5 * h * (gp[j] + part[0] + jump[j + 1])
            x[j + 1] = inv @ rhs
            gp[j + 1] = part[0] - g.W[0] @ x[j + 1]
        j = j1
    return x


def simulate_ide(spec: SystemSpec, history: HistoryFunction, T: float, h: float) -> Trajectory:
    """Time-march the IDE from ``history`` up to ``T``.

    Returns a trajectory on ``[-tau*, T]`` whose samples on ``[-tau*, 0)``
    are the history and whose sample at ``0`` is ``x(0) = f(0)``.
    """
    if spec.kind is not Kind.IDE:
        raise ValueError("simulate_ide needs an IDE spec")
    if T < spec.tau_star - 1e-12:
        raise ValueError(f"horizon T={T} must be at least tau_star={spec.tau_star}")
    J = _check_history(spec, history, h)
    g = _grid(spec, h)
    M = _steps(T, h) + 1
    f = build_forcing(spec, history, h).extended(M)[..., None]
    x0 = f[0]
    k = min(M, J + 1)
    b = f.copy()
    b[:k] += np.matmul(g.c[:k], x0)
    x = _ide_solve(g, b, x0)[..., 0]
    vals = np.concatenate([history.values[:J], x])
    return Trajectory(h, -spec.tau_star, vals, "stepping")


def simulate_dde(spec: SystemSpec, history: HistoryFunction, T: float, h: float) -> Trajectory:
    """Trapezoidal integration of the DDE; ``X(0) = history.x0``."""
    if spec.kind is not Kind.DDE:
        raise ValueError("simulate_dde needs a DDE spec")
    if history.x0 is None:
        raise ValueError("DDE simulation needs x0")
    J = _check_history(spec, history, h)
    g = _grid(spec, h)
    M = _steps(T, h) + 1
    f = build_forcing(spec, history, h).extended(M)[..., None]
    x0 = history.x0[:, None]
    jump = np.zeros_like(f)
    for L, A in zip(g.atom_lags, spec.matrices):
        if L < M:
            jump[L] += A @ (x0 - history.values[J][:, None])
    x = _dde_solve(g, f, x0, jump, h)[..., 0]
    vals = np.concatenate([history.values[:J], x])
    return Trajectory(h, -spec.tau_star, vals, "stepping")


def simulate(spec: SystemSpec, history: HistoryFunction, T: float, h: float) -> Trajectory:
    if spec.kind is Kind.IDE:
        return simulate_ide(spec, history, T, h)
    return simulate_dde(spec, history, T, h)


def compute_resolvent(spec: SystemSpec, T: float, h: float) -> GridMeasure:
    """Resolvent ``rho`` of the cell-discretized measure on ``[0, T]``.

    Solves ``rho_j + sum_{i=0}^{j} mu_i rho_{j-i} = mu_j`` forward in ``j``;
    ``mu_0`` only carries the kernel mass of ``[0, h)``.
    """
    if spec.kind is not Kind.IDE:
        raise ValueError("the resolvent is defined for IDE specs; use differential_resolvent for DDEs")
    mu = discretize_measure(spec, h).entries
    J = mu.shape[0] - 1
    M = _steps(T, h) + 1
    n = spec.dimension
    lags = np.flatnonzero(np.any(mu[1:] != 0, axis=(1, 2))) + 1
    g = _Grid(J, mu, np.zeros_like(mu), (), lags)
    b = np.zeros((M, n, n))
    k = min(M, J + 1)
    b[:k] = mu[:k]
    inv = _implicit(np.eye(n) + mu[0])
    rho0 = b[0] if inv is None else inv @ b[0]
    return GridMeasure(h, _ide_solve(g, b, rho0))


def _causal_conv(a: np.ndarray, b: np.ndarray, length: int) -> np.ndarray:
    """``(a * b)_j = sum_{i=0}^{j} a_i b_{j-i}`` for matrix sequences."""
    out = np.zeros((length,) + np.broadcast_shapes(a.shape[1:], b.shape[1:])[:-1] + (b.shape[-1],))
    # loop over the shorter sequence
    if np.count_nonzero(np.any(a != 0, axis=(1, 2))) <= np.count_nonzero(np.any(b != 0, axis=(1, 2))):
        for i in np.flatnonzero(np.any(a[:length] != 0, axis=(1, 2))):
            out[i:] += np.matmul(a[i], b[: length - i])
    else:
        for i in np.flatnonzero(np.any(b[:length] != 0, axis=(1, 2))):
            out[i:] += np.matmul(a[: length - i], b[i])
    return out


def resolvent_residual(mu: GridMeasure, rho: GridMeasure, side: str = "left") -> np.ndarray:
    """Entrywise norms of ``rho + mu * rho - mu`` (``side="right"``: ``rho * mu``).

    ``mu`` may be any grid measure of the same step, e.g. an independent
    quadrature of the same continuous measure.
    """
    if abs(mu.step - rho.step) > 1e-12 * rho.step:
        raise ValueError("step mismatch")
    L = rho.support_length
    m = np.zeros_like(rho.entries)
    k = min(L, mu.support_length)
    m[:k] = mu.entries[:k]
    if side == "left":
        conv = _causal_conv(m, rho.entries, L)
    elif side == "right":
        conv = _causal_conv(rho.entries, m, L)
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    res = rho.entries + conv - m
    return np.array([matnorm(r) for r in res])


def differential_resolvent(spec: SystemSpec, T: float, h: float) -> Trajectory:
    """Fundamental matrix ``r`` with ``r' + mu * r = 0``, ``r(0) = I``, on ``[0, T]``."""
    if spec.kind is not Kind.DDE:
        raise ValueError("the differential resolvent is defined for DDE specs")
    g = _grid(spec, h)
    n = spec.dimension
    M = _steps(T, h) + 1
    f = np.zeros((M, n, n))
    eye = np.eye(n)
    jump = np.zeros_like(f)
    for L, A in zip(g.atom_lags, spec.matrices):
        if L < M:
            jump[L] += A
    r = _dde_solve(g, f, eye, jump, h)
    return Trajectory(h, 0.0, r, "stepping")


def solve_via_resolvent(spec: SystemSpec, history: HistoryFunction, T: float, h: float) -> Trajectory:
    """Solution from the explicit resolvent formulas.

    IDE: ``x = f - rho * f``.  DDE: ``x = r x0 + r * f`` with the
    convolution integral taken by the trapezoid rule on one-sided values of
    ``f``.
    """
    J = _check_history(spec, history, h)
    M = _steps(T, h) + 1
    forcing = build_forcing(spec, history, h)
    fp = forcing.extended(M)[..., None]
    if spec.kind is Kind.IDE:
        rho = compute_resolvent(spec, T, h).entries
        x = fp - _causal_conv(rho, fp, M)
    else:
        if history.x0 is None:
            raise ValueError("DDE needs x0")
        r = differential_resolvent(spec, T, h).values
        fm = forcing.extended(M, "-")[..., None]
        x = np.matmul(r, history.x0[:, None])
        # sum_{i=0}^{j-1} r_{j-i} f+_i  +  sum_{i=1}^{j} r_{j-i} f-_i
        r_no0 = r.copy()
        r_no0[0] = 0.0
        fm[0] = 0.0
        x = x + 0.5 * h * (_causal_conv(r_no0, fp, M) + _causal_conv(r, fm, M))
    vals = np.concatenate([history.values[:J], x[..., 0]])
    return Trajectory(h, -spec.tau_star, vals, "resolvent-formula")


def null_vector(spec: SystemSpec, z0: complex, tol: float = 1e-10) -> np.ndarray:
    """Unit vector spanning the (numerical) kernel of ``Delta(z0)``.

    The phase is fixed so that the largest component is real and positive.

    Raises
    ------
    ValueError
        ``"not a root"`` when the smallest singular value exceeds
        ``tol * max(1, ||Delta(z0)||)``.
    """
    D = delta_batch(spec, np.array([z0]))[0]
    _, s, vh = np.linalg.svd(D)
    if s[-1] > tol * max(1.0, s[0]):
        raise ValueError(f"not a root: smallest singular value of Delta({z0}) is {s[-1]:.3e}")
    v = vh[-1].conj()
    k = int(np.argmax(np.abs(v)))
    v = v * (abs(v[k]) / v[k])
    return v / np.linalg.norm(v)


def build_modal_history(spec: SystemSpec, z0: complex, h: float, tol: float = 1e-10) -> HistoryFunction:
    """History ``s -> Re(exp(z0 s) v0)`` on ``[-tau*, 0]`` (and ``x0 = Re v0`` for DDEs)."""
    v = null_vector(spec, z0, tol)
    J = grid_size(spec.tau_star, h)
    s = h * (np.arange(J + 1) - J)
    vals = np.real(np.exp(z0 * s)[:, None] * v[None, :])
    x0 = np.real(v) if spec.kind is Kind.DDE else None
    return HistoryFunction(h, vals, x0)


def modal_trajectory(spec: SystemSpec, z0: complex, T: float, h: float, tol: float = 1e-10) -> Trajectory:
    """Closed form ``Re(exp(z0 t) v0)`` on ``[-tau*, T]``."""
    v = null_vector(spec, z0, tol)
    J = grid_size(spec.tau_star, h)
    M = _steps(T, h)
    t = h * (np.arange(J + M + 1) - J)
    vals = np.real(np.exp(z0 * t)[:, None] * v[None, :])
    return Trajectory(h, -spec.tau_star, vals, "modal-closed-form")


def trajectory_csv(traj: Trajectory) -> str:
    """``t,x1,...,xn`` with 17 significant digits."""
    vals = traj.values.reshape(traj.values.shape[0], -1)
    n = vals.shape[1]
    lines = ["t," + ",".join(f"x{i + 1}" for i in range(n))]
    for t, row in zip(traj.times, vals):
        lines.append(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def resolvent_csv(traj: Trajectory) -> str:
    """``t,r11,...,rnn`` for a matrix-valued trajectory."""
    n = traj.values.shape[1]
    head = ",".join(f"r{i + 1}{j + 1}" for i in range(n) for j in range(n))
    lines = ["t," + head]
    for t, M in zip(traj.times, traj.values):
        lines.append(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in M.ravel()))
    return "\n".join(lines) + "\n"
