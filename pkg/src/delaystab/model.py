"""Equation data, initial data and grid measures.

A system is described by pointwise delay terms ``(tau_k, A_k)`` and a
piecewise polynomial kernel ``N`` on ``[0, tau_star]``.  The associated delay
measure is

    mu(ds) = sum_k A_k delta_{tau_k}(ds) + N(s) ds,

supported in ``[0, tau_star]`` and without an atom at zero.  Everything here
is immutable; the numerical modules only read these objects.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "Kind",
    "KernelPiece",
    "PiecewiseKernel",
    "SystemSpec",
    "HistoryFunction",
    "GridMeasure",
    "Trajectory",
    "SpecValidationError",
    "CommensurabilityError",
    "NumericalError",
    "find_violations",
    "validate",
    "kernel_value",
    "discretize_measure",
    "grid_size",
    "measure_total_variation",
    "spec_from_dict",
    "spec_to_dict",
    "loads",
    "dumps",
    "load",
    "matnorm",
]

MAX_KERNEL_DEGREE = 3
_GRID_RTOL = 1e-9


class Kind(str, enum.Enum):
    IDE = "ide"
    DDE = "dde"


class SpecValidationError(ValueError):
    """Raised when a system violates its structural invariants.

    ``violations`` holds one human-readable message per problem.
    """

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NumericalError(RuntimeError):
    """A numerical procedure could not reach a trustworthy answer."""


class CommensurabilityError(ValueError):
    """A delay or the horizon is not an integer multiple of the grid step."""

    def __init__(self, message: str, suggested_step: float | None = None):
        self.suggested_step = suggested_step
        super().__init__(message)


def matnorm(m) -> float:
    """Operator 2-norm of a matrix (Euclidean norm for vectors)."""
    m = np.asarray(m)
    if m.ndim <= 1:
        return float(np.linalg.norm(m))
    return float(np.linalg.norm(m, 2))


@dataclass(frozen=True)
class KernelPiece:
    """Matrix polynomial ``sum_m coeffs[m] s**m`` on ``[a, b)``."""

    a: float
    b: float
    coeffs: np.ndarray  # shape (degree + 1, n, n)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c.reshape(-1, 1, 1)
        elif c.ndim == 2:
            # list of scalars per degree for n == 1
            c = c.reshape(c.shape[0], 1, 1) if c.shape[1] == 1 else c[None]
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, s):
        """Evaluate at scalar or array ``s``; trailing axes are (n, n)."""
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape + self.coeffs.shape[1:])
        for c in self.coeffs[::-1]:
            out = out * s[..., None, None] + c
        return out

    def antiderivative(self, s):
        """``int_0^s`` of the piece's polynomial (ignores the interval)."""
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape + self.coeffs.shape[1:])
        for m in range(self.degree, -1, -1):
            out = out * s[..., None, None] + self.coeffs[m] / (m + 1)
        return out * s[..., None, None]

    def __eq__(self, other):
        return (
            isinstance(other, KernelPiece)
            and self.a == other.a
            and self.b == other.b
            and np.array_equal(self.coeffs, other.coeffs)
        )

    __hash__ = None


@dataclass(frozen=True)
class PiecewiseKernel:
    pieces: tuple[KernelPiece, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))

    @property
    def empty(self) -> bool:
        return len(self.pieces) == 0

    @property
    def max_degree(self) -> int:
        return max((p.degree for p in self.pieces), default=0)


@dataclass(frozen=True)
class SystemSpec:
    """Linear IDE or DDE with finitely many pointwise delays and a kernel.

    IDE:  X(t) + sum_k A_k X(t - tau_k) + int_0^tau* N(s) X(t - s) ds = 0
    DDE:  X'(t) + (same delay terms) = 0
    """

    kind: Kind
    dimension: int
    tau_star: float
    delays: tuple[float, ...] = ()
    matrices: tuple[np.ndarray, ...] = ()
    kernel: PiecewiseKernel = field(default_factory=PiecewiseKernel)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "tau_star", float(self.tau_star))
        object.__setattr__(self, "delays", tuple(float(t) for t in self.delays))
        mats = []
        for m in self.matrices:
            m = np.array(m, dtype=float)
            if m.ndim == 0:
                m = m.reshape(1, 1)
            m.setflags(write=False)
            mats.append(m)
        object.__setattr__(self, "matrices", tuple(mats))
        if not isinstance(self.kernel, PiecewiseKernel):
            object.__setattr__(self, "kernel", PiecewiseKernel(tuple(self.kernel)))

    @classmethod
    def scalar(cls, kind, a=(), tau=(), tau_star=None, kernel=()):
        """Convenience constructor for ``n = 1``.

        >>> SystemSpec.scalar("ide", a=[0.5], tau=[1.0]).tau_star
        1.0
        """
        a = list(np.atleast_1d(a)) if np.size(a) else []
        tau = list(np.atleast_1d(tau)) if np.size(tau) else []
        if tau_star is None:
            ends = [p.b for p in kernel] if kernel else []
            tau_star = max(tau + ends) if (tau or ends) else 1.0
        mats = [np.array([[float(x)]]) for x in a]
        return cls(kind, 1, tau_star, tuple(tau), tuple(mats), PiecewiseKernel(tuple(kernel)))

    @property
    def n(self) -> int:
        return self.dimension

    @property
    def delay_terms(self):
        return list(zip(self.delays, self.matrices))

    def shifted(self, c: float) -> "SystemSpec":
        """System whose IDE characteristic roots are those of ``self`` plus ``c``.

        ``A_k -> A_k exp(-tau_k c)`` and ``N(s) -> N(s) exp(-s c)``; the
        exponential factor on the kernel is only representable for an empty
        kernel, so this is restricted to pointwise-delay systems.
        """
        if not self.kernel.empty:
            raise ValueError("shift is only supported for systems without a kernel")
        mats = tuple(m * math.exp(-t * c) for t, m in zip(self.delays, self.matrices))
        return SystemSpec(self.kind, self.dimension, self.tau_star, self.delays, mats, self.kernel)

    def __eq__(self, other):
        return (
            isinstance(other, SystemSpec)
            and self.kind == other.kind
            and self.dimension == other.dimension
            and self.tau_star == other.tau_star
            and self.delays == other.delays
            and len(self.matrices) == len(other.matrices)
            and all(np.array_equal(x, y) for x, y in zip(self.matrices, other.matrices))
            and self.kernel == other.kernel
        )

    __hash__ = None


@dataclass(frozen=True)
class HistoryFunction:
    """Grid samples of the initial segment on ``[-tau_star, 0]``.

    ``values[i]`` is ``X0(-tau_star + i * step)``; the last row is the value
    at ``0`` (left limit for a DDE, whose ``X(0)`` is ``x0``).
    """

    step: float
    values: np.ndarray  # shape (J + 1, n)
    x0: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "step", float(self.step))
        if self.x0 is not None:
            x0 = np.atleast_1d(np.array(self.x0, dtype=float))
            x0.setflags(write=False)
            object.__setattr__(self, "x0", x0)

    @classmethod
    def from_function(cls, func, tau_star, step, n=1, x0=None):
        """Sample ``func(s)`` (returning a length-``n`` vector) on the grid."""
        J = grid_size(tau_star, step)
        s = -tau_star + step * np.arange(J + 1)
        vals = np.array([np.atleast_1d(func(si)) for si in s], dtype=float).reshape(J + 1, n)
        return cls(step, vals, x0)

    @classmethod
    def constant(cls, value, tau_star, step, x0=None):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        J = grid_size(tau_star, step)
        return cls(step, np.tile(value, (J + 1, 1)), x0)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def tau_star(self) -> float:
        return self.step * (self.values.shape[0] - 1)

    @property
    def times(self) -> np.ndarray:
        J = self.values.shape[0] - 1
        return self.step * (np.arange(J + 1) - J)

    def scaled(self, alpha: float) -> "HistoryFunction":
        return HistoryFunction(
            self.step, alpha * self.values, None if self.x0 is None else alpha * self.x0
        )


@dataclass(frozen=True)
class GridMeasure:
    """Matrix measure sampled on a uniform grid.

    ``entries[j]`` is the mass attributed to grid index ``j`` (the cell
    ``[j h, (j + 1) h)`` for the default cell rule).
    """

    step: float
    entries: np.ndarray  # shape (L, n, n)

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "step", float(self.step))

    @property
    def support_length(self) -> int:
        return self.entries.shape[0]

    def __len__(self):
        return self.entries.shape[0]

    def total_variation(self) -> float:
        return float(sum(matnorm(m) for m in self.entries))


class Provenance(str, enum.Enum):
    STEPPING = "stepping"
    RESOLVENT_FORMULA = "resolvent-formula"
    MODAL_CLOSED_FORM = "modal-closed-form"


@dataclass(frozen=True)
class Trajectory:
    """Uniform-grid samples starting at ``start``.

    ``values`` has shape ``(N, n)`` for state trajectories or ``(N, n, n)``
    for resolvent-type matrix trajectories.
    """

    step: float
    start: float
    values: np.ndarray
    provenance: str = Provenance.STEPPING.value

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "provenance", Provenance(self.provenance).value)

    @property
    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.values.shape[0])

    def index_of(self, t: float) -> int:
        k = (t - self.start) / self.step
        i = int(round(k))
        if abs(k - i) > 1e-7 * max(1.0, abs(k)):
            raise ValueError(f"time {t!r} is not on the trajectory grid")
        return i

    def at(self, t: float) -> np.ndarray:
        return self.values[self.index_of(t)]

    def segment(self, t0: float, t1: float) -> np.ndarray:
        return self.values[self.index_of(t0) : self.index_of(t1) + 1]


# ---------------------------------------------------------------------------
# validation


def find_violations(spec: SystemSpec) -> list[str]:
    """List every broken structural invariant of ``spec`` (empty if valid)."""
    out = []
    n = spec.dimension
    if n < 1:
        out.append(f"dimension must be a positive integer, got {n}")
    if not spec.tau_star > 0 or not math.isfinite(spec.tau_star):
        out.append(f"tau_star must be positive, got {spec.tau_star}")
    if len(spec.delays) != len(spec.matrices):
        out.append("delay_terms: number of delays and matrices differ")
    for k in range(1, len(spec.delays)):
        if not spec.delays[k] > spec.delays[k - 1]:
            out.append("delays not strictly increasing")
            break
    for k, tau in enumerate(spec.delays):
        if not (0 < tau <= spec.tau_star):
            out.append(f"delay_terms[{k}]: delay {tau} outside (0, tau_star={spec.tau_star}]")
    for k, m in enumerate(spec.matrices):
        if m.shape != (n, n):
            out.append(f"delay_terms[{k}]: dimension mismatch, A has shape {m.shape}, expected ({n}, {n})")
        elif not np.all(np.isfinite(m)):
            out.append(f"delay_terms[{k}]: A has non-finite entries")

    pieces = spec.kernel.pieces
    if pieces:
        expect = 0.0
        for i, p in enumerate(pieces):
            if p.coeffs.shape[1:] != (n, n):
                out.append(
                    f"kernel[{i}]: dimension mismatch, coefficients have shape "
                    f"{p.coeffs.shape[1:]}, expected ({n}, {n})"
                )
            if p.degree > MAX_KERNEL_DEGREE:
                out.append(f"kernel[{i}]: degree {p.degree} exceeds {MAX_KERNEL_DEGREE}")
            if not p.b > p.a:
                out.append(f"kernel[{i}]: empty or reversed interval [{p.a},{p.b})")
            if _close(p.a, expect):
                pass
            elif p.a > expect:
                out.append(f"kernel gap at [{_fmt(expect)},{_fmt(p.a)})")
            else:
                out.append(f"kernel overlap at [{_fmt(p.a)},{_fmt(expect)})")
            expect = max(expect, p.b)
        if not _close(expect, spec.tau_star):
            if expect < spec.tau_star:
                out.append(f"kernel gap at [{_fmt(expect)},{_fmt(spec.tau_star)})")
            else:
                out.append(f"kernel extends beyond tau_star to {_fmt(expect)}")
    return out


def validate(spec: SystemSpec) -> SystemSpec:
    """Return ``spec`` unchanged if it is well formed.

    Raises
    ------
    SpecValidationError
        Carrying the full list of violations.
    """
    v = find_violations(spec)
    if v:
        raise SpecValidationError(v)
    return spec


def _close(a, b):
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def _fmt(x):
    return f"{x:g}"


# ---------------------------------------------------------------------------
# kernel evaluation and discretization


def kernel_value(spec: SystemSpec, s: float) -> np.ndarray:
    """``N(s)`` from the piece owning ``s``; the last piece is closed at ``tau_star``."""
    s = float(s)
    if not (0.0 <= s <= spec.tau_star):
        raise ValueError(f"s={s} outside the kernel domain [0, {spec.tau_star}]")
    n = spec.dimension
    pieces = spec.kernel.pieces
    if not pieces:
        return np.zeros((n, n))
    for p in pieces:
        if p.a <= s < p.b:
            return p(s)
    return pieces[-1](s)


def _kernel_one_sided(spec: SystemSpec, s: np.ndarray, side: str) -> np.ndarray:
    """Right (``side="+"``) or left (``"-"``) limits of ``N`` at nodes ``s``.

    Outside ``[0, tau_star]`` the kernel is zero, so ``N^-(0) = N^+(tau*) = 0``.
    """
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape + (spec.dimension, spec.dimension))
    for p in spec.kernel.pieces:
        if side == "+":
            mask = (s >= p.a) & (s < p.b)
        else:
            mask = (s > p.a) & (s <= p.b)
        if np.any(mask):
            out[mask] = p(s[mask])
    return out


def _kernel_cumulative(spec: SystemSpec, s: np.ndarray) -> np.ndarray:
    """``int_0^s N`` evaluated exactly from the polynomial antiderivatives."""
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape + (spec.dimension, spec.dimension))
    for p in spec.kernel.pieces:
        lo = np.clip(s, p.a, p.b)
        out += p.antiderivative(lo) - p.antiderivative(np.full_like(lo, p.a))
    return out


def grid_size(length: float, h: float) -> int:
    """Integer ``length / h``; raises when ``h`` does not divide ``length``."""
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    k = length / h
    j = int(round(k))
    if abs(k - j) > _GRID_RTOL * max(1.0, k):
        raise CommensurabilityError(f"{length} is not an integer multiple of step {h}")
    return j


def _suggest_step(values: Sequence[float], h: float) -> float:
    fracs = [Fraction(v).limit_denominator(10**6) for v in values]
    num = 0
    den = 1
    for f in fracs:
        den = den * f.denominator // math.gcd(den, f.denominator)
    for f in fracs:
        num = math.gcd(num, int(f * den))
    g = num / den
    m = max(1, math.ceil(g / h - 1e-12))
    return g / m


def check_commensurate(spec: SystemSpec, h: float) -> int:
    """Return ``J = tau_star / h`` after checking every delay lands on the grid."""
    bad = []
    for tau in (spec.tau_star, *spec.delays):
        k = tau / h
        if abs(k - round(k)) > _GRID_RTOL * max(1.0, k):
            bad.append(tau)
    if bad:
        sugg = _suggest_step((spec.tau_star, *spec.delays), h)
        raise CommensurabilityError(
            f"delay(s) {', '.join(_fmt(b) for b in bad)} not integer multiples of step h={h}; "
            f"try h={sugg:.17g}",
            suggested_step=sugg,
        )
    return int(round(spec.tau_star / h))


def discretize_measure(spec: SystemSpec, h: float, rule: str = "cell") -> GridMeasure:
    """Sample the delay measure on a grid of step ``h``.

    Parameters
    ----------
    rule : {"cell", "trapezoid"}
        ``"cell"``: entry ``j`` holds the exact kernel mass of
        ``[j h, (j + 1) h)`` plus atoms at ``j h``.  ``"trapezoid"``: entry
        ``j`` holds the composite trapezoid node weight of the kernel
        (averaging one-sided values at breakpoints) plus atoms.

    The result has ``tau_star / h + 1`` entries and no atom at zero.
    """
    J = check_commensurate(spec, h)
    n = spec.dimension
    nodes = h * np.arange(J + 1)
    if rule == "cell":
        F = _kernel_cumulative(spec, np.append(nodes, nodes[-1] + h))
        ent = np.diff(F, axis=0)
    elif rule == "trapezoid":
        ent = 0.5 * h * (_kernel_one_sided(spec, nodes, "+") + _kernel_one_sided(spec, nodes, "-"))
    else:
        raise ValueError(f"unknown rule {rule!r}")
    ent = ent.reshape(J + 1, n, n)
    for tau, A in zip(spec.delays, spec.matrices):
        ent[int(round(tau / h))] += A
    return GridMeasure(h, ent)


def measure_total_variation(spec: SystemSpec) -> float:
    """``sum_k |A_k| + int_0^tau* |N(s)| ds`` with the operator 2-norm."""
    tv = sum(matnorm(A) for A in spec.matrices)
    for p in spec.kernel.pieces:
        val, _ = integrate.quad(lambda s: matnorm(p(s)), p.a, p.b, limit=200, epsabs=1e-13)
        tv += val
    return float(tv)


def kernel_l1_norm(spec: SystemSpec) -> float:
    tv = 0.0
    for p in spec.kernel.pieces:
        val, _ = integrate.quad(lambda s: matnorm(p(s)), p.a, p.b, limit=200, epsabs=1e-13)
        tv += val
    return float(tv)


# ---------------------------------------------------------------------------
# JSON spec files


def spec_to_dict(spec: SystemSpec, history: HistoryFunction | None = None) -> dict:
    d = {
        "kind": spec.kind.value,
        "dimension": spec.dimension,
        "tau_star": spec.tau_star,
        "delay_terms": [{"tau": t, "A": m.tolist()} for t, m in spec.delay_terms],
        "kernel": [
            {"interval": [p.a, p.b], "coeffs": [c.tolist() for c in p.coeffs]}
            for p in spec.kernel.pieces
        ],
    }
    if history is not None:
        d["history"] = {"step": history.step, "values": history.values.tolist()}
        if history.x0 is not None:
            d["x0"] = history.x0.tolist()
    return d


def _as_matrix(x, n, where):
    m = np.array(x, dtype=float)
    if m.ndim == 0 and n == 1:
        m = m.reshape(1, 1)
    if m.ndim != 2:
        raise SpecValidationError([f"{where}: expected an {n}x{n} nested array"])
    return m


def spec_from_dict(d: dict) -> tuple[SystemSpec, HistoryFunction | None]:
    """Build a spec (and optional history) from a parsed JSON document."""
    errs = []
    for key in ("kind", "dimension", "tau_star"):
        if key not in d:
            errs.append(f"missing field '{key}'")
    if errs:
        raise SpecValidationError(errs)
    try:
        kind = Kind(str(d["kind"]).lower())
    except ValueError:
        raise SpecValidationError([f"kind: expected 'ide' or 'dde', got {d['kind']!r}"]) from None
    n = d["dimension"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise SpecValidationError([f"dimension: expected a positive integer, got {n!r}"])
    delays, mats = [], []
    for k, term in enumerate(d.get("delay_terms", [])):
        try:
            delays.append(float(term["tau"]))
            mats.append(_as_matrix(term["A"], n, f"delay_terms[{k}].A"))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SpecValidationError):
                raise
            raise SpecValidationError([f"delay_terms[{k}]: malformed entry ({exc})"]) from None
    pieces = []
    for i, piece in enumerate(d.get("kernel", [])):
        try:
            a, b = piece["interval"]
            coeffs = [_as_matrix(c, n, f"kernel[{i}].coeffs") for c in piece["coeffs"]]
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SpecValidationError):
                raise
            raise SpecValidationError([f"kernel[{i}]: malformed entry ({exc})"]) from None
        pieces.append(KernelPiece(a, b, np.array(coeffs)))
    spec = SystemSpec(kind, n, float(d["tau_star"]), tuple(delays), tuple(mats), PiecewiseKernel(tuple(pieces)))
    validate(spec)

    history = None
    if "history" in d:
        h = d["history"]
        try:
            vals = np.array(h["values"], dtype=float)
            step = float(h["step"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecValidationError([f"history: malformed ({exc})"]) from None
        if vals.ndim == 1:
            vals = vals[:, None]
        x0 = d.get("x0")
        history = HistoryFunction(step, vals, x0)
        _check_history(spec, history)
    elif "x0" in d:
        raise SpecValidationError(["x0 given without history"])
    return spec, history


def _check_history(spec: SystemSpec, history: HistoryFunction):
    errs = []
    if history.values.ndim != 2 or history.values.shape[1] != spec.dimension:
        errs.append(f"history: values must be rows of length {spec.dimension}")
    try:
        J = grid_size(spec.tau_star, history.step)
        if history.values.shape[0] != J + 1:
            errs.append(
                f"history: expected {J + 1} samples covering [-tau_star, 0], got {history.values.shape[0]}"
            )
    except (CommensurabilityError, ValueError) as exc:
        errs.append(f"history: {exc}")
    if history.x0 is not None and history.x0.shape != (spec.dimension,):
        errs.append(f"x0: expected a vector of length {spec.dimension}")
    if errs:
        raise SpecValidationError(errs)


def dumps(spec: SystemSpec, history: HistoryFunction | None = None) -> str:
    """Canonical JSON text (fixed field order, round-trip float repr)."""
    return json.dumps(spec_to_dict(spec, history), indent=2) + "\n"


def loads(text: str) -> tuple[SystemSpec, HistoryFunction | None]:
    """Parse a spec document.

    Raises
    ------
    SpecValidationError
        For malformed JSON (message starts with ``parse error at``) or a
        spec that fails validation.
    """
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecValidationError([f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    if not isinstance(d, dict):
        raise SpecValidationError(["parse error at top level: expected a JSON object"])
    return spec_from_dict(d)


def load(path) -> tuple[SystemSpec, HistoryFunction | None]:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
