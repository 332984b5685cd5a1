"""``delaystab`` command line.

Exit codes: 0 success, 2 invalid input (parse, validation, missing history,
bad probe parameters), 3 numerical failure, 4 inconsistent verdict.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

from .model import CommensurabilityError, Kind, NumericalError, SpecValidationError, load
from .spectrum import (
    BOUNDARY_TOL,
    ROOT_RESIDUAL_TOL,
    Box,
    default_window,
    find_roots,
    levin_lower_bound_probe,
    riemann_lebesgue_probe,
    spectral_abscissa,
    spectrum_csv,
)
from .stability import NormKind, check_criterion, default_step, fit_decay, norm_csv, norm_series, report_json
from .timedomain import simulate, trajectory_csv

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_INCONSISTENT = 4

LEVIN_GRID_STEP = 0.05
RL_Y = (10.0, 100.0, 1000.0)


class UsageError(ValueError):
    """Bad combination of command-line options."""


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    spec_path: Path
    window: tuple[float, float, float] | None = None
    horizon: float | None = None
    step: float | None = None
    norm: str | None = None
    tol: float = ROOT_RESIDUAL_TOL
    boundary_tol: float = BOUNDARY_TOL
    out: Path = Path(".")
    probe: str = "levin"
    beta: float | None = None
    delta: float | None = None
    seed: int = 0

    def box(self, spec) -> Box:
        if self.window is None:
            return default_window(spec)
        x_min, x_max, y_max = self.window
        if not (x_min < x_max and y_max > 0):
            raise UsageError(f"--window: need XMIN < XMAX and YMAX > 0, got {self.window}")
        return Box(x_min, x_max, 0.0, y_max)


def _fmt(x) -> str:
    return "none" if x is None else f"{x:.17g}"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _default_norm(spec) -> str:
    return "sup" if spec.kind is Kind.IDE else "l2"


def cmd_analyze(cfg: RunConfig) -> int:
    spec, _ = load(cfg.spec_path)
    report = find_roots(spec, cfg.box(spec), cfg.tol, boundary_tol=cfg.boundary_tol)
    alpha, note = spectral_abscissa(spec, report=report)
    _write(cfg.out / "spectrum.csv", spectrum_csv(report))
    if alpha is None:
        print("abscissa=none-in-window")
    else:
        print(f"abscissa={_fmt(alpha)} windowed=true")
    print(f"roots={len(report.roots)} winding={report.total_winding}")
    print(f"note: {note}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    spec, history = load(cfg.spec_path)
    if history is None:
        raise SpecValidationError(["history: required for simulate"])
    if spec.kind is Kind.DDE and history.x0 is None:
        raise SpecValidationError(["x0: required for DDE simulate"])
    h = history.step
    if cfg.step is not None and not math.isclose(cfg.step, h, rel_tol=1e-12):
        raise UsageError(f"--step {cfg.step} differs from the history step {h}")
    T = cfg.horizon if cfg.horizon is not None else 10.0 * spec.tau_star
    if T < spec.tau_star:
        raise UsageError(f"--horizon must be >= tau_star={spec.tau_star}, got {T}")
    nk = NormKind.parse(cfg.norm or _default_norm(spec))
    traj = simulate(spec, history, T, h)
    series = norm_series(traj, nk, spec.tau_star, spec.kind)
    _write(cfg.out / "trajectory.csv", trajectory_csv(traj))
    _write(cfg.out / "norms.csv", norm_csv(series))
    try:
        nu, C = fit_decay(series)
        print(f"nu_hat={_fmt(nu)} C_hat={_fmt(C)} norm={nk.label}")
    except ValueError as exc:
        print(f"nu_hat=nan C_hat=nan norm={nk.label} ({exc})")
    return EXIT_OK


def _slug(history_id: str) -> str:
    return re.sub(r"[^a-z0-9]+", "", history_id.split("(")[0].lower()) or "history"


def cmd_verify(cfg: RunConfig) -> int:
    spec, _ = load(cfg.spec_path)
    h = cfg.step if cfg.step is not None else default_step(spec)
    v = check_criterion(
        spec, cfg.box(spec), T=cfg.horizon, h=h, norm_kind=cfg.norm or _default_norm(spec), seed=cfg.seed,
        root_tol=cfg.tol,
    )
    _write(cfg.out / "spectrum.csv", spectrum_csv(v.spectrum))
    for f in v.per_history:
        _write(cfg.out / f"norms_{_slug(f.history_id)}.csv", norm_csv(f.series))
    # relative to report.json so outputs do not depend on --out
    _write(cfg.out / "report.json", report_json(v, "spectrum.csv"))
    print(f"verdict={v.verdict} abscissa={_fmt(v.windowed_abscissa)}")
    for f in v.per_history:
        print(f"  {f.history_id}: nu_hat={_fmt(f.nu_hat)} C_hat={_fmt(f.C_hat)}")
    return EXIT_INCONSISTENT if v.verdict == "inconsistent" else EXIT_OK


def cmd_probe(cfg: RunConfig) -> int:
    spec, _ = load(cfg.spec_path)
    if cfg.probe == "levin":
        if cfg.beta is None or cfg.delta is None:
            raise UsageError("levin probe needs --beta and --delta")
        if not (0 < cfg.delta < cfg.beta):
            raise UsageError(f"need 0 < delta < beta, got delta={cfg.delta}, beta={cfg.beta}")
        y0 = cfg.window[2] if cfg.window is not None else 20.0
        rows = ["y_max,empirical_min"]
        for y in (y0, 2 * y0, 4 * y0):
            m, _ = levin_lower_bound_probe(spec, cfg.beta, cfg.delta, y, LEVIN_GRID_STEP)
            rows.append(f"{_fmt(y)},{_fmt(m)}")
            print(f"y_max={y:g} empirical_min={m:.6g}")
        _write(cfg.out / "levin.csv", "\n".join(rows) + "\n")
    else:
        beta = cfg.beta if cfg.beta is not None else 1.0
        if beta <= 0:
            raise UsageError(f"--beta must be positive, got {beta}")
        rows = ["y,sup_x_absR"]
        for y, v in riemann_lebesgue_probe(spec, beta, RL_Y):
            rows.append(f"{_fmt(y)},{_fmt(v)}")
            print(f"y={y:g} sup_x_absR={v:.6g}")
        _write(cfg.out / "rl.csv", "\n".join(rows) + "\n")
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "verify": cmd_verify, "probe": cmd_probe}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delaystab", description="Stability analysis of linear delay equations.")
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("spec", type=Path, help="spec JSON file")
    p.add_argument("--window", nargs=3, type=float, metavar=("XMIN", "XMAX", "YMAX"))
    p.add_argument("--horizon", type=float, metavar="T")
    p.add_argument("--step", type=float, metavar="H")
    p.add_argument("--norm", choices=["l1", "l2", "linf", "sup", "bv"])
    p.add_argument("--tol", type=float, default=ROOT_RESIDUAL_TOL, metavar="T", help="root residual tolerance")
    p.add_argument("--out", type=Path, default=Path("."), metavar="DIR")
    p.add_argument("--probe", choices=["levin", "rl"], default="levin")
    p.add_argument("--beta", type=float, metavar="B")
    p.add_argument("--delta", type=float, metavar="D")
    p.add_argument("--seed", type=int, default=0, help="seed for the sawtooth history phases")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    if ns.step is not None and not ns.step > 0:
        raise UsageError(f"--step must be positive, got {ns.step}")
    return RunConfig(
        subcommand=ns.subcommand,
        spec_path=ns.spec,
        window=tuple(ns.window) if ns.window else None,
        horizon=ns.horizon,
        step=ns.step,
        norm=ns.norm,
        tol=ns.tol,
        out=ns.out,
        probe=ns.probe,
        beta=ns.beta,
        delta=ns.delta,
        seed=ns.seed,
    )


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        return COMMANDS[cfg.subcommand](cfg)
    except SpecValidationError as exc:
        for v in exc.violations:
            print(f"error: {v}", file=sys.stderr)
        return EXIT_INVALID
    except (CommensurabilityError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
