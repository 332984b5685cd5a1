"""Spectrum versus simulation: the stability verdict."""
import math

from delaystab import Box, KernelPiece, SystemSpec, check_criterion

cases = [
    ("IDE a=0.5", SystemSpec.scalar("ide", a=[0.5], tau=[1.0]), Box(-2, 1, 0, 20), "sup"),
    ("IDE a=2", SystemSpec.scalar("ide", a=[2.0], tau=[1.0]), Box(-2, 1, 0, 20), "sup"),
    ("IDE a=0.9", SystemSpec.scalar("ide", a=[0.9], tau=[1.0]), Box(-2, 1, 0, 20), "bv"),
    ("DDE a=1", SystemSpec.scalar("dde", a=[1.0], tau=[1.0]), Box(-2, 1, 0, 4), "l2"),
    ("DDE a=pi/2", SystemSpec.scalar("dde", a=[math.pi / 2], tau=[1.0]), Box(-2, 1, 0, 4), "l2"),
    ("mixed IDE", SystemSpec.scalar("ide", a=[0.3], tau=[1.0], kernel=[KernelPiece(0, 1, [0.2])]),
     Box(-3, 1, 0, 20), "l1"),
]

for name, spec, window, norm in cases:
    v = check_criterion(spec, window, h=1e-2, norm_kind=norm)
    print(f"{name:>11}: abscissa={v.windowed_abscissa:+.6f} verdict={v.verdict}")
    for f in v.per_history:
        print(f"             {f.history_id:<28} nu_hat={f.nu_hat:+.6f} C_hat={f.C_hat:.3f}")
    if v.margin_constants:
        print("             margin constants:", {round(k, 4): round(c, 3) for k, c in v.margin_constants.items()})
