"""Resolvent measures and the explicit solution formulas."""
import math

import numpy as np

from delaystab import (
    HistoryFunction,
    KernelPiece,
    SystemSpec,
    compute_resolvent,
    differential_resolvent,
    discretize_measure,
    simulate,
    solve_via_resolvent,
)
from delaystab.timedomain import resolvent_residual

# mu = 0.5 delta_1 has resolvent sum (-1)^(k+1) 0.5^k delta_k
rho = compute_resolvent(SystemSpec.scalar("ide", a=[0.5], tau=[1.0]), 6.0, 0.1)
print("rho at t=1..6:", rho.entries[10::10, 0, 0])

# with a kernel the discrete identity holds against an independent quadrature to O(h)
mixed = SystemSpec.scalar("ide", a=[0.3], tau=[1.0], kernel=[KernelPiece(0.0, 1.0, [0.2])])
for h in (1e-2, 1e-3):
    rho = compute_resolvent(mixed, 5.0, h)
    ref = discretize_measure(mixed, h, rule="trapezoid")
    print(f"h={h:g}: max |rho + mu*rho - mu| = {resolvent_residual(ref, rho).max():.3e}")

# x = f - rho * f agrees with stepping
h = 1e-2
X0 = HistoryFunction.constant(1.0, 1.0, h)
diff = solve_via_resolvent(mixed, X0, 5.0, h).values - simulate(mixed, X0, 5.0, h).values
print("IDE formula vs stepping:", np.abs(diff).max())

# fundamental solution of x' + x(t - 1) = 0 against its closed form
r = differential_resolvent(SystemSpec.scalar("dde", a=[1.0], tau=[1.0]), 5.0, 1e-3)
t = r.times
exact = sum(np.where(t >= k, (-1) ** k * np.clip(t - k, 0, None) ** k / math.factorial(k), 0) for k in range(6))
print("r(t) closed-form error:", np.abs(r.values[:, 0, 0] - exact).max())

# x = r x0 + r * f for the DDE
dde = SystemSpec.scalar("dde", a=[0.3], tau=[1.0], kernel=[KernelPiece(0.0, 1.0, [0.2])])
Z0 = HistoryFunction.constant(1.0, 1.0, h, x0=[1.0])
diff = solve_via_resolvent(dde, Z0, 5.0, h).values - simulate(dde, Z0, 5.0, h).values
print("DDE formula vs stepping:", np.abs(diff).max())
