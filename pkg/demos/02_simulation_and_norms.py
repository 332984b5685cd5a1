"""Simulate from a history and watch the state norms decay."""
import math

import numpy as np

from delaystab import HistoryFunction, KernelPiece, SystemSpec, simulate
from delaystab.stability import fit_decay, norm_series, partial_trajectory

h = 0.01
ide = SystemSpec.scalar("ide", a=[0.5], tau=[1.0])
X0 = HistoryFunction.constant(1.0, tau_star=1.0, step=h)
traj = simulate(ide, X0, T=5.0, h=h)

# piecewise constant solution: -0.5, 0.25, -0.125, ...
for t in (0.0, 0.5, 1.0, 2.0, 3.0):
    print(f"x({t}) = {traj.at(t)[0]:+.4f}")

# the state at time t is the whole window [t - 1, t]
w = partial_trajectory(traj, 1.0, tau_star=1.0)
print("window at t=1 holds", w.shape[0], "samples, first", w[0, 0], "last", w[-1, 0])

for kind in ("l1", "l2", "sup", "bv"):
    ser = norm_series(traj, kind, tau_star=1.0)
    nu, C = fit_decay(ser)
    print(f"{kind:>4}: ||X_t|| at t=0,1,2 = {ser.values[[0, 100, 200]].round(4)}, nu_hat={nu:.6f}, C_hat={C:.3f}")
print("ln 2 =", math.log(2))

# a distributed kernel smooths the staircase
mixed = SystemSpec.scalar("ide", a=[0.3], tau=[1.0], kernel=[KernelPiece(0.0, 1.0, [0.2])])
Y0 = HistoryFunction.from_function(lambda s: math.cos(3 * s), 1.0, h)
traj = simulate(mixed, Y0, 10.0, h)
ser = norm_series(traj, "l2", 1.0)
print("\nmixed system: nu_hat =", fit_decay(ser)[0])

# DDE: the state is the window plus the point value
dde = SystemSpec.scalar("dde", a=[1.0], tau=[1.0])
Z0 = HistoryFunction.constant(1.0, 1.0, h, x0=[1.0])
ser = norm_series(simulate(dde, Z0, 40.0, h), "l2", 1.0, kind="dde")
print("DDE a=1: nu_hat of ||X_t|| + |X(t)| =", fit_decay(ser)[0], "(root real part -0.318131...)")
print("point values |X(t)| at t=10, 20:", np.round(ser.point_values[[1000, 2000]], 6))
