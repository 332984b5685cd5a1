"""Numerical probes of two structural facts used by the stability proofs."""
import math

from delaystab import KernelPiece, SystemSpec, levin_lower_bound_probe, riemann_lebesgue_probe

# the kernel transform R(x + iy) dies out as |y| grows
box_kernel = SystemSpec.scalar("ide", tau_star=1.0, kernel=[KernelPiece(0.0, 1.0, [1.0])])
ramp_kernel = SystemSpec.scalar("ide", tau_star=1.0, kernel=[KernelPiece(0.0, 1.0, [0.0, 1.0])])
for name, spec in [("N = 1", box_kernel), ("N = s", ramp_kernel)]:
    vals = riemann_lebesgue_probe(spec, beta=1.0, y_list=[10, 100, 1000])
    print(name, " ".join(f"y={y:g}: {v:.4g}" for y, v in vals))
# for N = 1, |R| = |1 - exp(-z)| / |z| <= (1 + e) / y on |x| <= 1
print("(1 + e) / 10 =", (1 + math.e) / 10)

# away from its zeros |det Delta| stays bounded below on a vertical strip
ide = SystemSpec.scalar("ide", a=[0.5], tau=[1.0])
for y_max in (20, 40, 80):
    m, z = levin_lower_bound_probe(ide, beta=1.0, delta=0.3, y_max=y_max, grid_step=0.05)
    print(f"y_max={y_max}: min |det Delta| = {m:.4f} at {z:.2f}")
