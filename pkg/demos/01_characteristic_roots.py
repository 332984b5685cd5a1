"""Characteristic roots of x(t) + 0.5 x(t - 1) = 0 and a delay differential cousin."""
import math

import numpy as np

from delaystab import Box, SystemSpec, char_det, find_roots, spectral_abscissa, winding_number

# det Delta(z) = 1 + 0.5 exp(-z) vanishes on ln 0.5 + i(2k+1)pi
ide = SystemSpec.scalar("ide", a=[0.5], tau=[1.0])
print("det Delta(ln 2 + i pi) =", char_det(ide, math.log(2) + 1j * math.pi))

# the argument principle counts zeros inside a rectangle
for box in [Box(-1, 0, 3, 3.3), Box(1, 2, 0, 1), Box(-1, 0, 0, 10)]:
    print(tuple(box), "->", winding_number(ide, box), "zeros")

report = find_roots(ide, Box(-2, 1, 0, 20))
for r in report.roots:
    print(f"  z = {r.z.real:+.12f} {r.z.imag:+.12f}i   |det| = {r.residual:.1e}")

exact = math.log(0.5) + 1j * math.pi * np.array([1, 3, 5])
print("max distance to closed form:", np.max(np.abs(np.sort_complex(report.zeros) - exact)))

# x'(t) + x(t - 1) = 0: one dominant complex pair
dde = SystemSpec.scalar("dde", a=[1.0], tau=[1.0])
alpha, note = spectral_abscissa(dde, Box(-2, 1, 0, 4))
print("\nDDE a=1 abscissa:", alpha)
print(note)

# Hayes boundary: a = pi/2 puts a root exactly on the imaginary axis
hayes = SystemSpec.scalar("dde", a=[math.pi / 2], tau=[1.0])
print("Hayes abscissa:", spectral_abscissa(hayes, Box(-2, 1, 0, 4))[0])
