"""Exact eigenfunctions as ground truth.

Zonal harmonics peak at the pole like sqrt(l), the maximal growth.  Their
equator integrals stay bounded, and torus modes average to a Kronecker delta
along a coordinate circle.
"""

import numpy as np

from geobeam.conormal import Submanifold
from geobeam.eigenlab import average_over, compare_growth, equator, equator_zonal_exact, pole_records, sphere_zonal, torus_eigenfunction
from geobeam.manifold import FlatTorus

fit = compare_growth(pole_records())
print(f"pole values: exponent {fit['fits']['power']['exponent']:.4f}, preferred model {fit['preferred']}")

E = equator()
for l in (16, 32, 64, 128):
    rec = average_over(E, sphere_zonal(l))
    print(f"l={l:4d}  |equator integral|={rec.value:.6f}  exact={abs(equator_zonal_exact(l)):.6f}")

circle = Submanifold.curve(FlatTorus(2), lambda u: np.array([u, 0.0]), (0.0, 2 * np.pi), periodic=True)
for m in [(0, 3), (2, 0), (3, 4)]:
    print(f"torus mode {m}: circle average {average_over(circle, torus_eigenfunction(m)).value:.2e}")
