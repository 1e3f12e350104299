"""The flat torus has no conjugate points and only countably many closed
directions through a point, so most tubes never come back.

Here the bad set stays small as the window grows.  Its square root enters
the bound directly, so with a fixed cover radius the bound need not drop
monotonically in T0; the printout shows both terms.
"""

import numpy as np

from geobeam.bound import ConstantsLedger, evaluate_bound
from geobeam.conormal import Submanifold
from geobeam.cover import build_good_cover, classify_looping, partition_single_window, union_nonlooping
from geobeam.manifold import FlatTorus

T2 = FlatTorus(2)
H = Submanifold.point(T2, [1.0, 2.0])
cover = build_good_cover(H, tau=0.5, r=0.02)
print(f"cover: {cover.N} tubes")

report = classify_looping(cover, 1.2, 20.0)
ledger = ConstantsLedger.standard(0.0)
for T0 in (5.0, 10.0, 20.0):
    part = partition_single_window(cover, report, 1.2, T0)
    est = evaluate_bound(part, 1e-3, ledger)
    print(f"T0={T0:4.1f}  |B|={len(part.B):3d}  bad={est.bad_term:6.3f}  good={est.good_term:6.3f}  "
          f"bound={est.bound:7.3f}")

print("good union still non-looping at double probe density:", union_nonlooping(cover, part, 2))
