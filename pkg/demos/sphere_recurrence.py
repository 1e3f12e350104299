"""On the round sphere every geodesic from a point comes back to it after 2 pi.

We cover the unit conormal circle of the north pole with tubes, scan each
tube's orbit for returns and watch every tube land in the bad set once the
window passes 2 pi.  The resulting bound does not improve as h shrinks.
"""

import numpy as np

from geobeam.bound import ConstantsLedger, evaluate_bound
from geobeam.conormal import Submanifold
from geobeam.cover import build_good_cover, classify_looping, partition_single_window
from geobeam.flow import conjugate_points, phase_point, propagate_linearization
from geobeam.manifold import RoundSphere

S2 = RoundSphere(2)

seg = propagate_linearization(S2, phase_point(S2, [1.0, 0, 0], [0, 1.0, 0]), 7.0, step=1e-3)
print("conjugate times along a great circle:", [round(t, 4) for t, _ in conjugate_points(seg).points])

H = Submanifold.point(S2, [0, 0, 1.0])
cover = build_good_cover(H, tau=0.5, r=0.05)
print(f"cover: {cover.N} tubes, {cover.colors.max() + 1} colors")

report = classify_looping(cover, 1.2, 7.0)
for T0 in (5.0, 7.0):
    part = partition_single_window(cover, report, 1.2, T0)
    print(f"T0={T0}: {len(part.B)} of {cover.N} tubes loop")

ledger = ConstantsLedger.standard(0.0)
for h in (1e-2, 1e-3, 1e-4, 1e-5):
    est = evaluate_bound(part, h, ledger)
    print(f"h={h:.0e}  bound={est.bound:.4f}  (flat in h: the classical regime)")
