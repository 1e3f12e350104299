"""How the bound scales when the cover shrinks with h.

Synthetic ladder counts with rung ratio 1/5 are fed through the
tangent-space schedule.  Multiplying by sqrt(log 1/h) gives a nearly flat
curve, the log improvement over the classical bound.
"""

import numpy as np

from geobeam.bound import ConstantsLedger, evaluate_bound, ladder_counts, make_schedule

ledger = ConstantsLedger.standard(0.1, c_tilde=0.02)
hs = np.geomspace(1e-6, 1e-2, 9)
sched = make_schedule("tangentSpace", 0.04, hs, ledger)

print("   h        R(h)     T0(h)    bound   bound*sqrt(log 1/h)")
for h in hs:
    R, T0 = float(sched.R(h)), float(sched.T0(h))
    est = evaluate_bound(ladder_counts(1.0, R, 1, 1.0, T0, ratio=0.2), h, ledger, sched)
    print(f"{h:8.1e}  {R:7.4f}  {T0:7.2f}  {est.bound:7.4f}  {est.bound * np.sqrt(np.log(1 / h)):7.4f}")
