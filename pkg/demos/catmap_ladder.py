"""A linear Anosov testbed: the cat map on the 2-torus.

A segment of a stable leaf plays the role of the conormal bundle.  Tubes
that do not return within a window go to the first good rung; the rest are
refined and retried on a window half as long.  Rung sizes fall off
geometrically, which is what turns into the square-root-of-log gain.
"""

from geobeam.ladder import CatLeaf, CatMapLeafCover, cat_certificate, dyadic_ladder

leaf = CatLeaf.seeded(length=4.0, seed=0)
cover = CatMapLeafCover(leaf, 2.0**-7)
report = cover.looping(2, 2**10)
part = dyadic_ladder(cover, report, 2, 2**10, cat_certificate(cover, 2**10))

print(f"{cover.N} tubes of radius {cover.r}")
for l, rung in enumerate(part.rungs):
    print(f"rung {l}: window [{rung.t:g}, {rung.T:g}]  |G|={len(rung.G)}")
print(f"bad set: {len(part.B)} tubes, fitted rung ratio {part.counts['ratio']:.3f}")
