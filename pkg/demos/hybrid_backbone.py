"""Adding base stations: capacity against M, at fixed range and at range shrunk as 1/sqrt(M)."""

import math

from netcap.analysis import SweepSpec, aggregate, sweep

n = 512
base = dict(n=n, r=math.sqrt(math.log(n) / n), C=1.5, T=2000)
Ms = (4, 16, 64, 256)

for label, extra in (("fixed range", {}), ("reduced range", {"reduced_range": True})):
    rows = sweep(SweepSpec("hybrid", Ms, seeds=2, fixed={**base, **extra}))
    values, eta, err, _ = aggregate(rows, "eta_hat")
    print(label)
    for M, e, s in zip(values, eta, err):
        print(f"  M={int(M):>4}  eta={e:8.3f} +- {s:.3f}")
    print(f"  growth 4 -> 256: x{eta[-1] / eta[0]:.1f}  (linear would be x{Ms[-1] / Ms[0]:.0f})")
