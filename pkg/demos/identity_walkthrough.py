"""One static run, then the three measured quantities and the identity that ties them.

    python demos/identity_walkthrough.py [n] [seed]
"""

import sys

from netcap import SimConfig, run, verify_identity

n = int(sys.argv[1]) if len(sys.argv) > 1 else 256
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0

m = run(SimConfig(n=n, T=20_000, seed=seed))
print(f"n={n}  r={m.r:.4f}  guard={m.C * m.r:.4f}  packing bound={m.packing_bound}")
print(f"E(Y)   mean concurrent links    {m.ey_hat:.4f}   (peak {m.y_max})")
print(f"k      transmissions per packet {m.k_hat:.4f}")
print(f"eta    delivered per second     {m.eta_hat:.4f}")
print(f"E(Y) W / k                      {m.ey_hat * m.W / m.k_hat:.4f}")
print(f"residual {verify_identity(m):.5f}   stable {m.stable}")
