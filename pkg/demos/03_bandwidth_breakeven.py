#!/usr/bin/env python3
"""When does compressing before sending actually save time?

Takes one measured compression outcome and walks a bandwidth range,
comparing send-raw time against compress+send+decompress. Above the
break-even bandwidth the codec overhead stops paying for itself.
"""

import numpy as np

from fedzip import (
    CostInputs,
    NetworkModel,
    breakeven_bandwidth,
    transfer_time,
    worthwhile,
)

# a 230 MB update shrinking 12.6x with 3.4 s total codec overhead,
# the flavor of numbers a mid-size vision model produces
cost = CostInputs(t_c=1.7, t_d=1.7, s_bytes=230_000_000, s_prime_bytes=18_240_000)

b_star = breakeven_bandwidth(cost)
print(f"break-even bandwidth: {b_star / 1e6:.0f} Mbps")
print()
print(f"{'bandwidth':>12} {'send raw':>10} {'compressed':>11} {'worthwhile':>11}")
print("-" * 48)

for bw in np.geomspace(1e6, 1e10, 13):
    model = NetworkModel(float(bw))
    raw = transfer_time(cost.s_bytes, model)
    comp = cost.t_c + cost.t_d + transfer_time(cost.s_prime_bytes, model)
    mark = "yes" if worthwhile(cost, model) else "no"
    print(f"{bw / 1e6:>9.1f} Mb {raw:>9.1f}s {comp:>10.1f}s {mark:>11}")

print()
print("sanity: strictly worthwhile just below the break-even, not at it")
print("  0.99 * B*:", worthwhile(cost, NetworkModel(0.99 * b_star)))
print("  1.01 * B*:", worthwhile(cost, NetworkModel(1.01 * b_star)))
