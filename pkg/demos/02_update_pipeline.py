#!/usr/bin/env python3
"""Compress a model state dict into a single update byte stream.

Shows the routing decision per entry (big finite f32 weights go lossy,
everything else stays lossless), the per-entry sizes, and the fidelity
of the reconstruction after a full serialize/deserialize round trip.
"""

import numpy as np

from fedzip import (
    CodecSpec,
    ErrorBound,
    RoutingRule,
    StateDict,
    TensorRecord,
    compress_update,
    decompress_update,
    partition,
)

rng = np.random.default_rng(0)

state = StateDict([
    TensorRecord.from_array("conv1.weight", rng.normal(0, 0.05, (64, 3, 3, 3)).astype(np.float32)),
    TensorRecord.from_array("conv1.bias", rng.normal(0, 0.05, 64).astype(np.float32)),
    TensorRecord.from_array("bn1.running_mean", rng.normal(0, 1, 64)),
    TensorRecord.from_array("bn1.running_var", rng.uniform(0.5, 2, 64)),
    TensorRecord.from_array("fc.weight", rng.normal(0, 0.02, (10, 1024)).astype(np.float32)),
    TensorRecord.from_array("num_batches_tracked", np.array([3125], np.int64)),
])

rule = RoutingRule(name_marker="weight", threshold=1024)
lossy, lossless = partition(state, rule)
print("lossy route:   ", lossy)
print("lossless route:", lossless)
print()

spec = CodecSpec("predict_quantize", ErrorBound("relative", 1e-2))
update = compress_update(state, spec, rule)

print(f"{'entry':<22} {'route':<9} {'raw B':>9} {'blob B':>9}")
print("-" * 52)
for entry in update.entries:
    raw = state[entry.name].nbytes
    print(f"{entry.name:<22} {entry.route:<9} {raw:>9} {len(entry.blob):>9}")

print()
print(f"original bytes   S  = {update.original_bytes}")
print(f"update bytes     S' = {update.compressed_bytes}")
print(f"compression ratio   = {update.ratio:.2f}")

back = decompress_update(update.to_bytes())
print()
for rec in state:
    got = back[rec.name]
    if got.data.tobytes() == rec.data.tobytes():
        print(f"{rec.name:<22} bit-exact")
    else:
        err = np.abs(rec.data.astype(np.float64) - got.data.astype(np.float64)).max()
        print(f"{rec.name:<22} max |error| = {err:.3e}")
