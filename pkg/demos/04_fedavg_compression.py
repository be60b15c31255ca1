#!/usr/bin/env python3
"""Federated averaging with and without update compression.

Runs the simulator three times on the same task and seeds: no codec, a
conservative 1e-2 relative bound, and an absurd 0.5 bound. The middle
one keeps accuracy while cutting communication; the loose one wrecks
training, which is the point of picking the bound carefully.
"""

from fedzip import CodecSpec, ErrorBound, NetworkModel
from fedzip.flsim import FLConfig, SyntheticTask, run_experiment

task = SyntheticTask(seed=1)
network = NetworkModel(10e6)  # a 10 Mbps uplink

configs = {
    "uncompressed": None,
    "rel 1e-2": CodecSpec("predict_quantize", ErrorBound("relative", 1e-2)),
    "rel 0.5": CodecSpec("predict_quantize", ErrorBound("relative", 0.5)),
}

reports = {}
for label, spec in configs.items():
    cfg = FLConfig(rounds=20, seed=1, task=task, network=network, codec_spec=spec)
    reports[label] = run_experiment(cfg)

print(f"{'round':>5}", *(f"{label:>14}" for label in reports), sep="")
for r in range(0, 20, 2):
    row = [f"{r:>5}"]
    for rep in reports.values():
        row.append(f"{rep.rounds[r].accuracy:>14.3f}")
    print("".join(row))

print()
print(f"{'config':<14} {'final acc':>10} {'ratio':>7} {'comm s/20 rounds':>17}")
print("-" * 52)
for label, rep in reports.items():
    print(f"{label:<14} {rep.final_accuracy:>10.3f} {rep.mean_ratio:>7.2f} "
          f"{rep.total_comm_seconds:>17.3f}")
