"""Forged workers versus robust aggregation on a small classification task.

Fifteen workers, three of them forging, train a logistic separator with
per-step privacy noise and worker momentum. The forged submissions follow
either the standard-deviation attack (little) or the scaled-mean attack
(empire); the run is repeated for two server-side rules.
"""

import numpy as np

from byzdp import (AttackSpec, GarSpec, PrivacyParams, RunConfig, gaussian_blobs,
                   logistic_model, run)

DATA = gaussian_blobs(2, 2000, 10, half_sep=0.8, axis_std=0.5, cross_std=0.8)
MODEL = logistic_model(10, lam=1e-4)
B, STEPS = 50, 150


def train(rule, f, attack):
    config = RunConfig(
        model=MODEL, dataset=DATA, gar=GarSpec(rule, 15, f), attack=attack,
        b=B, steps=STEPS, privacy=PrivacyParams(0.2, 1e-5, 2.0, B, DATA.m),
        schedule="constant", gamma=0.5, momentum=0.9, master_seed=1)
    result = run(config)
    return result.max_accuracy, result.records[-1].accuracy


print(f"m = {DATA.m}, d = 10, b = {B}, T = {STEPS}, "
      f"per-step budget (0.2, 1e-5)\n")
print(f"{'rule':8s} {'attack':8s} {'max acc':>8s} {'final acc':>10s}")
best, final = train("average", 0, AttackSpec("none"))
print(f"{'average':8s} {'none':8s} {best:8.3f} {final:10.3f}   (noise only)")
for attack_kind in ("little", "empire"):
    for rule in ("mda", "median", "krum"):
        best, final = train(rule, 3, AttackSpec(attack_kind))
        print(f"{rule:8s} {attack_kind:8s} {best:8.3f} {final:10.3f}")
