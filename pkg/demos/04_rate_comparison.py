"""Learned filter against random ones, and against spending more measurements.

Every method gets the same classifier and training budget; only the
measurement filter differs. The exhaustive search row is the ceiling.
"""

import dataclasses

import numpy as np

from ccsbeam import ScenarioConfig, TrainConfig, baseline_random_ccs, evaluate, generate_dataset
from ccsbeam.evaluation import baseline_random_unstructured, exhaustive_report
from ccsbeam.net import quantize_and_retrain, train

grid = [0.0, 5.0, 10.0, 15.0]
train_ds, test_ds = generate_dataset(ScenarioConfig(seed=1), 5000, 1000)
cfg = TrainConfig(epochs=10, m=10, seed=5, omega_seed=3)
omega = cfg.omega(train_ds.n)

params, _ = train(train_ds, cfg, omega=omega)
params, _ = quantize_and_retrain(params, train_ds, cfg, omega=omega)
reports = [evaluate(params, test_ds, omega, grid, np.random.default_rng(9))]

budget = dataclasses.replace(cfg, epochs=2 * cfg.epochs)
for m in (10, 40):
    bcfg = dataclasses.replace(budget, m=m)
    reports.append(baseline_random_ccs(train_ds, test_ds, bcfg, 3, np.random.default_rng(11), grid))
    reports.append(baseline_random_unstructured(train_ds, test_ds, bcfg, 3, np.random.default_rng(12), grid))
reports.append(exhaustive_report(test_ds, grid))

print(f"{'method':20s} {'M':>4s}  rate at {grid} dB")
for r in reports:
    print(f"{r.method:20s} {r.m:4d}  {np.round(r.mean_rate, 2)}")
