"""Beam-alignment metrics, the exhaustive-search oracle and random
phase-shift baselines."""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ccsbeam.ccs import random_base
from ccsbeam.net import (
    NetworkParams,
    TrainConfig,
    fc_forward,
    init_params,
    measure_batch,
    noisy,
    stack_features,
    train,
    train_fc,
)
from ccsbeam.numkit import BeamIndex, dft2

DEFAULT_SNR_GRID = tuple(float(s) for s in range(-10, 30, 5))
CSV_COLUMNS = ("method", "M", "snr_db", "mean_rate", "top1", "top5", "n_channels")


@dataclass
class EvalReport:
    method: str
    m: int
    snr_grid_db: list
    mean_rate: list
    top1_accuracy: list
    top5_accuracy: list
    n_channels: int
    exhaustive_rate: list = field(default_factory=list)
    seeds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        return cls(**d)


def exhaustive_best_beam(h) -> BeamIndex:
    """argmax of ``|dft2(H)|``; ties go to the lexicographically smallest index."""
    h = np.asarray(h)
    if not np.any(h):
        raise ValueError("all-zero channel has no best beam")
    mag = np.abs(dft2(h))
    return BeamIndex.from_flat(int(np.argmax(mag)), h.shape[-1])


def rate(x, beam: BeamIndex, sigma2: float) -> float:
    """``log2(1 + |X(beam)|^2 / sigma2)`` in bits/s/Hz."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    return float(np.log2(1.0 + abs(x[beam.i, beam.j]) ** 2 / sigma2))


def _snr_rng(rng, k):
    return np.random.default_rng(np.random.SeedSequence([int(rng.integers(2**63)), k]))


def evaluate_scores(method, m, testset, snr_grid_db, scores, rng, seeds=None) -> EvalReport:
    """Shared evaluation loop.

    ``scores(sigma2, rng)`` returns ``(count, N^2)`` class scores for the test
    channels at noise variance ``sigma2``; the top score is the decision.
    """
    n = testset.n
    count = len(testset)
    beam_gain = np.abs(dft2(testset.h)).reshape(count, n * n) ** 2
    best = np.argmax(beam_gain, axis=1)
    rows = np.arange(count)
    out = dict(mean_rate=[], top1_accuracy=[], top5_accuracy=[], exhaustive_rate=[])
    point_rngs = [_snr_rng(rng, k) for k in range(len(snr_grid_db))]
    for snr_db, prng in zip(snr_grid_db, point_rngs):
        sigma2 = 10 ** (-float(snr_db) / 10)
        s = scores(sigma2, prng)
        pred = np.argmax(s, axis=1)
        top5 = np.argpartition(-s, min(5, s.shape[1] - 1), axis=1)[:, :5]
        out["mean_rate"].append(float(np.mean(np.log2(1 + beam_gain[rows, pred] / sigma2))))
        out["exhaustive_rate"].append(float(np.mean(np.log2(1 + beam_gain[rows, best] / sigma2))))
        out["top1_accuracy"].append(float(np.mean(pred == best)))
        out["top5_accuracy"].append(float(np.mean(np.any(top5 == best[:, None], axis=1))))
    return EvalReport(
        method=method,
        m=int(m),
        snr_grid_db=[float(s) for s in snr_grid_db],
        n_channels=count,
        seeds=seeds or {},
        **out,
    )


def _network_scores(params, y0):
    def scores(sigma2, rng):
        logits, _ = fc_forward(params, stack_features(noisy(y0, sigma2, rng)))
        return logits

    return scores


def evaluate(params: NetworkParams, testset, omega, snr_grid_db=DEFAULT_SNR_GRID, rng=None,
             method="learned-ccs") -> EvalReport:
    """Hardware-path evaluation: circulant shifts of the quantized filter,
    AWGN on the measurements, FC prediction, rate of the predicted beam."""
    if not params.conv_frozen:
        raise ValueError("evaluation needs a frozen, quantized measurement layer")
    rng = np.random.default_rng(0) if rng is None else rng
    y0 = measure_batch(params.base, testset.h, omega)
    return evaluate_scores(method, omega.m, testset, snr_grid_db, _network_scores(params, y0), rng)


def exhaustive_report(testset, snr_grid_db=DEFAULT_SNR_GRID) -> EvalReport:
    """The oracle itself as a report row (uses all ``N^2`` beams)."""
    gains = np.abs(dft2(testset.h)).reshape(len(testset), -1)
    return evaluate_scores(
        "exhaustive", testset.n**2, testset, snr_grid_db, lambda s2, r: gains, np.random.default_rng(0)
    )


def _frozen_random_params(n, m, q, rng, seed):
    params = init_params(n, m, np.random.default_rng(np.random.SeedSequence([seed, 0])), q=q)
    p = random_base(n, q, rng).p
    params.p_r[...] = p.real
    params.p_i[...] = p.imag
    params.conv_frozen = True
    return params


def baseline_random_ccs(dataset_train, dataset_test, cfg: TrainConfig, q, rng,
                        snr_grid_db=DEFAULT_SNR_GRID, return_params=False):
    """Same pipeline as the learned network but the filter is a random
    ``Q_q`` base matrix frozen from the start; only the FC layers train."""
    n = dataset_train.n
    omega = cfg.omega(n)
    params = _frozen_random_params(n, cfg.m, q, rng, cfg.seed)
    params, _ = train(dataset_train, cfg, init=params, omega=omega)
    report = evaluate(params, dataset_test, omega, snr_grid_db, rng, method="random-ccs")
    return (report, params) if return_params else report


def unstructured_measure(h, mats) -> np.ndarray:
    """``y[m] = <H, P[m]>`` for a stack of independent sensing matrices."""
    return np.einsum("bkl,mkl->bm", np.asarray(h), np.asarray(mats))


def baseline_random_unstructured(dataset_train, dataset_test, cfg: TrainConfig, q, rng,
                                 snr_grid_db=DEFAULT_SNR_GRID) -> EvalReport:
    """``M`` independent random ``Q_q`` matrices without circulant structure,
    with an FC predictor trained on their measurements."""
    n = dataset_train.n
    mats = np.stack([random_base(n, q, rng).p for _ in range(cfg.m)])
    params = _frozen_random_params(n, cfg.m, q, rng, cfg.seed)
    params, _ = train_fc(params, unstructured_measure(dataset_train.h, mats), dataset_train.labels, cfg)
    y0 = unstructured_measure(dataset_test.h, mats)
    return evaluate_scores(
        "random-unstructured", cfg.m, dataset_test, snr_grid_db, _network_scores(params, y0), rng
    )


def export_report(reports, path) -> None:
    """CSV (one row per method x SNR point) at ``path`` plus a JSON mirror
    with the same stem."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rep in reports:
            for k, snr in enumerate(rep.snr_grid_db):
                w.writerow([
                    rep.method, rep.m, repr(float(snr)), repr(rep.mean_rate[k]),
                    repr(rep.top1_accuracy[k]), repr(rep.top5_accuracy[k]), rep.n_channels,
                ])
    with open(path.with_suffix(".json"), "w") as f:
        json.dump([r.to_dict() for r in reports], f, indent=1, sort_keys=True)
        f.write("\n")


def load_report_json(path) -> list:
    with open(path) as f:
        return [EvalReport.from_dict(d) for d in json.load(f)]


def read_report_csv(path) -> list:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
