"""Batch pipeline: ``ccsbeam generate | train | eval | inspect``.

One JSON config drives every seed and hyperparameter; flags override it.
Exit codes: 0 ok, 2 config error, 3 I/O or file-format error, 4 invariant
violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ccsbeam import channelgen, evaluation, net
from ccsbeam.ccs import in_alphabet
from ccsbeam.channelgen import FileFormatError, ScenarioConfig
from ccsbeam.net import TrainConfig
from ccsbeam.numkit import beam_pattern

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INVARIANT = 0, 2, 3, 4

FILES = {
    "train": "train.ccsd",
    "test": "test.ccsd",
    "stage1": "model_stage1.ccsm",
    "quantized": "model_quantized.ccsm",
    "pattern_pre": "pattern_pre_quant.json",
    "pattern_post": "pattern_post_quant.json",
    "report": "report.csv",
    "config": "effective_config.json",
}


class ConfigError(Exception):
    pass


class InvariantError(Exception):
    pass


@dataclass
class RunConfig:
    global_seed: int = 0
    scenario: dict = field(default_factory=dict)
    n_train: int = 20000
    n_test: int = 5000
    train: dict = field(default_factory=dict)
    retrain_epochs: int = 30
    snr_grid_db: list = field(default_factory=lambda: list(evaluation.DEFAULT_SNR_GRID))
    m_list: list = field(default_factory=lambda: [10, 40])
    methods: list = field(default_factory=lambda: ["learned-ccs", "random-ccs", "random-unstructured", "exhaustive"])
    out: str = "run"

    def derived_seeds(self) -> dict:
        s = np.random.SeedSequence(self.global_seed).generate_state(4)
        return dict(zip(("scenario", "omega", "train", "eval"), (int(v) for v in s)))

    def scenario_config(self) -> ScenarioConfig:
        d = {"seed": self.derived_seeds()["scenario"], **self.scenario}
        return ScenarioConfig.from_dict(d)

    def train_config(self) -> TrainConfig:
        seeds = self.derived_seeds()
        d = {"seed": seeds["train"], "omega_seed": seeds["omega"], **self.train}
        return TrainConfig(**d)

    def effective(self) -> dict:
        """Config after defaults and seed derivation; embedded in outputs."""
        d = dataclasses.asdict(self)
        d["scenario"] = self.scenario_config().to_dict()
        d["train"] = self.train_config().to_dict()
        d.pop("out")
        return d

    def path(self, key) -> Path:
        return Path(self.out) / FILES[key]


def load_config(path=None, **overrides) -> RunConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = RunConfig(**data)
        cfg.scenario_config()
        cfg.train_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.n_train < 1 or cfg.n_test < 1 or cfg.retrain_epochs < 0 or not cfg.m_list:
        raise ConfigError("n_train/n_test must be >= 1, retrain_epochs >= 0, m_list nonempty")
    return cfg


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _out_dir(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_generate(cfg: RunConfig) -> dict:
    _out_dir(cfg)
    train, test = channelgen.generate_dataset(cfg.scenario_config(), cfg.n_train, cfg.n_test)
    meta = {"run_config": cfg.effective()}
    channelgen.save_dataset(train, cfg.path("train"), meta=meta)
    channelgen.save_dataset(test, cfg.path("test"), meta=meta)
    _write_json(cfg.path("config"), cfg.effective())
    prior = channelgen.beamspace_prior(train)
    summary = {
        "train_channels": len(train),
        "test_channels": len(test),
        "los_fraction": float(np.mean(train.los)),
        "bins_for_80pct": channelgen.mass_concentration(prior, 0.80),
        "bins_for_95pct": channelgen.mass_concentration(prior, 0.95),
        "prior_entropy_bits": channelgen.prior_entropy_bits(prior),
    }
    print(json.dumps(summary, indent=1, sort_keys=True))
    return summary


def _load_train(cfg):
    train = channelgen.load_dataset(cfg.path("train"))
    tcfg = cfg.train_config()
    n = cfg.scenario_config().n_antennas
    if train.n != n:
        raise InvariantError(f"dataset N={train.n} does not match configured N={n}")
    return train, tcfg


def _pattern_doc(p):
    return {"n": int(p.shape[0]), "pattern": beam_pattern(p).tolist()}


def cmd_train(cfg: RunConfig, retrain_only=False) -> None:
    _out_dir(cfg)
    train, tcfg = _load_train(cfg)
    omega = tcfg.omega(train.n)
    meta = {"run_config": cfg.effective(), "stage": 1}
    if retrain_only and cfg.path("stage1").exists():
        params, omega, _ = net.load_checkpoint(cfg.path("stage1"))
    else:
        params, hist = net.train(train, tcfg, omega=omega)
        meta["loss_history"] = hist
        net.save_checkpoint(cfg.path("stage1"), params, omega, meta)

    retrain_cfg = dataclasses.replace(tcfg, epochs=cfg.retrain_epochs)
    quant, hist = net.quantize_and_retrain(params, train, retrain_cfg, omega=omega)
    meta = {"run_config": cfg.effective(), "stage": 2, "loss_history": hist}
    net.save_checkpoint(cfg.path("quantized"), quant, omega, meta)

    pre, post = _pattern_doc(params.base), _pattern_doc(quant.base)
    # normalise the unquantized filter to the hardware norm before comparing
    scaled = params.base / np.linalg.norm(params.base)
    post["perturbation_fro"] = float(np.linalg.norm(beam_pattern(quant.base) - beam_pattern(scaled)))
    _write_json(cfg.path("pattern_pre"), pre)
    _write_json(cfg.path("pattern_post"), post)


def cmd_eval(cfg: RunConfig) -> list:
    _out_dir(cfg)
    train, tcfg = _load_train(cfg)
    test = channelgen.load_dataset(cfg.path("test"))
    seeds = cfg.derived_seeds()
    grid = [float(s) for s in cfg.snr_grid_db]
    reports = []
    if "learned-ccs" in cfg.methods:
        params, omega, _ = net.load_checkpoint(cfg.path("quantized"))
        rng = np.random.default_rng(np.random.SeedSequence([seeds["eval"], 0]))
        reports.append(evaluation.evaluate(params, test, omega, grid, rng))
    # baselines get the learned model's total FC budget (train + retrain)
    budget = tcfg.epochs + cfg.retrain_epochs
    for k, m in enumerate(cfg.m_list):
        bcfg = dataclasses.replace(tcfg, m=int(m), epochs=budget)
        if "random-ccs" in cfg.methods:
            rng = np.random.default_rng(np.random.SeedSequence([seeds["eval"], 1, k]))
            reports.append(evaluation.baseline_random_ccs(train, test, bcfg, tcfg.q, rng, grid))
        if "random-unstructured" in cfg.methods:
            rng = np.random.default_rng(np.random.SeedSequence([seeds["eval"], 2, k]))
            reports.append(evaluation.baseline_random_unstructured(train, test, bcfg, tcfg.q, rng, grid))
    if "exhaustive" in cfg.methods:
        reports.append(evaluation.exhaustive_report(test, grid))
    for r in reports:
        r.seeds = {"global_seed": cfg.global_seed, **seeds}
    evaluation.export_report(reports, cfg.path("report"))
    for r in reports:
        print(f"{r.method:20s} M={r.m:3d} rate={np.round(r.mean_rate, 3).tolist()}")
    return reports


def _inspect_dataset(path):
    ds = channelgen.load_dataset(path)
    norms = np.linalg.norm(ds.h, axis=(1, 2))
    n = ds.n
    if ds.scaling == "per-channel":
        ok = bool(np.allclose(norms, n, rtol=1e-9, atol=0))
    elif ds.scaling == "common":
        ok = bool(abs(np.mean(norms**2) / n**2 - 1) <= 1e-6)
    else:
        ok = True
    labels_ok = bool(np.array_equal(channelgen.best_beam_flat(ds.h), ds.labels))
    return {
        "type": "dataset",
        "n": n,
        "count": len(ds),
        "split": ds.split,
        "scaling": ds.scaling,
        "fro_norm": {"min": float(norms.min()), "max": float(norms.max()), "mean": float(norms.mean())},
        "scaling_invariant": "pass" if ok else "fail",
        "labels_match_argmax": "pass" if labels_ok else "fail",
    }, ok and labels_ok


def _inspect_model(path):
    params, omega, manifest = net.load_checkpoint(path)
    info = {
        "type": "model",
        "n": params.n,
        "m": params.m,
        "q": params.q,
        "conv_frozen": params.conv_frozen,
        "layer_dims": params.layer_dims,
        "omega": omega.to_list(),
    }
    ok = True
    if params.conv_frozen:
        bad = int(np.count_nonzero(~in_alphabet(params.base, params.q, 1e-9)))
        info["non_alphabet_entries"] = bad
        ok = bad == 0
    return info, ok


def _inspect_report(path):
    path = Path(path)
    if path.suffix == ".csv":
        rows = evaluation.read_report_csv(path)
        if not rows or set(rows[0]) != set(evaluation.CSV_COLUMNS):
            raise FileFormatError(f"{path}: not a report CSV")
        return {"type": "report-csv", "rows": len(rows), "methods": sorted({r["method"] for r in rows})}, True
    reports = evaluation.load_report_json(path)
    ok = all(
        r.mean_rate[k] <= r.exhaustive_rate[k] + 1e-12 for r in reports for k in range(len(r.snr_grid_db))
    )
    return {
        "type": "report-json",
        "methods": [r.method for r in reports],
        "oracle_dominance": "pass" if ok else "fail",
    }, ok


def cmd_inspect(path) -> bool:
    path = Path(path)
    head = path.read_bytes()[:8]
    try:
        if head == channelgen.MAGIC:
            info, ok = _inspect_dataset(path)
        elif head == net.CKPT_MAGIC:
            info, ok = _inspect_model(path)
        elif path.suffix in (".csv", ".json") and path.name.startswith("report"):
            info, ok = _inspect_report(path)
        else:
            raise FileFormatError(f"{path}: unknown file type")
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: unreadable ({exc})") from exc
    print(json.dumps(info, indent=1, sort_keys=True))
    if not ok:
        raise InvariantError(f"{path}: invariant check failed")
    return ok


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _csv(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="global seed (overrides config)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="cap BLAS worker threads")
    common.add_argument("--m-list", type=_csv(int), help="e.g. 10,40")
    common.add_argument("--snr-grid", type=_csv(float), help="e.g. 0,5,10,15")
    common.add_argument("--n-train", type=int)
    common.add_argument("--n-test", type=int)
    common.add_argument("--epochs", type=int, help="stage-one training epochs")
    common.add_argument("--retrain-epochs", type=int)

    parser = argparse.ArgumentParser(prog="ccsbeam", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="create train/test datasets")
    p_train = sub.add_parser("train", parents=[common], help="train, quantize, retrain")
    p_train.add_argument("--retrain-only", action="store_true", help="reuse the stage-one checkpoint")
    sub.add_parser("eval", parents=[common], help="evaluate learned model and baselines")
    p_inspect = sub.add_parser("inspect", help="print metadata and invariant checks for a file")
    p_inspect.add_argument("path")
    return parser


def _run_config(args) -> RunConfig:
    overrides = {
        "global_seed": args.seed,
        "out": args.out,
        "m_list": args.m_list,
        "snr_grid_db": args.snr_grid,
        "n_train": args.n_train,
        "n_test": args.n_test,
        "retrain_epochs": args.retrain_epochs,
    }
    cfg = load_config(args.config, **overrides)
    if args.epochs is not None:
        cfg.train = {**cfg.train, "epochs": args.epochs}
        try:
            cfg.train_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "inspect":
            cmd_inspect(args.path)
            return EXIT_OK
        cfg = _run_config(args)
        limits = nullcontext()
        if args.threads:
            from threadpoolctl import threadpool_limits

            limits = threadpool_limits(args.threads)
        with limits:
            if args.command == "generate":
                cmd_generate(cfg)
            elif args.command == "train":
                cmd_train(cfg, retrain_only=args.retrain_only)
            elif args.command == "eval":
                cmd_eval(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FileFormatError) as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), file=sys.stderr)
        return EXIT_IO
    except (InvariantError, ValueError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
