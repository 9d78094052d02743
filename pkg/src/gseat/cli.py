"""Command-line harness: dataset prep, training, attacks, sweeps, diagnostics.

Subcommands: gen-sbm, train, attack, eval, sweep, spectrum, bench.  All
randomness flows from per-seed labeled streams, so repeated invocations with
the same config and seeds produce byte-identical CSV output.

Exit codes: 0 success, 1 every seed of a sweep failed, 2 configuration
error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .attack import (
    AttackConfig,
    evaluate_attack,
    load_perturbation,
    pairs_from_linear,
    rbcd_attack,
    save_perturbation,
)
from .errors import ConfigError, DataError, NumericError
from .gnn import accuracy, load_params, save_params
from .graphs import (
    Graph,
    Perturbation,
    SbmConfig,
    apply_perturbation,
    dataset_hash,
    inductive_split,
    load_bundle,
    sbm_generate,
    save_bundle,
)
from .rng import stream_rng
from .spectral import (
    GseParams,
    RndSvdConfig,
    full_svd,
    normalized_gse,
    nystrom_approx,
    randomized_svd,
    singular_spectrum,
)
from .training import TRAIN_METHODS, TrainConfig, train

log = logging.getLogger("gseat")

_MODELS = ("gcn", "gprgnn")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """One sweep: dataset x model x methods x seeds, with an evaluation attack."""

    dataset: dict
    model: str = "gcn"
    methods: tuple = ("natural",)
    attack: dict = field(default_factory=lambda: {"kind": "none"})
    seeds: tuple = (0,)
    per_class: int = 20
    test_frac: float = 0.1
    train: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        payload = dict(payload)
        methods = payload.get("methods", payload.pop("method", "natural"))
        if isinstance(methods, str):
            methods = (methods,)
        payload["methods"] = tuple(methods)
        payload.setdefault("dataset", None)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**payload)
        cfg.validate()
        return cfg

    def validate(self):
        if not isinstance(self.dataset, dict) or "kind" not in self.dataset:
            raise ConfigError("dataset spec must be a dict with a 'kind' key")
        if self.model not in _MODELS:
            raise ConfigError(f"model must be one of {_MODELS}, got {self.model!r}")
        for method in self.methods:
            if method not in TRAIN_METHODS:
                raise ConfigError(f"unknown method {method!r}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        kind = self.attack.get("kind", "none")
        if kind not in ("none", "rbcd"):
            raise ConfigError(f"attack kind must be 'none' or 'rbcd', got {kind!r}")
        if kind == "rbcd" and not self.attack.get("budgets"):
            raise ConfigError("rbcd attack spec needs a nonempty 'budgets' list")
        if self.dataset["kind"] == "bundle" and not os.path.isdir(self.dataset.get("path", "")):
            raise ConfigError(f"bundle path does not exist: {self.dataset.get('path')}")


def load_dataset(spec: dict, default_seed: int) -> Graph:
    kind = spec.get("kind")
    if kind == "sbm":
        fields = {k: v for k, v in spec.items() if k != "kind"}
        fields.setdefault("seed", default_seed)
        fields["block_sizes"] = tuple(fields.get("block_sizes", ()))
        try:
            config = SbmConfig(**fields)
        except TypeError as exc:
            raise ConfigError(f"bad sbm spec: {exc}") from None
        return sbm_generate(config)
    if kind == "bundle":
        return load_bundle(spec["path"])
    raise ConfigError(f"unknown dataset kind {spec.get('kind')!r}")


def make_train_config(overrides: dict, seed: int) -> TrainConfig:
    fields = dict(overrides)
    gse_spec = fields.pop("gse", None)
    if gse_spec is not None:
        gse_spec = GseParams(**gse_spec)
    fields["gse"] = gse_spec
    fields["seed"] = seed
    try:
        return TrainConfig(**fields)
    except TypeError as exc:
        raise ConfigError(f"bad train config: {exc}") from None


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return format(value, ".6f")


def _budget_label(ratio: float) -> str:
    return format(ratio * 100, "g") + "pct"


def _attack_config(spec: dict, ratio: float, seed: int) -> AttackConfig:
    return AttackConfig(
        budget_ratio=ratio,
        block_size=int(spec.get("block_size", 2048)),
        iterations=int(spec.get("iterations", 40)),
        lr=float(spec.get("lr", 100.0)),
        seed=seed,
        local_degree_cap=spec.get("local_degree_cap"),
    )


def _run_seed(cfg: ExperimentConfig, seed: int) -> list:
    """All rows for one seed: split, train each method, attack, evaluate."""
    budgets = list(cfg.attack.get("budgets", [])) if cfg.attack.get("kind") == "rbcd" else []
    rows = []
    try:
        graph = load_dataset(cfg.dataset, seed)
        graph = inductive_split(graph, cfg.per_class, cfg.test_frac, seed)
    except Exception as exc:  # dataset failure poisons every method row
        log.error("seed %d: dataset stage failed: %s", seed, exc)
        for method in cfg.methods:
            rows.append({"model": cfg.model, "method": method, "seed": seed,
                         "status": f"error:{type(exc).__name__}"})
        return rows
    for method in cfg.methods:
        try:
            tc = make_train_config(cfg.train, seed)
            params, _report = train(cfg.model, graph, tc, method)
            row = {"model": cfg.model, "method": method, "seed": seed, "status": "ok"}
            row["clean_acc"] = accuracy(params, graph.dense(), graph.features,
                                        graph.labels, graph.test_mask)
            for ratio in budgets:
                acfg = _attack_config(cfg.attack, ratio, seed)
                pert = rbcd_attack(params, graph, acfg, mask=graph.test_mask)
                _, adv = evaluate_attack(params, graph, pert, mask=graph.test_mask)
                row[f"adv_{_budget_label(ratio)}"] = adv
            rows.append(row)
        except Exception as exc:
            log.error("seed %d method %s failed: %s", seed, method, exc)
            rows.append({"model": cfg.model, "method": method, "seed": seed,
                         "status": f"error:{type(exc).__name__}"})
    return rows


def run_experiment(cfg: ExperimentConfig, threads: int = 1):
    """Per-seed result rows plus mean/std aggregates, in deterministic order."""
    budgets = list(cfg.attack.get("budgets", [])) if cfg.attack.get("kind") == "rbcd" else []
    metric_cols = ["clean_acc"] + [f"adv_{_budget_label(r)}" for r in budgets]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_seed = list(pool.map(lambda s: _run_seed(cfg, s), cfg.seeds))
    else:
        per_seed = [_run_seed(cfg, seed) for seed in cfg.seeds]

    rows = []
    for chunk in per_seed:
        rows.extend(chunk)

    # aggregates are computed from the emitted (rounded) per-seed values so
    # they can be recomputed exactly from the CSV
    aggregates = []
    for method in cfg.methods:
        ok = [r for r in rows if r["method"] == method and r["status"] == "ok"]
        if not ok:
            continue
        for stat in ("mean", "std"):
            agg = {"model": cfg.model, "method": method, "seed": stat, "status": "ok"}
            for col in metric_cols:
                values = np.array([float(_fmt(r[col])) for r in ok if col in r])
                if values.size == 0:
                    continue
                agg[col] = float(values.mean() if stat == "mean" else values.std())
            aggregates.append(agg)
    return rows + aggregates, metric_cols


def rows_to_csv(rows, metric_cols) -> str:
    header = ["model", "method", "seed", "status"] + metric_cols
    lines = [",".join(header)]
    for row in rows:
        cells = [str(row["model"]), str(row["method"]), str(row["seed"]), str(row["status"])]
        for col in metric_cols:
            cells.append(_fmt(row[col]) if col in row else "")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# spectrum diagnostics
# ---------------------------------------------------------------------------

def _random_flips(graph: Graph, ratio: float, seed: int) -> Perturbation:
    n = graph.n
    total = n * (n - 1) // 2
    delta = max(1, min(total, int(round(ratio * graph.num_edges))))
    rng = stream_rng(seed, f"spectrum-flips-{format(ratio, 'g')}")
    lin = np.sort(rng.choice(total, size=delta, replace=False).astype(np.int64))
    rows, cols = pairs_from_linear(n, lin)
    return Perturbation(flips=frozenset(zip(rows.tolist(), cols.tolist())), budget=delta)


def emit_spectrum_report(graph: Graph, budgets, seed: int, out_dir,
                         beta1: float = 0.1, beta2: float = 0.5) -> list:
    """Write singular-value curves and normalized-energy bars as CSV.

    One spectrum file for the clean graph and one per budget (uniform random
    flips at that fraction of the edge count), plus ngse.csv with the
    windowed energy of each perturbed graph relative to clean.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def write_spectrum(name, values):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("index,sigma\n")
            for idx, value in enumerate(values):
                fh.write(f"{idx},{_fmt(value)}\n")
        written.append(path)

    clean_dense = graph.dense()
    write_spectrum("spectrum_clean.csv", singular_spectrum(clean_dense))

    ngse_rows = []
    for ratio in budgets:
        pert = _random_flips(graph, ratio, seed)
        perturbed = apply_perturbation(graph, pert).dense()
        write_spectrum(f"spectrum_{_budget_label(ratio)}.csv", singular_spectrum(perturbed))
        ngse_rows.append((ratio, normalized_gse(clean_dense, perturbed, beta1, beta2)))

    path = os.path.join(out_dir, "ngse.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("budget,ngse\n")
        for ratio, value in ngse_rows:
            fh.write(f"{_fmt(ratio)},{_fmt(value)}\n")
    written.append(path)
    return written


# ---------------------------------------------------------------------------
# backend benchmark
# ---------------------------------------------------------------------------

def _random_sparse_symmetric(n: int, density: float, rng) -> sp.csr_matrix:
    total = n * (n - 1) // 2
    m = max(1, min(total, int(density * total)))
    lin = rng.choice(total, size=m, replace=False).astype(np.int64)
    rows, cols = pairs_from_linear(n, lin)
    data = np.ones(m)
    return sp.coo_matrix(
        (np.concatenate([data, data]),
         (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n),
    ).tocsr()


def bench_backends(n: int, k: int, reps: int, seed: int = 0,
                   density: float | None = None) -> list:
    """Median seconds per call for exact SVD, randomized SVD, and Nystrom."""
    if n < k:
        raise ValueError(f"need n >= k, got n={n}, k={k}")
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    density = density if density is not None else min(0.01, 8.0 / max(n, 1))
    rng = stream_rng(seed, "bench")
    a_sparse = _random_sparse_symmetric(n, density, rng)
    a_dense = a_sparse.toarray()

    def run_exact(_):
        full_svd(a_dense)

    def run_rndsvd(rep):
        randomized_svd(a_sparse, RndSvdConfig(k=k, p=5, q=1, seed=seed + rep))

    def run_nystrom(rep):
        nystrom_approx(a_sparse, k, seed=seed + rep)

    results = []
    for name, fn in (("svd", run_exact), ("rndsvd", run_rndsvd), ("nystrom", run_nystrom)):
        fn(0)  # warmup
        times = []
        for rep in range(reps):
            t0 = time.perf_counter()
            fn(rep + 1)
            times.append(time.perf_counter() - t0)
        results.append({"backend": name, "median_seconds": float(np.median(times)),
                        "reps": reps})
    return results


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def _cmd_gen_sbm(args) -> int:
    if args.config:
        spec = _load_json(args.config)
        spec.setdefault("seed", args.seed)
        spec["block_sizes"] = tuple(spec.get("block_sizes", ()))
        try:
            config = SbmConfig(**spec)
        except TypeError as exc:
            raise ConfigError(f"bad sbm spec: {exc}") from None
    else:
        blocks = tuple(int(b) for b in args.blocks.split(","))
        config = SbmConfig(block_sizes=blocks, p_in=args.p_in, p_out=args.p_out,
                           feature_dim=args.dim, feature_shift=args.shift,
                           seed=args.seed)
    graph = sbm_generate(config)
    save_bundle(graph, args.out)
    print(f"wrote bundle to {args.out} (n={graph.n}, edges={graph.num_edges})")
    return 0


def _split_from_meta(spec, meta):
    graph = load_dataset(spec, int(meta["seed"]))
    graph = inductive_split(graph, int(meta["per_class"]), float(meta["test_frac"]),
                            int(meta["seed"]))
    if dataset_hash(graph) != meta.get("dataset"):
        raise DataError("dataset does not match the checkpoint's recorded hash")
    return graph


def _cmd_train(args) -> int:
    spec = _load_json(args.config)
    dataset = spec.get("dataset")
    if not dataset:
        raise ConfigError("train config needs a 'dataset' entry")
    model = spec.get("model", "gcn")
    if model not in _MODELS:
        raise ConfigError(f"model must be one of {_MODELS}")
    method = spec.get("method", "natural")
    seed = args.seed if args.seed is not None else int(spec.get("seed", 0))
    per_class = int(spec.get("per_class", 20))
    test_frac = float(spec.get("test_frac", 0.1))

    graph = load_dataset(dataset, seed)
    graph = inductive_split(graph, per_class, test_frac, seed)
    tc = make_train_config(spec.get("train", {}), seed)
    params, report = train(model, graph, tc, method)

    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "params.bin")
    save_params(ckpt, params, metadata={
        "method": method,
        "seed": seed,
        "per_class": per_class,
        "test_frac": test_frac,
        "dataset": dataset_hash(graph),
    })
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    val_loss = report.records[report.selected_epoch].val_loss if report.records else float("nan")
    print(f"trained {model}/{method}: selected epoch {report.selected_epoch}, "
          f"val loss {val_loss:.6f}, checkpoint {ckpt}")
    return 0


def _cmd_attack(args) -> int:
    spec = _load_json(args.config)
    params, meta = load_params(spec["checkpoint"])
    graph = _split_from_meta(spec["dataset"], meta)
    attack_spec = spec.get("attack", {})
    seed = args.seed if args.seed is not None else int(meta["seed"])
    acfg = _attack_config(attack_spec, float(attack_spec.get("budget_ratio", 0.1)), seed)
    pert = rbcd_attack(params, graph, acfg, mask=graph.test_mask)
    save_perturbation(pert, args.out)
    print(f"wrote {len(pert.flips)} flips (budget {pert.budget}) to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    spec = _load_json(args.config)
    params, meta = load_params(spec["checkpoint"])
    graph = _split_from_meta(spec["dataset"], meta)
    if spec.get("perturbation"):
        pert = load_perturbation(spec["perturbation"])
        clean_acc, adv_acc = evaluate_attack(params, graph, pert, mask=graph.test_mask)
    else:
        clean_acc = accuracy(params, graph.dense(), graph.features, graph.labels,
                             graph.test_mask)
        adv_acc = None
    payload = {"clean_acc": clean_acc, "adv_acc": adv_acc}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    adv_text = "n/a" if adv_acc is None else _fmt(adv_acc)
    print(f"clean_acc={_fmt(clean_acc)} adv_acc={adv_text}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = ExperimentConfig.from_dict(_load_json(args.config))
    rows, metric_cols = run_experiment(cfg, threads=args.threads)
    csv_text = rows_to_csv(rows, metric_cols)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "results.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    print(f"wrote {path}")
    per_seed = [r for r in rows if isinstance(r["seed"], int)]
    if per_seed and all(r["status"] != "ok" for r in per_seed):
        print("all seeds failed", file=sys.stderr)
        return 1
    return 0


def _cmd_spectrum(args) -> int:
    spec = _load_json(args.config)
    graph = load_dataset(spec["dataset"], args.seed)
    budgets = spec.get("budgets", [])
    written = emit_spectrum_report(graph, budgets, args.seed, args.out,
                                   beta1=float(spec.get("beta1", 0.1)),
                                   beta2=float(spec.get("beta2", 0.5)))
    print("\n".join(written))
    return 0


def _cmd_bench(args) -> int:
    results = bench_backends(args.n, args.k, args.reps, seed=args.seed)
    lines = ["backend,median_seconds"]
    for entry in results:
        lines.append(f"{entry['backend']},{entry['median_seconds']:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gseat",
                                     description="Spectral adversarial training toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-sbm", help="generate a block-model graph bundle")
    p.add_argument("--config", help="JSON file with block-model fields")
    p.add_argument("--blocks", default="500,480", help="comma-separated block sizes")
    p.add_argument("--p-in", type=float, default=0.015)
    p.add_argument("--p-out", type=float, default=0.002)
    p.add_argument("--dim", type=int, default=21)
    p.add_argument("--shift", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_sbm)

    p = sub.add_parser("train", help="train one model/method on a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("attack", help="attack a trained checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("eval", help="evaluate a checkpoint, optionally under a perturbation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="run a seeds x methods experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("spectrum", help="emit singular-value and energy CSVs")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("bench", help="time the spectral backends")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_bench)

    return parser


def _setup_logging():
    level_name = os.environ.get("GSE_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        raise ConfigError(f"GSE_LOG must be error|info|debug, got {level_name!r}")
    logging.basicConfig(level=levels[level_name], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    try:
        _setup_logging()
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except (OSError, IndexError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except KeyError as exc:
        print(f"config error: missing key {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
