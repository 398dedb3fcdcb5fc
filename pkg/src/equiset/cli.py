"""Command-line front end.

Exit codes: 0 success, 1 property failure, 2 usage/config error, 3 numeric
abort.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import layers
from .datasets import TASKS, Dataset, make_dataset, read_dataset, write_dataset
from .layers import ARCHITECTURES, EQUIVARIANT_ARCHITECTURES, ConfigError, ModelSpec
from .training import NumericAbort, TrainConfig, default_config, evaluate, train

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

CSV_HEADER = ["epoch", "train_loss", "train_metric", "test_loss", "test_metric", "lr"]
SWEEP_HEADER = ["architecture", "width", "params", "train_loss", "train_metric", "test_loss", "test_metric"]

TASK_SHAPES = {
    # task: (n, k_in, k_out, input_scale, output_scale)
    "knapsack": (10, 4, 2, 25.0, 1.0),
    "quadratic": (16, 3, 1, 1.0, 16.0),
    "fiedler": (64, 3, 1, 1.0, 1.0),
    "gcn-approx": (100, 3, 10, 1.0, 1.0),
}


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    task: str = "knapsack"
    arch: str = "DeepSets"
    n: int | None = None
    k_in: int | None = None
    k_out: int | None = None
    widths: list[int] = field(default_factory=lambda: [16])
    depth: int = 6
    epochs: int | None = None
    lr: float | None = None
    batch: int | None = None
    decay_factor: float | None = None
    decay_every: int | None = None
    input_scale: float | None = None
    output_scale: float | None = None
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise UsageError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        n, k_in, k_out, in_s, out_s = TASK_SHAPES[self.task]
        self.n = self.n or n
        self.k_in = self.k_in or k_in
        self.k_out = self.k_out or k_out
        self.input_scale = self.input_scale or in_s
        self.output_scale = self.output_scale or out_s
        if not self.widths:
            raise UsageError("width list must be non-empty")
        if min([self.n, self.k_in, self.k_out, self.depth] + list(self.widths)) < 1:
            raise UsageError("all counts must be >= 1")

    def train_config(self) -> TrainConfig:
        overrides = {
            "epochs": self.epochs,
            "lr": self.lr,
            "batch_size": self.batch,
            "decay_factor": self.decay_factor,
            "decay_every": self.decay_every,
        }
        return default_config(self.task, seed=self.seed, **{k: v for k, v in overrides.items() if v is not None})

    def spec(self, arch: str | None = None, width: int | None = None) -> ModelSpec:
        return ModelSpec(
            arch or self.arch,
            self.depth,
            width or self.widths[0],
            self.k_in,
            self.k_out,
            n=self.n,
            input_scale=self.input_scale,
            output_scale=self.output_scale,
        )


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def default_width_grid(n: int, k_in: int, count: int = 15) -> list[int]:
    """``count`` widths equidistant in ``[5, n k_in / 2]``, rounded, duplicates removed."""
    hi = max(5.0, n * k_in / 2)
    grid = [int(round(w)) for w in np.linspace(5.0, hi, count)]
    return sorted(set(grid))


def _int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v.strip()]


_COERCE = {
    "n": int, "k_in": int, "k_out": int, "depth": int, "epochs": int, "batch": int, "seed": int,
    "decay_every": int, "lr": float, "decay_factor": float, "input_scale": float, "output_scale": float,
    "widths": _int_list, "width": _int_list, "trials": int, "count": int,
}


def build_experiment(args: argparse.Namespace) -> ExperimentConfig:
    """Merge flags over config file over defaults."""
    merged: dict = {}
    if getattr(args, "config", None):
        for key, val in read_config_file(args.config).items():
            if key == "width":
                key = "widths"
            merged[key] = _COERCE.get(key, str)(val)
    for f in fields(ExperimentConfig):
        flag = "width" if f.name == "widths" else f.name
        val = getattr(args, flag, None)
        if val is not None:
            merged[f.name] = val
    known = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in merged.items() if k in known})


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("EQUISET_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# file helpers


def dataset_paths(prefix) -> tuple[Path, Path]:
    prefix = str(prefix)
    return Path(prefix + ".train.txt"), Path(prefix + ".test.txt")


def write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for rec in history:
            w.writerow([rec.epoch] + [repr(float(getattr(rec, c))) for c in CSV_HEADER[1:]])


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _load_split(prefix) -> tuple[Dataset, Dataset]:
    train_path, test_path = dataset_paths(prefix)
    if not train_path.exists() or not test_path.exists():
        raise UsageError(f"dataset files {train_path} / {test_path} not found (run gen-data first)")
    return read_dataset(train_path), read_dataset(test_path)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    exp = build_experiment(args)
    count = args.count
    test_count = args.test_count if args.test_count is not None else max(1, count // 10)
    n = exp.n
    k = exp.k_in
    ds = make_dataset(exp.task, exp.seed, count + test_count, n, k, workers=_threads())
    prefix = exp.out or exp.task
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    train_path, test_path = dataset_paths(prefix)
    write_dataset(train_path, ds.subset(slice(0, count)))
    write_dataset(test_path, ds.subset(slice(count, count + test_count)))
    print(f"task={exp.task} seed={exp.seed} train={count} test={test_count}")
    print(f"wrote {train_path} and {test_path}")
    return EXIT_OK


def _experiment_for_data(args, ds: Dataset) -> ExperimentConfig:
    # the dataset header names its task; an explicit --task must agree
    if args.task is not None and args.task != ds.task:
        raise UsageError(f"--task {args.task} does not match dataset task {ds.task}")
    args.task = ds.task
    return build_experiment(args)


def _spec_for_data(exp: ExperimentConfig, ds: Dataset, arch=None, width=None) -> ModelSpec:
    exp.k_in = ds.k
    if ds.task != "knapsack":
        exp.k_out = ds.l
    exp.n = ds.n
    return exp.spec(arch, width)


def cmd_train(args) -> int:
    tr, te = _load_split(args.data)
    exp = _experiment_for_data(args, tr)
    spec = _spec_for_data(exp, tr)
    cfg = exp.train_config()
    res = train(spec, tr, cfg, test=te)
    prefix = exp.out or f"{exp.task}-{spec.architecture}"
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    write_history_csv(prefix + ".csv", res.history)
    last = res.history[-1] if res.history else None
    extra = {"train_config": asdict(cfg)}
    if last is not None:
        extra["test_metric"] = last.test_metric
    layers.save_checkpoint(prefix + ".ckpt.json", spec, res.params, extra)
    if last is not None:
        print(f"{spec.architecture} width={spec.width}: train_metric={last.train_metric:.6g} test_metric={last.test_metric:.6g}")
    print(f"wrote {prefix}.csv and {prefix}.ckpt.json")
    return EXIT_OK


def cmd_eval(args) -> int:
    if not args.checkpoint or not Path(args.checkpoint).exists():
        raise UsageError(f"checkpoint {args.checkpoint!r} not found")
    spec, params, _ = layers.load_checkpoint(args.checkpoint)
    path = Path(args.data)
    if not path.exists():
        path = dataset_paths(args.data)[1]
    if not path.exists():
        raise UsageError(f"dataset {args.data!r} not found")
    loss, metric = evaluate(spec, params, read_dataset(path))
    print(f"loss={loss!r} metric={metric!r}")
    return EXIT_OK


def run_sweep(exp: ExperimentConfig, tr: Dataset, te: Dataset, archs, widths) -> list[dict]:
    rows = []
    for arch in sorted(archs):
        for width in sorted(widths):
            spec = _spec_for_data(exp, tr, arch, width)
            res = train(spec, tr, exp.train_config(), test=te)
            last = res.history[-1]
            rows.append({
                "architecture": spec.architecture,
                "width": width,
                "params": layers.count_params(res.params),
                "train_loss": last.train_loss,
                "train_metric": last.train_metric,
                "test_loss": last.test_loss,
                "test_metric": last.test_metric,
            })
            print(f"{spec.architecture:12s} width={width:4d} train={last.train_metric:.6g} test={last.test_metric:.6g}", flush=True)
    return rows


def cmd_sweep(args) -> int:
    tr, te = _load_split(args.data)
    exp = _experiment_for_data(args, tr)
    archs = [layers.canonical_arch(a) for a in args.archs.split(",")] if args.archs else list(ARCHITECTURES)
    widths = args.width if args.width else default_width_grid(tr.n, tr.k)
    rows = run_sweep(exp, tr, te, archs, widths)
    out = (exp.out or f"sweep-{exp.task}") + ".csv"
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, SWEEP_HEADER)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
    print(f"wrote {out} ({len(rows)} rows)")
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verify

    suite = args.suite
    if suite == "equivariance":
        archs = [layers.canonical_arch(args.arch)] if args.arch else list(EQUIVARIANT_ARCHITECTURES)
        results = verify.verify_equivariance(
            archs, depth=args.depth or 6, width=(args.width or [32])[0], n=args.n or 5,
            trials=args.trials or 100, seed=args.seed or 0,
        )
    elif suite == "lemma4":
        results = [verify.verify_pointwise_gap(n=args.n or 5, epochs=args.epochs if args.epochs is not None else 30,
                                        seed=args.seed or 0)]
    elif suite == "theorem2":
        pairs = [(args.n, args.k)] if args.n and args.k else verify.DECOMPOSITION_PAIRS
        results = verify.verify_decomposition(pairs, polys=args.trials or 20, seed=args.seed or 0)
    else:
        results = verify.verify_width_bound()
    ok = True
    for r in results:
        print(r.line())
        if not r.passed:
            ok = False
            if r.counterexample:
                print(f"  counterexample: {r.counterexample}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_bench_gcn(args) -> int:
    from .experiments import gcn_approx_table

    depths = _int_list(args.depths) if args.depths else [args.depth or 2]
    widths = args.width or [200]
    rows = gcn_approx_table(depths, widths, count=args.count, test_count=args.test_count or 200,
                            epochs=args.epochs or 200, seed=args.seed or 0, lr=args.lr or 1e-3,
                            batch_size=args.batch or 32)
    out = (args.out or "bench-gcn-approx") + ".csv"
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, ["depth", "width", "train_loss", "test_loss"])
        w.writeheader()
        for r in rows:
            w.writerow(r)
            print(f"depth={r['depth']} width={r['width']} train={r['train_loss']:.6g} test={r['test_loss']:.6g}")
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--arch")
    p.add_argument("--n", type=int)
    p.add_argument("--k-in", dest="k_in", type=int)
    p.add_argument("--k-out", dest="k_out", type=int)
    p.add_argument("--width", type=_int_list, help="one width or a comma-separated list")
    p.add_argument("--depth", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="equiset", description="Permutation-equivariant set networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate train/test dataset files")
    _common(p)
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--test-count", dest="test_count", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model; writes <out>.csv and <out>.ckpt.json")
    _common(p)
    p.add_argument("--data", required=True, help="dataset prefix (reads <data>.train.txt / <data>.test.txt)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset file or prefix (uses <prefix>.test.txt)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train every (architecture, width) pair; writes a CSV table")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--archs", help="comma-separated architectures (default: all)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run a property suite")
    p.add_argument("suite", choices=("equivariance", "lemma4", "theorem2", "widthbound"))
    _common(p)
    p.add_argument("--k", type=int, help="feature dimension for the decomposition check")
    p.add_argument("--trials", type=int, help="random trials (equivariance, default 100) or polynomials (decomposition check, default 20)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench-gcn-approx", help="DeepSets regressing onto a fixed graph conv layer")
    _common(p)
    p.add_argument("--depths", help="comma-separated depths (overrides --depth)")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--test-count", dest="test_count", type=int)
    p.set_defaults(func=cmd_bench_gcn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=_threads()):
            return args.func(args)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"equiset: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericAbort, FloatingPointError, ArithmeticError) as exc:
        print(f"equiset: numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
