"""Experiment runs: configuration, training/evaluation cycles and result files.

A run directory holds:

``config.txt``
    the fully resolved configuration as ``key = value`` lines
``metrics.jsonl``
    one JSON record per line: a ``run`` header (config + version) followed by
    one ``metric`` record per measure; contains no timing, so identical
    configurations give identical files
``summary.txt``
    human-readable table of the same numbers
``train_log.jsonl``
    per-epoch ``epoch, loss_d, loss_g, total, wall_clock`` records
``metadata.json``
    sidecar with split sizes, normalization statistics and noise settings
``checkpoint.npz``
    best model parameters (see :mod:`lldg.nn.checkpoint`)
"""
import dataclasses
import hashlib
import json
import math
import os
import subprocess
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .data import inject_label_noise, load_dataset, normalize_features, resolve_dataset_path, split_indices
from .metrics import METRICS, MetricReport
from .model import LldgModel, LldgModelConfig, load_model, save_model
from .tensor import frobenius
from .training import evaluate_model, fit, predict_grids
from .tucker import effective_ranks, hosvd_error_bound, tucker_decompose, tucker_reconstruct

__all__ = [
    "RunConfig",
    "RunResult",
    "read_config_file",
    "build_version",
    "run_train",
    "run_noise_sweep",
    "run_ablation",
    "evaluate_checkpoint",
    "grid_energy_report",
    "grid_report",
    "tucker_demo",
    "DEFAULT_NOISE_STDS",
]

DEFAULT_NOISE_STDS = (0.1, 0.2, 0.5, 1.0)


@dataclass
class RunConfig:
    dataset: str = ""
    seed: int = 1
    epochs: int = 500
    batch_size: int = 128
    lr: float = 1e-3
    weight_decay: float = 0.01
    lam: float = 0.5
    tucker_ranks: str = "auto"
    hooi_sweeps: int = 0
    variance_mode: str = "variance"
    grid_loss: str = "l2"
    resample_prior: bool = True
    noise_std: float = 0.0
    disable_grid_loss: bool = False
    disable_tucker: bool = False
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    patience: int = 50
    clip_norm: float = 5.0
    conv_kernels: str = "3,5,7"
    conv_channels: str = "32,64,64"
    embed_dim: int = 64
    heads: int = 4
    depth: int = 1
    mlp_ratio: float = 2.0
    output_dir: str = field(default_factory=lambda: os.environ.get("LLDG_OUTPUT_DIR", "runs"))
    run_name: str = ""

    def __post_init__(self):
        for f in dataclasses.fields(self):
            setattr(self, f.name, _coerce(f.type, getattr(self, f.name), f.name))
        self.validate()

    def validate(self):
        checks = [
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.lr > 0, "lr must be positive"),
            (self.weight_decay >= 0, "weight_decay must be >= 0"),
            (self.lam >= 0, "lam must be >= 0"),
            (0 <= self.hooi_sweeps <= 10, "hooi_sweeps must lie in [0, 10]"),
            (self.variance_mode in ("variance", "std"), "variance_mode must be 'variance' or 'std'"),
            (self.grid_loss in ("l2", "l1"), "grid_loss must be 'l2' or 'l1'"),
            (self.noise_std >= 0, "noise_std must be >= 0"),
            (0 < self.train_fraction < 1, "train_fraction must lie in (0, 1)"),
            (0 <= self.val_fraction < 1, "val_fraction must lie in [0, 1)"),
            (self.patience >= 0, "patience must be >= 0 (0 disables early stopping)"),
            (self.clip_norm >= 0, "clip_norm must be >= 0 (0 disables clipping)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        self.parsed_ranks()

    def parsed_ranks(self):
        text = self.tucker_ranks.strip().lower()
        if text in ("auto", "", "none"):
            return None
        if text == "full":
            return "full"
        parts = [int(p) for p in text.replace("x", ",").split(",") if p]
        if len(parts) == 1:
            return parts[0]
        if len(parts) != 3:
            raise ValueError(f"tucker_ranks must be auto, full, an int or r1,r2,r3; got {self.tucker_ranks!r}")
        return tuple(parts)

    def model_config(self, c, n):
        return LldgModelConfig(
            c=c,
            n=n,
            conv_kernels=_int_list(self.conv_kernels),
            conv_channels=_int_list(self.conv_channels),
            embed_dim=self.embed_dim,
            heads=self.heads,
            depth=self.depth,
            mlp_ratio=self.mlp_ratio,
            tucker_ranks=self.parsed_ranks(),
            use_tucker=not self.disable_tucker,
            hooi_sweeps=self.hooi_sweeps,
            lam=0.0 if self.disable_grid_loss else self.lam,
            grid_loss=self.grid_loss,
            variance_mode=self.variance_mode,
            resample_prior=self.resample_prior,
            init_seed=self.seed,
        )

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def as_dict(self):
        return dataclasses.asdict(self)

    def identity(self):
        """Fields that define the experiment (everything except where it is written)."""
        d = self.as_dict()
        d.pop("output_dir")
        d.pop("run_name")
        return d

    def default_run_name(self):
        base = os.path.splitext(os.path.basename(self.dataset))[0] or "run"
        digest = hashlib.sha1(json.dumps(self.identity(), sort_keys=True).encode()).hexdigest()[:8]
        return f"{base}-seed{self.seed}-{digest}"

    def to_text(self):
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.as_dict().items())

    @classmethod
    def from_mapping(cls, mapping):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(mapping) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**mapping)


def _int_list(text):
    return tuple(int(p) for p in str(text).split(",") if p.strip())


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(kind, value, name):
    kind = kind if isinstance(kind, str) else kind.__name__
    if kind == "bool":
        if isinstance(value, str):
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"{name}: expected a boolean, got {value!r}")
        return bool(value)
    try:
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name}: cannot interpret {value!r} as {kind}") from None
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def build_version():
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--tags"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


@dataclass
class RunResult:
    config: RunConfig
    report: MetricReport
    run_dir: str
    history: list
    model: object = None

    def metric(self, name):
        return self.report.mean[name]


def _prepare(config):
    path = resolve_dataset_path(config.dataset)
    ds = load_dataset(path)
    train_idx, test_idx = split_indices(ds.m, config.train_fraction, config.seed)
    train_labels = inject_label_noise(ds.labels[train_idx], config.noise_std, seed=config.seed + 7919)
    val_idx = np.array([], dtype=int)
    fit_idx = np.arange(len(train_idx))
    if config.val_fraction > 0 and len(train_idx) >= 10:
        rng = np.random.default_rng(config.seed + 1)
        perm = rng.permutation(len(train_idx))
        n_val = max(1, int(math.floor(config.val_fraction * len(train_idx))))
        val_idx, fit_idx = perm[:n_val], perm[n_val:]
    x_train, x_test, stats = normalize_features(ds.features[train_idx][fit_idx], ds.features[test_idx])
    x_val = (ds.features[train_idx][val_idx] - stats["mean"]) / stats["std"]
    return {
        "path": path,
        "dataset": ds,
        "train": (x_train, train_labels[fit_idx]),
        "val": (x_val, train_labels[val_idx]) if len(val_idx) else None,
        "test": (x_test, ds.labels[test_idx]),
        "stats": stats,
        "sizes": {"train": len(fit_idx), "val": len(val_idx), "test": len(test_idx)},
        "test_idx": test_idx,
    }


def _metric_records(config, report, version, extra=None):
    header = {"type": "run", "version": version, "config": config.identity()}
    if extra:
        header.update(extra)
    lines = [header]
    for name in METRICS:
        lines.append({"type": "metric", "name": name, "mean": report.mean[name], "std": report.std[name]})
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in lines)


def _summary(config, report, sizes, version):
    lines = [
        f"dataset: {config.dataset}",
        f"seed: {config.seed}  noise_std: {config.noise_std}  lambda: {0.0 if config.disable_grid_loss else config.lam}"
        f"  tucker: {'off' if config.disable_tucker else config.tucker_ranks}",
        f"split: train={sizes['train']} val={sizes['val']} test={sizes['test']}",
        f"version: {version}",
        "",
        f"{'metric':<14}{'mean':>10}{'std':>10}",
    ]
    for name in METRICS:
        lines.append(f"{name:<14}{report.mean[name]:>10.4f}{report.std[name]:>10.4f}")
    return "\n".join(lines) + "\n"


def run_train(config, log=None, write=True):
    """Train and evaluate one configuration; write its result files."""
    prep = _prepare(config)
    ds = prep["dataset"]
    model = LldgModel(config.model_config(ds.c, ds.n))
    run_dir = os.path.join(config.output_dir, config.run_name or config.default_run_name())
    log_lines = []

    def _log(record):
        log_lines.append(json.dumps(record, sort_keys=True))
        if log is not None:
            log(record)

    history, optimizer = fit(
        model,
        prep["train"],
        prep["val"],
        epochs=config.epochs,
        batch_size=config.batch_size,
        lr=config.lr,
        weight_decay=config.weight_decay,
        seed=config.seed,
        clip_norm=config.clip_norm or None,
        patience=config.patience or None,
        log=_log,
    )
    report = evaluate_model(model, *prep["test"])
    result = RunResult(config, report, run_dir, history, model)
    if write:
        version = build_version()
        os.makedirs(run_dir, exist_ok=True)
        meta = {
            "run_config": config.as_dict(),
            "dataset_path": prep["path"],
            "split_seed": config.seed,
            "sizes": prep["sizes"],
            "normalization": {k: v.tolist() for k, v in prep["stats"].items()},
            "noise_std": config.noise_std,
            "noise_postprocess": "clip-at-zero-then-renormalize",
            "gradient_rule": "straight-through",
            "version": version,
        }
        _write(os.path.join(run_dir, "config.txt"), config.to_text())
        _write(os.path.join(run_dir, "metrics.jsonl"), _metric_records(config, report, version))
        _write(os.path.join(run_dir, "summary.txt"), _summary(config, report, prep["sizes"], version))
        _write(os.path.join(run_dir, "train_log.jsonl"), "".join(line + "\n" for line in log_lines))
        _write(os.path.join(run_dir, "metadata.json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")
        save_model(os.path.join(run_dir, "checkpoint.npz"), model, optimizer, meta)
    return result


def _write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _table(rows, header):
    lines = [f"{header:<12}" + "".join(f"{m:>22}" for m in METRICS)]
    for key, report in rows:
        cells = "".join(f"{report.mean[m]:>12.4f} ± {report.std[m]:<7.4f}" for m in METRICS)
        lines.append(f"{key!s:<12}" + cells)
    return "\n".join(lines) + "\n"


def run_noise_sweep(config, stds=DEFAULT_NOISE_STDS, log=None):
    """One train/evaluate cycle per noise level; returns ``[(std, RunResult)]``."""
    results = []
    for std in stds:
        cfg = config.replace(noise_std=float(std), run_name=f"{config.run_name or config.default_run_name()}-noise{std}")
        results.append((float(std), run_train(cfg, log=log)))
    sweep_dir = os.path.join(config.output_dir, (config.run_name or config.default_run_name()) + "-sweep")
    os.makedirs(sweep_dir, exist_ok=True)
    records = [
        json.dumps({"noise_std": std, "metrics": r.report.as_dict()}, sort_keys=True) + "\n" for std, r in results
    ]
    _write(os.path.join(sweep_dir, "sweep.jsonl"), "".join(records))
    _write(os.path.join(sweep_dir, "sweep.txt"), _table([(s, r.report) for s, r in results], "noise std"))
    return results


ABLATION_ARMS = {
    "full": {},
    "no-lldg": {"lam": 0.0, "tucker_ranks": "full"},
    "no-tucker": {"disable_tucker": True},
}


def run_ablation(config, seeds=(1, 2, 3, 4, 5), arms=tuple(ABLATION_ARMS), log=None):
    """Train every ablation arm for every seed.

    Returns ``{arm: [RunResult, ...]}`` and writes an averaged table.
    """
    out = {}
    for arm in arms:
        out[arm] = []
        for seed in seeds:
            cfg = config.replace(seed=int(seed), **ABLATION_ARMS[arm])
            cfg.run_name = f"{arm}-{cfg.default_run_name()}"
            out[arm].append(run_train(cfg, log=log))
    rows = []
    for arm, results in out.items():
        per = {m: np.array([r.report.mean[m] for r in results]) for m in METRICS}
        rows.append((arm, MetricReport({m: float(v.mean()) for m, v in per.items()},
                                       {m: float(v.std()) for m, v in per.items()})))
    ab_dir = os.path.join(config.output_dir, "ablation")
    os.makedirs(ab_dir, exist_ok=True)
    _write(os.path.join(ab_dir, "ablation.txt"), _table(rows, "arm"))
    _write(
        os.path.join(ab_dir, "ablation.jsonl"),
        "".join(json.dumps({"arm": a, "seeds": list(seeds), "metrics": r.as_dict()}, sort_keys=True) + "\n" for a, r in rows),
    )
    return out


def _load_for_eval(checkpoint, dataset=None):
    model, meta = load_model(checkpoint)
    cfg = RunConfig.from_mapping(meta["run_config"]) if "run_config" in meta else None
    path = resolve_dataset_path(dataset) if dataset else meta.get("dataset_path")
    if path is None:
        raise ValueError("no dataset given and the checkpoint does not record one")
    ds = load_dataset(path)
    norm = meta.get("normalization")
    x = ds.features if norm is None else (ds.features - np.array(norm["mean"])) / np.array(norm["std"])
    return model, cfg, ds, x


def _select(ds, x, cfg, which):
    if which == "all" or cfg is None:
        return x, ds.labels
    train_idx, test_idx = split_indices(ds.m, cfg.train_fraction, cfg.seed)
    idx = test_idx if which == "test" else train_idx
    return x[idx], ds.labels[idx]


def evaluate_checkpoint(checkpoint, dataset=None, which="test"):
    model, cfg, ds, x = _load_for_eval(checkpoint, dataset)
    xs, ls = _select(ds, x, cfg, which)
    return evaluate_model(model, xs, ls)


def grid_energy_report(b, b_star):
    """Per-sample energy summaries of grids ``b`` and their projections ``b_star``.

    Each returned record holds the Frobenius norm, the three per-axis
    marginal sums and the 99%-energy effective ranks of both grids.
    """
    b = np.asarray(b, dtype=np.float64)
    b_star = np.asarray(b_star, dtype=np.float64)
    records = []
    for name, g in (("grid", b), ("projected", b_star)):
        fro = frobenius(g)
        ranks = effective_ranks(g)
        marg = [g.sum(axis=(-2, -1)), g.sum(axis=(-3, -1)), g.sum(axis=(-3, -2))]
        for i in range(g.shape[0]):
            if len(records) <= i:
                records.append({"sample": i})
            records[i][name] = {
                "frobenius": float(fro[i]),
                "marginals": [m[i].tolist() for m in marg],
                "effective_ranks": [int(r[i]) for r in ranks],
            }
    return records


def grid_report(checkpoint, dataset=None, which="test", limit=None):
    """Energy report for the grids a trained model produces on a dataset."""
    model, cfg, ds, x = _load_for_eval(checkpoint, dataset)
    xs, _ = _select(ds, x, cfg, which)
    if limit:
        xs = xs[:limit]
    b, b_star, _ = predict_grids(model, xs)
    records = grid_energy_report(b, b_star)
    summary = {
        "samples": len(records),
        "configured_ranks": list(model.ranks) if model.config.use_tucker else None,
        "mean_frobenius_grid": float(np.mean([r["grid"]["frobenius"] for r in records])),
        "mean_frobenius_projected": float(np.mean([r["projected"]["frobenius"] for r in records])),
        "max_effective_ranks_projected": [
            int(max(r["projected"]["effective_ranks"][k] for r in records)) for k in range(3)
        ],
    }
    return summary, records


def tucker_demo(dims=(6, 6, 6), ranks=(3, 3, 3), seed=0, trials=1, separable=False):
    """Decompose random tensors and compare the error against the HOSVD bound."""
    rng = np.random.default_rng(seed)
    rows = []
    for trial in range(trials):
        if separable:
            a, b, c = (rng.standard_normal(d) for d in dims)
            t = np.einsum("i,j,k->ijk", a, b, c)
        else:
            t = rng.standard_normal(dims)
        f = tucker_decompose(t, ranks)
        err = float(frobenius(t - tucker_reconstruct(f)))
        bound = float(hosvd_error_bound(t, ranks))
        rows.append({
            "trial": trial,
            "dims": list(dims),
            "ranks": list(f.ranks),
            "error": err,
            "relative_error": err / float(frobenius(t)),
            "bound": bound,
            "within_bound": err <= bound + 1e-10,
        })
    return rows
