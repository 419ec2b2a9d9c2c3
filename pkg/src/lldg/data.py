"""Dataset files, splits, feature scaling and label-noise injection.

Text-tabular format, whitespace separated::

    m n c
    x_1 ... x_n  d_1 ... d_c      (m rows)

Lines that are blank or start with ``#`` are ignored. Label rows are
rescaled to sum to one on load.
"""
import os
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "load_dataset",
    "save_dataset",
    "split_indices",
    "split",
    "normalize_features",
    "inject_label_noise",
    "make_synthetic_dataset",
    "resolve_dataset_path",
]

SUM_TOL = 1e-4
# rows already normalized to within float rounding are left untouched so
# load -> save -> load is bit-exact
_RENORM_TOL = 1e-12


class DatasetFormatError(ValueError):
    pass


@dataclass
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2 or self.labels.ndim != 2:
            raise ValueError("features and labels must be 2D")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on the number of samples")

    @property
    def m(self):
        return self.features.shape[0]

    @property
    def n(self):
        return self.features.shape[1]

    @property
    def c(self):
        return self.labels.shape[1]

    def subset(self, indices, name=None):
        indices = np.asarray(indices)
        return Dataset(name or self.name, self.features[indices], self.labels[indices])

    def __len__(self):
        return self.m


def _normalize_rows(labels, source="labels"):
    sums = labels.sum(axis=1)
    bad = np.abs(sums - 1.0) > SUM_TOL
    if np.any(bad):
        warnings.warn(
            f"{source}: {int(bad.sum())} label rows did not sum to 1 and were renormalized",
            stacklevel=3,
        )
    fix = np.abs(sums - 1.0) > _RENORM_TOL
    out = labels.copy()
    out[fix] = labels[fix] / sums[fix, None]
    return out


def load_dataset(path, name=None):
    path = os.fspath(path)
    rows = []
    header = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if header is None:
                if len(parts) != 3:
                    raise DatasetFormatError(f"{path}:{lineno}: header must be 'm n c'")
                try:
                    header = tuple(int(p) for p in parts)
                except ValueError:
                    raise DatasetFormatError(f"{path}:{lineno}: header must hold three integers") from None
                if min(header) < 1:
                    raise DatasetFormatError(f"{path}:{lineno}: header values must be positive")
                width = header[1] + header[2]
                continue
            if len(parts) != width:
                raise DatasetFormatError(f"{path}:{lineno}: expected {width} values, found {len(parts)}")
            try:
                values = [float(p) for p in parts]
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
            if not all(np.isfinite(values)):
                raise DatasetFormatError(f"{path}:{lineno}: non-finite value")
            if any(v < 0 for v in values[header[1]:]):
                raise DatasetFormatError(f"{path}:{lineno}: negative label value")
            if sum(values[header[1]:]) <= 0:
                raise DatasetFormatError(f"{path}:{lineno}: label row sums to zero")
            rows.append(values)
    if header is None:
        raise DatasetFormatError(f"{path}: empty file")
    m, n, c = header
    if len(rows) != m:
        raise DatasetFormatError(f"{path}: header declares {m} rows, found {len(rows)}")
    data = np.array(rows, dtype=np.float64)
    labels = _normalize_rows(data[:, n:], source=path)
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    return Dataset(name, data[:, :n], labels)


def save_dataset(path, ds):
    with open(path, "w") as fh:
        fh.write(f"{ds.m} {ds.n} {ds.c}\n")
        for x, l in zip(ds.features, ds.labels):
            fh.write(" ".join(repr(float(v)) for v in np.concatenate([x, l])) + "\n")


def resolve_dataset_path(name, data_dir=None):
    """Accept a file path or a bare dataset name looked up in ``data_dir``.

    ``data_dir`` defaults to ``$LLDG_DATA_DIR`` and then ``./datasets``.
    """
    if os.path.exists(name):
        return name
    data_dir = data_dir or os.environ.get("LLDG_DATA_DIR", "datasets")
    for candidate in (name, name.lower()):
        for ext in ("", ".txt", ".tsv", ".dat"):
            path = os.path.join(data_dir, candidate + ext)
            if os.path.exists(path):
                return path
    raise FileNotFoundError(f"dataset {name!r} not found (searched {data_dir!r}; set LLDG_DATA_DIR)")


def split_indices(m, fraction=0.8, seed=0):
    """Seeded shuffle of ``range(m)`` cut at ``floor(fraction * m)``."""
    if m < 2:
        raise ValueError("need at least two samples to split")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    perm = np.random.default_rng(seed).permutation(m)
    cut = min(max(int(np.floor(fraction * m + 1e-9)), 1), m - 1)
    return perm[:cut], perm[cut:]


def split(ds, fraction=0.8, seed=0):
    train, test = split_indices(ds.m, fraction, seed)
    return ds.subset(train, f"{ds.name}-train"), ds.subset(test, f"{ds.name}-test")


def normalize_features(train, test=None):
    """Z-score features with statistics taken from ``train`` only.

    Returns ``(train_scaled, test_scaled, stats)``. Constant features are
    centred but not scaled.
    """
    train = np.asarray(train, dtype=np.float64)
    if train.shape[0] == 0:
        raise ValueError("training features are empty")
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    stats = {"mean": mean, "std": scale}
    out_test = None if test is None else (np.asarray(test, dtype=np.float64) - mean) / scale
    return (train - mean) / scale, out_test, stats


def inject_label_noise(labels, std, seed=0):
    """Add zero-mean Gaussian noise to every label component.

    Negative values are clipped to zero and rows renormalized; a row that
    collapses to all zeros becomes uniform. ``std == 0`` returns an exact copy.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if std < 0:
        raise ValueError("noise std must be non-negative")
    if std == 0:
        return labels.copy()
    noisy = labels + np.random.default_rng(seed).normal(0.0, std, size=labels.shape)
    noisy = np.maximum(noisy, 0.0)
    sums = noisy.sum(axis=1, keepdims=True)
    uniform = np.full_like(noisy, 1.0 / labels.shape[1])
    return np.where(sums > 0, noisy / np.where(sums > 0, sums, 1.0), uniform)


def make_synthetic_dataset(m=400, n=24, c=4, seed=0, spread=1.0, noise=0.05, name="synthetic"):
    """Random tabular LDL data with a learnable feature -> distribution map.

    Features are smoothed Gaussian sequences (neighbouring columns are
    correlated); labels are a softmax of a random two-layer map of the
    features, with ``noise`` added to the logits and ``spread`` scaling how
    far the distributions move from uniform.
    """
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((m, n + 2))
    x = (raw[:, :-2] + raw[:, 1:-1] + raw[:, 2:]) / np.sqrt(3.0)
    hidden = max(8, 2 * c)
    a = rng.standard_normal((n, hidden)) / np.sqrt(n)
    b = rng.standard_normal((hidden, c)) / np.sqrt(hidden)
    logits = spread * np.tanh(x @ a) @ b + noise * rng.standard_normal((m, c))
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return Dataset(name, x, e / e.sum(axis=1, keepdims=True))
