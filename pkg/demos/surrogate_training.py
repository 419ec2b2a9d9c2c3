"""Train a small model on synthetic data and compare with the mean predictor.

Run with ``python demos/surrogate_training.py``; it takes about a minute.
"""
import numpy as np

from lldg import LldgModel, evaluate_batch, evaluate_model, fit, make_synthetic_dataset, normalize_features, split
from lldg.experiment import RunConfig

ds = make_synthetic_dataset(m=600, n=24, c=4, seed=0, spread=2.0)
train, test = split(ds, 0.8, seed=1)
x_train, x_test, _ = normalize_features(train.features, test.features)

baseline = evaluate_batch(test.labels, np.tile(train.labels.mean(axis=0), (test.m, 1)))
print("mean predictor ", baseline.format_row())

for lam in (0.0, 0.5):
    cfg = RunConfig(dataset="synthetic", lam=lam)
    model = LldgModel(cfg.model_config(ds.c, ds.n))
    fit(model, (x_train, train.labels), epochs=40, seed=1)
    print(f"lambda={lam:<4}     ", evaluate_model(model, x_test, test.labels).format_row())
