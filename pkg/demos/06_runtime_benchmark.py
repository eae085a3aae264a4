#!/usr/bin/env python3
# Why learn a distance that can be computed exactly?  The exact value
# needs both induced orders — work that grows with 2^n — while a trained
# network answers from the compact encodings in near-constant time.
#
# This benchmark times the three-way comparison task (is A or B closer
# to the reference?) per triple, for the exact computation and for
# model inference, across n = 3..6.  Small trial counts keep the demo
# quick; the bench CLI command runs the full protocol.

import numpy as np

from cpmetric import GenConfig, build_model, generate_library, train
from cpmetric.data import dataset_from_library
from cpmetric.evaluation import EXACT_KTD, MODEL_INFERENCE, benchmark_runtime
from cpmetric.nn import TrainConfig

libraries, models = {}, {}
for n in range(3, 7):
    libraries[n] = generate_library(GenConfig(n=n, count=20, seed=n))
    ds = dataset_from_library(libraries[n], folds=1, p=0.5, m=10,
                              ordered=False, seed=n)
    tr = ds.fold_rows(0, "train")
    model = build_model(n, "regression", seed=0, dtype=np.float32)
    train(model, ds.features[tr], ds.y[tr],
          TrainConfig(epochs=3, batch_size=64, seed=0))
    models[n] = model
    print(f"n={n}: library of 20 nets ready, quick regression model trained")

report = benchmark_runtime(libraries, models, trials=120, seed=0, warmup=20)
print("\nper-triple wall time (mean over 120 trials):\n")
print(report.table())

exact = [report.entries[(EXACT_KTD, n)]["mean_ms"] for n in range(3, 7)]
model_t = [report.entries[(MODEL_INFERENCE, n)]["mean_ms"] for n in range(3, 7)]
print(f"exact time grows with the outcome space: {exact[0]:.3f} -> {exact[-1]:.3f} ms")
print(f"model inference stays nearly flat:       {model_t[0]:.3f} -> {model_t[-1]:.3f} ms")
