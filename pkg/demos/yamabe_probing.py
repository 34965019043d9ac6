"""Annulus problem in 2-D with structure probing.

Builds models with J = 0, 1, 2 sine probing terms and shows how the
initial guess changes along a ray; then trains the J = 1 model briefly.

    python3 demos/yamabe_probing.py
"""
import numpy as np

from nndeflate.optim import TrainConfig, train
from nndeflate.problems import get_problem
from nndeflate.registry import residual_stats

prob = get_problem("yamabe2d")
ray = np.column_stack([np.linspace(1, 100, 7), np.zeros(7)])

for J in (None, 1, 2):
    m = prob.make_model(4, probing_J=J)
    print(f"J={J or 0}: u0 on the ray", np.round(m(ray)[:, 0], 3))

m = prob.make_model(4, probing_J=1)
fit = train(prob, m, TrainConfig(n_iter=1000, n_points=512, lr=(-2.0, -4.0)), run_seed=4).model
res, _ = residual_stats(prob, fit, n_samples=4000)
print(f"after 1000 iterations: residual {res:.3g}")
print("u on the ray", np.round(fit(ray)[:, 0], 3))
