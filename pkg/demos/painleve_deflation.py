"""Painleve boundary-value problem: least squares, then deflation.

Trains one solution, deflates it with p = 1 and p = 2, and prints the
slope at the left end and the distance to the first solution.  About a
minute on one core.

    python3 demos/painleve_deflation.py
"""
import numpy as np

from nndeflate.deflation import DeflationSource
from nndeflate.optim import TrainConfig, train
from nndeflate.problems import get_problem
from nndeflate.registry import distance, residual_stats

prob = get_problem("painleve")
base = TrainConfig(n_iter=5000, n_points=256, lr=(-2.5, -4.0))


def slope(model, h=1e-4):
    u = model(np.array([[0.0], [h], [2 * h]]))[:, 0]
    return (-3 * u[0] + 4 * u[1] - u[2]) / (2 * h)


first = train(prob, prob.make_model(0), base, run_seed=0).model
res, _ = residual_stats(prob, first)
print(f"least squares: residual {res:.3g}, u'(0) = {slope(first):.2f}")

for power in (1.0, 2.0):
    cfg = TrainConfig(mode="nd", n_iter=base.n_iter, n_points=base.n_points, lr=base.lr,
                      sources=[DeflationSource(first, power)])
    cand = train(prob, prob.make_model(0), cfg, run_seed=0).model
    res, _ = residual_stats(prob, cand)
    rel, _ = distance(first, cand, problem=prob)
    print(f"deflation p={power:g}: residual {res:.3g}, u'(0) = {slope(cand):.2f}, "
          f"relative distance {rel:.3f}")

xs = np.linspace(0, 1, 6)[:, None]
print("x     ", np.round(xs[:, 0], 2))
print("u(x)  ", np.round(first(xs)[:, 0], 3))
