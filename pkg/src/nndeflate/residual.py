"""Input-space derivatives by central finite differences, recorded on the tape.

A stencil is a linear combination of network evaluations at shifted points,
so reverse-mode gradients with respect to the parameters stay exact.  All
shifted copies of a batch are stacked and pushed through the network in one
call.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, TrainingError

# order -> (offsets in units of h, weights); divide by h**order
STENCILS = {
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


@dataclass(frozen=True)
class StencilConfig:
    """Base step per derivative order for a unit-diameter domain."""

    h1: float = 1e-5
    h2: float = 1e-4
    h3: float = 1e-3
    h4: float = 1e-2
    diameter: float = 1.0

    def __post_init__(self):
        if min(self.h1, self.h2, self.h3, self.h4, self.diameter) <= 0:
            raise ConfigurationError("stencil steps must be positive")

    def step(self, order):
        return (self.h1, self.h2, self.h3, self.h4)[order - 1] * self.diameter

    def scaled(self, diameter):
        return StencilConfig(self.h1, self.h2, self.h3, self.h4, diameter)


def _plan(orders, dim, cfg):
    """Unique displacement vectors and, per derivative, (rows, weights, h^order)."""
    disps = [np.zeros(dim)]
    index = {tuple(disps[0]): 0}

    def slot(vec):
        key = tuple(np.round(vec, 15))
        if key not in index:
            index[key] = len(disps)
            disps.append(vec)
        return index[key]

    recipe = {}
    for order in orders:
        if order == 0:
            continue
        if order == "lap":
            h = cfg.step(2)
            rows, weights = [0], [-2.0 * dim]
            for axis in range(dim):
                for sgn in (-1.0, 1.0):
                    e = np.zeros(dim)
                    e[axis] = sgn * h
                    rows.append(slot(e))
                    weights.append(1.0)
            recipe[order] = (rows, np.array(weights), h ** 2)
            continue
        if order not in STENCILS:
            raise ConfigurationError(f"unsupported derivative order {order!r}")
        if dim != 1:
            raise ConfigurationError("directional derivatives are 1-D only")
        h = cfg.step(order)
        offs, w = STENCILS[order]
        rows = [slot(np.array([k * h])) for k in offs]
        recipe[order] = (rows, np.array(w), h ** order)
    return disps, recipe


def stencil_values(tape, net, x, orders, cfg):
    """Values and derivatives of every field of ``net`` at x.

    ``net(points)`` must return a list of (batch, 1) tape variables.
    Returns one dict per field mapping 0 -> value, k -> k-th derivative,
    ``"lap"`` -> Laplacian.
    """
    x = np.asarray(x, dtype=np.float64)
    n, dim = x.shape
    disps, recipe = _plan(orders, dim, cfg)
    stacked = np.vstack([x + d for d in disps])
    fields = net(stacked)
    out = []
    for f in fields:
        chunks = tape.split_rows(f, [n] * len(disps))
        derivs = {0: chunks[0]}
        for order, (rows, weights, scale) in recipe.items():
            acc = None
            for r, w in zip(rows, weights):
                term = chunks[r] * w
                acc = term if acc is None else acc + term
            # weights first, one division: constants difference to exactly 0
            derivs[order] = acc * (1.0 / scale)
        out.append(derivs)
    return out


def _single(net):
    def wrapped(points):
        res = net(points)
        return res if isinstance(res, list) else [res]
    return wrapped


def derivative_1d(tape, net, x, order, cfg=StencilConfig()):
    """k-th derivative (k in 1..4) of a single-output ``net`` at x."""
    if order not in STENCILS:
        raise ConfigurationError(f"order must be 1..4, got {order!r}")
    return stencil_values(tape, _single(net), x, [order], cfg)[0][order]


def laplacian(tape, net, x, cfg=StencilConfig()):
    """Sum of 3-point second differences over all axes (2d+1 evaluations)."""
    return stencil_values(tape, _single(net), x, ["lap"], cfg)[0]["lap"]


def _model_net(tape, model):
    return lambda pts: model.outputs(tape, pts)


def assemble(tape, problem, model, x, cfg=None):
    """(residual Vars, field-value Vars) on batch x."""
    cfg = cfg or problem.stencil
    derivs = stencil_values(tape, _model_net(tape, model), x, problem.orders, cfg)
    residuals = problem.residuals(derivs, x)
    return residuals, [d[0] for d in derivs]


def _mean_square(tape, residuals, x):
    total = None
    for res in residuals:
        val = res.value if hasattr(res, "value") else np.asarray(res)
        bad = ~np.isfinite(val)
        if np.any(bad):
            row = int(np.argwhere(bad)[0][0])
            raise TrainingError(f"non-finite residual at x={x[row].tolist()}",
                                point=x[row].tolist())
        term = tape.reduce("mean_square", res)
        total = term if total is None else total + term
    return total


def ls_loss(tape, problem, model, batch, cfg=None):
    """Mean over the batch of the squared residual (summed over equations)."""
    x = getattr(batch, "points", batch)
    residuals, _ = assemble(tape, problem, model, x, cfg)
    return _mean_square(tape, residuals, x)


def boundary_mismatch(tape, problem, model, boundary_batch, cfg=None):
    """Mean-square violation of the boundary conditions."""
    cfg = cfg or problem.stencil
    xb = getattr(boundary_batch, "points", boundary_batch)
    mismatches = problem.boundary_residuals(tape, _model_net(tape, model), xb, cfg)
    return _mean_square(tape, mismatches, xb)


def penalty_loss(tape, problem, model, interior_batch, boundary_batch, lam, cfg=None):
    """Interior mean-square residual + lam * boundary mean-square mismatch."""
    interior = ls_loss(tape, problem, model, interior_batch, cfg)
    if lam == 0:
        return interior
    return interior + lam * boundary_mismatch(tape, problem, model, boundary_batch, cfg)


def system_ls_loss(tape, problem, model, batch, cfg=None):
    """Sum of the mean-square residuals of a two-field system."""
    if problem.n_fields != 2:
        raise ConfigurationError("system_ls_loss needs a two-field problem")
    return ls_loss(tape, problem, model, batch, cfg)
