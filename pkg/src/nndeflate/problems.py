"""Catalogue of boundary-value problems.

Residuals are written as (left side) - (right side) of each equation and
use only ``+ - * / **`` so the same function runs on numpy arrays and on
tape variables.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError
from .model import WrappedNetwork
from .probing import ProbingBasis
from .residual import StencilConfig, stencil_values
from .sampling import Domain, rng_for
from .wrappers import BoundaryWrapper


@dataclass
class Problem:
    name: str
    domain: Domain
    orders: tuple
    residual_fn: object
    wrapper: BoundaryWrapper
    constants: dict = field(default_factory=dict)
    n_fields: int = 1
    # 1-D: [(terms, value)], terms = [(coef, order, point)]
    conditions: list = field(default_factory=list)
    # multi-D Dirichlet value per field
    dirichlet: tuple = ()
    probing: dict = None          # default ProbingBasis kwargs (without J)
    trivial: bool = False         # the all-zero raw network is a solution
    input_scale: float = 1.0
    stencil: StencilConfig = field(default_factory=StencilConfig)
    defaults: dict = field(default_factory=dict)
    facts: list = field(default_factory=list)
    init_hook: object = None

    def residuals(self, derivs, x):
        """List of residual arrays/Vars, one per equation."""
        if isinstance(derivs, dict):
            derivs = [derivs]
        for d in derivs:
            for order in self.orders:
                if order not in d:
                    raise ConfigurationError(
                        f"{self.name} needs derivative {order!r}")
        return self.residual_fn(derivs, np.asarray(x, dtype=np.float64), self.constants)

    def boundary_residuals(self, tape, net, xb, cfg=None):
        """Boundary-condition violations for penalty losses."""
        cfg = cfg or self.stencil
        if self.domain.dim == 1:
            points = sorted({pt for terms, _ in self.conditions for _, _, pt in terms})
            orders = sorted({o for terms, _ in self.conditions for _, o, _ in terms})
            derivs = stencil_values(tape, net, np.array(points)[:, None], orders, cfg)[0]
            rows = []
            for terms, value in self.conditions:
                acc = None
                for coef, order, pt in terms:
                    i = points.index(pt)
                    t = tape.take_rows(derivs[order], i, i + 1) * coef
                    acc = t if acc is None else acc + t
                rows.append(acc - value)
            return [tape.concat_rows(rows)]
        outs = net(np.asarray(xb, dtype=np.float64))
        return [o - g for o, g in zip(outs, self.dirichlet)]

    def residual_at(self, derivs, x):
        return self.residuals(derivs, x)

    def make_model(self, seed, width=None, depth=None, probing_J=None, c_range=None,
                   scheme="uniform_fanin", exact=True, activation="relu_cubed"):
        """Fresh model for this problem.

        ``exact=False`` gives a bare network (penalty mode).  ``probing_J``
        adds the problem's default probing family with J terms.
        """
        width = width or self.defaults.get("width", 32)
        depth = depth or self.defaults.get("depth", 3)
        wrapper = self.wrapper if exact else BoundaryWrapper("none")
        probing = None
        if probing_J:
            if not self.probing:
                raise ConfigurationError(f"{self.name} has no default probing family")
            kw = dict(self.probing)
            if c_range is not None:
                kw["c_range"] = tuple(c_range)
            probing = ProbingBasis(J=probing_J, **kw)
        if not exact and self.n_fields == 2:
            raise ConfigurationError("penalty mode is single-field only")
        model = WrappedNetwork.create(self.domain.dim, wrapper, seed, depth, width, activation,
                                      scheme, probing, self.input_scale)
        if exact and self.init_hook is not None:
            model = self.init_hook(model, seed)
        return model

    def trivial_model(self, width=None, depth=None):
        """All-zero raw network(s); a solution when ``trivial`` is set."""
        model = self.make_model(0, width, depth, scheme="uniform_fanin")
        return model.with_theta(np.zeros_like(model.theta))

    def with_constants(self, **overrides):
        consts = dict(self.constants)
        unknown = set(overrides) - set(consts)
        if unknown:
            raise ConfigurationError(f"unknown constants for {self.name}: {sorted(unknown)}")
        consts.update(overrides)
        return replace(self, constants=consts)


# -- residual forms ---------------------------------------------------------

def _painleve(d, x, c):
    u = d[0]
    return [u[2] - (c["quad"] * u[0] ** 2 - c["forcing"] * x)]


def _graef(d, x, c):
    u = d[0]
    return [u[4] - c["beta"] * x * (1.0 + u[0] ** 2)]


def _channel(d, x, c):
    u = d[0]
    g, R = c["gamma"], c["R"]
    return [u[4] + g * (x * u[3] + 3.0 * u[2]) + R * (u[0] * u[3] - u[1] * u[2])]


def _bootstrap_a(d, x, c):
    u = d[0]
    return [u[2] - c["lam"] * (1.0 + u[0] ** 4)]


def _bootstrap_b(d, x, c):
    u = d[0]
    return [u[2] + (np.pi ** 2 / 4.0) * u[0] ** 2 * (u[0] ** 2 - 10.0)]


def _yamabe(d, x, c):
    u = d[0]
    dim = x.shape[1]
    inv_r3 = 1.0 / np.linalg.norm(x, axis=1, keepdims=True) ** 3
    if dim == 2:
        return [-8.0 * u["lap"] - 0.1 * u[0] + u[0] ** 5 * inv_r3]
    coef = 4.0 * (dim - 1) / (dim - 2)
    power = (dim + 2) / (dim - 2)
    return [-coef * u["lap"] - 0.125 * u[0] + u[0] ** power * inv_r3]


def _reaction_diffusion(d, x, c):
    u, v = d
    uv2 = u[0] * v[0] ** 2
    F, k = c["F"], c["k"]
    return [c["eps_u"] * u["lap"] - uv2 + F * (1.0 - u[0]),
            c["eps_v"] * v["lap"] + uv2 - (F + k) * v[0]]


def _manufactured(d, x, c):
    return [d[0][2] - 2.0]


# -- problem-specific initialisation ----------------------------------------

def _channel_init(model, seed):
    """c ~ U[-5, 0] and zero bias in the last hidden layer."""
    theta = model.theta.copy()
    p = model.params[0]
    start, _ = p.offsets[f"b{model.spec.depth}"]
    theta[start:start + model.spec.width] = 0.0
    estart, _ = p.offsets["extra"]
    theta[estart] = rng_for(int(seed), 0xC).uniform(-5.0, 0.0)
    out = model.with_theta(theta)
    out.meta["initial_c"] = float(theta[estart])
    return out


def _point(order, pt, coef=1.0):
    return (coef, order, pt)


# -- catalogue ---------------------------------------------------------------

def _build():
    unit = Domain.interval(0.0, 1.0)
    lr_default = (-2.0, -3.0)
    probs = {}

    probs["painleve"] = Problem(
        "painleve", unit, (0, 2), _painleve,
        BoundaryWrapper("dirichlet_1d", {"a": 0.0, "b": 1.0, "a0": 0.0, "b0": float(np.sqrt(10.0))}),
        constants={"quad": 100.0, "forcing": 1000.0},
        conditions=[([_point(0, 0.0)], 0.0), ([_point(0, 1.0)], float(np.sqrt(10.0)))],
        defaults={"width": 32, "n_points": 256, "n_iter": 5000, "lr": (-2.5, -4.0),
                  "campaign": {"ls": {"seeds": 2}, "nd": {"seeds": 2}}},
        facts=["has exactly two solutions, with u1'(0) > 0 and u2'(0) < 0 (Hastings & Troy 1989)"])

    gamma = 0.2
    probs["graef"] = Problem(
        "graef", unit, (0, 4), _graef,
        BoundaryWrapper("three_point_graef", {"gamma": gamma}),
        constants={"beta": 10.0, "gamma": gamma},
        conditions=[([_point(0, 0.0)], 0.0), ([_point(1, 1.0)], 0.0), ([_point(2, 1.0)], 0.0),
                    ([_point(2, 0.0), _point(2, gamma, -1.0)], 0.0)],
        defaults={"width": 32, "n_points": 256, "n_iter": 3000, "lr": lr_default},
        facts=["at least two positive solutions for beta=10, gamma=1/5 (Graef et al. 2003)"])

    probs["channel_flow"] = Problem(
        "channel_flow", unit, (0, 1, 2, 3, 4), _channel,
        BoundaryWrapper("channel_flow"),
        constants={"R": -11.0, "gamma": 1.5},
        conditions=[([_point(0, 0.0)], 0.0), ([_point(2, 0.0)], 0.0),
                    ([_point(0, 1.0)], 1.0), ([_point(1, 1.0)], 0.0)],
        defaults={"width": 32, "n_points": 256, "n_iter": 4000, "lr": lr_default},
        init_hook=_channel_init,
        facts=["three solutions found by homotopy analysis for R=-11, gamma=1.5 (Liao 2012)"])

    mixed_bc = [([_point(1, 0.0)], 0.0), ([_point(0, 1.0)], 0.0)]
    probs["bootstrap_a"] = Problem(
        "bootstrap_a", unit, (0, 2), _bootstrap_a,
        BoundaryWrapper("bootstrap_mixed"),
        constants={"lam": 1.2},
        conditions=mixed_bc,
        probing={"family": "cosine_mixed_1d", "c_range": (-5.0, 5.0), "params": {"a": 0.0, "b": 1.0}},
        defaults={"width": 32, "n_points": 256, "n_iter": 3000, "lr": (-2.0, -4.0),
                  "campaign": {"ls": {"seeds": 2}, "nd": {"seeds": 4, "lr": (-1.5, -4.0)},
                               "probe": {"seeds": 6}},
                  "j_ladder": (1,)},
        facts=["two solutions for 0 < lambda < lambda* = 1.30107 (Hao et al. 2014)"])

    probs["bootstrap_b"] = Problem(
        "bootstrap_b", unit, (0, 2), _bootstrap_b,
        BoundaryWrapper("bootstrap_mixed"),
        conditions=mixed_bc,
        probing={"family": "cosine_mixed_1d", "c_range": (-5.0, 5.0), "params": {"a": 0.0, "b": 1.0}},
        trivial=True,
        defaults={"width": 32, "n_points": 256, "n_iter": 3000, "lr": (-2.0, -4.0),
                  "campaign": {"ls": {"seeds": 1}, "nd": {"seeds": 2},
                               "probe": {"seeds": 6, "n_iter": 5000}}},
        facts=["eight solutions in total including u0 = 0 (Hao et al. 2014)"])

    for dim in (2, 3, 6):
        dom = Domain.annulus(dim, 1.0, 100.0)
        probs[f"yamabe{dim}d"] = Problem(
            f"yamabe{dim}d", dom, (0, "lap"), _yamabe,
            BoundaryWrapper("annulus_radial", {"r": 1.0, "R": 100.0}),
            constants={"dim": dim},
            dirichlet=(1.0,),
            probing={"family": "sine_annulus", "c_range": (-1.0, 1.0),
                     "params": {"r": 1.0, "R": 100.0}},
            input_scale=1.0 / 100.0,
            stencil=StencilConfig().scaled(dom.diameter),
            defaults={"width": 32, "n_points": 512, "n_iter": 2000, "lr": (-1.0, -2.0)},
            facts={2: ["nine solutions found by classical deflation; fourteen by network deflation"],
                   3: ["eleven solutions found by network deflation"],
                   6: ["nine solutions found by network deflation"]}[dim])

    star = Domain.star_3d()
    probs["reaction_diffusion"] = Problem(
        "reaction_diffusion", star, (0, "lap"), _reaction_diffusion,
        BoundaryWrapper("star_domain_pair"),
        # NOT taken from the source study, which does not print these values
        constants={"F": 0.05, "k": 0.05, "eps_u": 2e-3, "eps_v": 1e-3},
        n_fields=2,
        dirichlet=(1.0, 0.0),
        trivial=True,
        stencil=StencilConfig().scaled(star.diameter),
        defaults={"width": 32, "n_points": 512, "n_iter": 2000, "lr": (-2.0, -5.0)},
        facts=["trivial pair u=1, v=0; more than 100 distinct pairs reported at full scale"])

    probs["manufactured_linear"] = Problem(
        "manufactured_linear", unit, (0, 2), _manufactured,
        BoundaryWrapper("dirichlet_1d", {"a": 0.0, "b": 1.0, "a0": 0.0, "b0": 1.0}),
        conditions=[([_point(0, 0.0)], 0.0), ([_point(0, 1.0)], 1.0)],
        defaults={"width": 32, "n_points": 256, "n_iter": 2000, "lr": lr_default},
        facts=["unique solution u(x) = x^2"])
    return probs


_CATALOGUE = _build()
ALIASES = {"yamabe": "yamabe2d", "yamabe2": "yamabe2d"}


def catalogue():
    return list(_CATALOGUE.values())


def problem_names():
    return list(_CATALOGUE)


def get_problem(name, **constants):
    key = ALIASES.get(name, name)
    if key not in _CATALOGUE:
        raise ConfigurationError(
            f"unknown problem {name!r}; available: {', '.join(_CATALOGUE)}")
    prob = _CATALOGUE[key]
    return prob.with_constants(**constants) if constants else prob


def residual_at(problem, derivs, x):
    """Left-minus-right of the problem's equation(s) from supplied derivatives."""
    return problem.residuals(derivs, x)
