"""Boundary-exact network compositions.

Every ``wrap_*`` function takes a callable ``uhat(points) -> Var`` (the raw
network, shape (batch, 1)) and returns a tape variable whose boundary values
hold for any parameter values.  Factors that depend on x only are computed in
numpy and enter the tape as constants.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericDomainError

WRAPPER_KINDS = ("dirichlet_1d", "one_sided_1d", "mixed_1d", "neumann_1d",
                 "three_point_graef", "channel_flow", "bootstrap_mixed",
                 "annulus_radial", "star_domain_pair", "none")


def _is_int(p):
    return float(p) == int(p)


def _left(x, a, p):
    """(x - a)**p; fractional p needs x >= a."""
    base = x - a
    if not _is_int(p) and np.any(base < 0):
        raise NumericDomainError(f"(x - {a})**{p} with x < {a}")
    return base ** p


def _right(x, b, p):
    """Vanishing factor at the right end: (x - b)**p for integer p, else -(b - x)**p."""
    if _is_int(p):
        return (x - b) ** p
    base = b - x
    if np.any(base < 0):
        raise NumericDomainError(f"({b} - x)**{p} with x > {b}")
    return -(base ** p)


def _check_power(p, lo, hi, closed_lo=False):
    ok = (lo <= p if closed_lo else lo < p) and p <= hi
    if not ok:
        raise ConfigurationError(f"power {p} outside ({lo}, {hi}]")


def _col(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return x


def wrap_dirichlet(tape, uhat, x, a, b, a0, b0, pa=1.0, pb=1.0):
    """u(a) = a0, u(b) = b0 via (x-a)^pa (x-b)^pb uhat + linear lift."""
    if not a < b:
        raise ConfigurationError("need a < b")
    _check_power(pa, 0.0, 1.0)
    _check_power(pb, 0.0, 1.0)
    x = _col(x)
    h = _left(x, a, pa) * _right(x, b, pb)
    lift = (b0 - a0) * (x - a) / (b - a) + a0
    return uhat(x) * h + lift


def wrap_one_sided(tape, uhat, x, a, a0, a1, pa=2.0):
    """u(a) = a0, u'(a) = a1."""
    _check_power(pa, 1.0, 2.0)
    x = _col(x)
    return uhat(x) * _left(x, a, pa) + (a1 * (x - a) + a0)


def wrap_mixed(tape, uhat, x, a, b, a0, b0, pa=2.0):
    """u'(a) = a0, u(b) = b0; evaluates uhat at x and at b."""
    _check_power(pa, 1.0, 2.0)
    x = _col(x)
    both = uhat(np.vstack([x, [[b]]]))
    inner, at_b = tape.split_rows(both, [x.shape[0], 1])
    lift = a0 * x + b0 - a0 * b
    return inner * _left(x, a, pa) - at_b * (b - a) ** pa + lift


def wrap_neumann(tape, uhat, c1, c2, x, a, b, a0, b0, pa=2.0, pb=2.0):
    """u'(a) = a0, u'(b) = b0; c1, c2 are trainable scalars."""
    _check_power(pa, 1.0, 2.0)
    _check_power(pb, 1.0, 2.0)
    x = _col(x)
    damp = np.exp(pa * x / (a - b)) * _left(x, a, pa)
    lift = (b0 - a0) / (2.0 * (b - a)) * (x - a) ** 2 + a0 * x
    inner = uhat(x) * _right(x, b, pb) + c2
    return inner * damp + c1 + lift


def graef_denominator(gamma):
    den = -12.0 * gamma ** 2 + 18.0 * gamma
    if den == 0:
        raise ConfigurationError(f"gamma={gamma} makes the c_gamma denominator vanish")
    return den


def wrap_three_point_graef(tape, uhat, x, gamma, h=1e-4):
    """u(0) = u'(1) = u''(1) = 0 and u''(0) = u''(gamma).

    u = (x-1)^3 uhat(x) + uhat(0) + c_gamma x (x-1)^3, where c_gamma uses
    3-point second differences of (x-1)^3 uhat at gamma and 0.
    """
    if not 0 < gamma < 1:
        raise ConfigurationError("gamma must lie in (0, 1)")
    den = graef_denominator(gamma)
    x = _col(x)
    aux = np.array([[0.0], [gamma - h], [gamma], [gamma + h], [-h], [h]])
    cube_aux = (aux - 1.0) ** 3
    out = uhat(np.vstack([x, aux]))
    inner, aux_vals = tape.split_rows(out, [x.shape[0], aux.shape[0]])
    g = aux_vals * cube_aux
    # rows of g: x=0, gamma-h, gamma, gamma+h, -h, +h
    # weights give g''(gamma) - g''(0) from two 3-point second differences
    weights = np.array([[2.0], [1.0], [-2.0], [1.0], [-1.0], [-1.0]]) / h ** 2
    c_gamma = tape.reduce("sum", g * weights) / den
    u0 = tape.take_rows(aux_vals, 0, 1)
    return inner * (x - 1.0) ** 3 + u0 + c_gamma * (x * (x - 1.0) ** 3)


def wrap_channel_flow(tape, uhat, c, x):
    """u(0) = u''(0) = 0, u(1) = 1, u'(1) = 0."""
    x = _col(x)
    outer = x * (x - 1.0) ** 2 * np.exp(2.0 * x)
    return (uhat(x) * x ** 2 + c) * outer + np.sin(np.pi * x / 2.0)


def annulus_factor(x, r, R):
    rad = np.linalg.norm(x, axis=1, keepdims=True)
    return np.sin(np.pi * (rad - r) / (R - r))


def wrap_annulus(tape, uhat, x, r, R):
    """u = 1 on |x| = r and |x| = R."""
    if not 0 < r < R:
        raise ConfigurationError("need 0 < r < R")
    x = _col(x)
    return uhat(x) * annulus_factor(x, r, R) + 1.0


def star_radius(x, amplitude=0.1, lobes=5):
    """rho(x) = 1 + amplitude * sin(lobes * arg(x1 + i x2))."""
    return 1.0 + amplitude * np.sin(lobes * np.arctan2(x[:, 1:2], x[:, 0:1]))


def star_factor(x, amplitude=0.1, lobes=5):
    return (x * x).sum(axis=1, keepdims=True) - star_radius(x, amplitude, lobes) ** 2


def wrap_star_domain_pair(tape, uhat, vhat, x, amplitude=0.1, lobes=5):
    """u = 1, v = 0 on |x| = rho(x)."""
    x = _col(x)
    f = star_factor(x, amplitude, lobes)
    return uhat(x) * f + 1.0, vhat(x) * f


@dataclass
class BoundaryWrapper:
    """Wrapper kind plus its constants, serialisable as a plain dict."""

    kind: str
    consts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in WRAPPER_KINDS:
            raise ConfigurationError(f"unknown wrapper kind {self.kind!r}")
        self.consts = dict(self.consts)

    @property
    def n_extra(self):
        return {"channel_flow": 1, "neumann_1d": 2}.get(self.kind, 0)

    @property
    def n_fields(self):
        return 2 if self.kind == "star_domain_pair" else 1

    def apply(self, tape, uhats, extras, x):
        """Wrapped outputs, one per field.

        ``uhats`` is a list of raw-network callables, ``extras`` a list of
        scalar tape variables holding the wrapper constants.
        """
        k, c = self.kind, self.consts
        u = uhats[0]
        if k == "none":
            return [uh(_col(x)) for uh in uhats]
        if k == "dirichlet_1d":
            return [wrap_dirichlet(tape, u, x, c["a"], c["b"], c["a0"], c["b0"],
                                   c.get("pa", 1.0), c.get("pb", 1.0))]
        if k == "one_sided_1d":
            return [wrap_one_sided(tape, u, x, c["a"], c["a0"], c["a1"], c.get("pa", 2.0))]
        if k == "mixed_1d":
            return [wrap_mixed(tape, u, x, c["a"], c["b"], c["a0"], c["b0"], c.get("pa", 2.0))]
        if k == "bootstrap_mixed":
            return [wrap_mixed(tape, u, x, 0.0, 1.0, 0.0, 0.0, 2.0)]
        if k == "neumann_1d":
            return [wrap_neumann(tape, u, extras[0], extras[1], x, c["a"], c["b"],
                                 c["a0"], c["b0"], c.get("pa", 2.0), c.get("pb", 2.0))]
        if k == "three_point_graef":
            return [wrap_three_point_graef(tape, u, x, c.get("gamma", 0.2), c.get("h", 1e-4))]
        if k == "channel_flow":
            return [wrap_channel_flow(tape, u, extras[0], x)]
        if k == "annulus_radial":
            return [wrap_annulus(tape, u, x, c["r"], c["R"])]
        if k == "star_domain_pair":
            return list(wrap_star_domain_pair(tape, u, uhats[1], x,
                                              c.get("amplitude", 0.1), c.get("lobes", 5)))
        raise ConfigurationError(k)

    def to_dict(self):
        return {"kind": self.kind, "consts": dict(self.consts)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d.get("consts", {}))


__all__ = ["BoundaryWrapper", "WRAPPER_KINDS", "wrap_dirichlet", "wrap_one_sided",
           "wrap_mixed", "wrap_neumann", "wrap_three_point_graef", "wrap_channel_flow",
           "wrap_annulus", "wrap_star_domain_pair", "annulus_factor", "star_radius",
           "star_factor", "graef_denominator"]
