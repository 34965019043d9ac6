"""Uniform Monte-Carlo sampling of problem domains and the discrete L2 norm.

All randomness goes through numpy's counter-based Philox generator keyed by
a SeedSequence, so ``rng_for(run_seed, n)`` gives an independent,
reproducible stream for iteration ``n`` of run ``run_seed``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .wrappers import star_radius

DOMAIN_KINDS = ("interval", "annulus", "star_3d")


def rng_for(*keys):
    """Philox stream for a tuple of non-negative integer keys."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(keys))))


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        return rng_for(*seed)
    return rng_for(seed)


@dataclass(frozen=True)
class Domain:
    kind: str
    dim: int = 1
    a: float = 0.0
    b: float = 1.0
    r: float = 1.0
    R: float = 100.0
    amplitude: float = 0.1
    lobes: int = 5
    bound: float = field(default=1.1)

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ConfigurationError(f"unknown domain kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigurationError("dimension must be >= 1")
        if self.kind == "interval" and not (self.a < self.b and self.dim == 1):
            raise ConfigurationError("interval needs a < b and dim == 1")
        if self.kind == "annulus" and not 0 < self.r < self.R:
            raise ConfigurationError("annulus needs 0 < r < R")
        if self.kind == "star_3d" and self.dim != 3:
            raise ConfigurationError("star domain is three-dimensional")

    @classmethod
    def interval(cls, a=0.0, b=1.0):
        return cls("interval", 1, a=a, b=b)

    @classmethod
    def annulus(cls, dim, r=1.0, R=100.0):
        return cls("annulus", dim, r=r, R=R)

    @classmethod
    def star_3d(cls, amplitude=0.1, lobes=5):
        return cls("star_3d", 3, amplitude=amplitude, lobes=lobes,
                   bound=1.0 + abs(amplitude))

    @property
    def diameter(self):
        if self.kind == "interval":
            return self.b - self.a
        if self.kind == "annulus":
            return 2.0 * self.R
        return 2.0 * self.bound

    def contains(self, x):
        """Boolean mask of points strictly inside the domain."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "interval":
            return (x[:, 0] > self.a) & (x[:, 0] < self.b)
        rad = np.linalg.norm(x, axis=1)
        if self.kind == "annulus":
            return (rad > self.r) & (rad < self.R)
        return rad < star_radius(x, self.amplitude, self.lobes)[:, 0]

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class SampleBatch:
    points: np.ndarray
    seed: object = None
    iteration: int = 0

    def __len__(self):
        return self.points.shape[0]


def _directions(rng, n, d):
    v = rng.standard_normal((n, d))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return v / norms


def sample_interior(domain, n_points, seed, iteration=0):
    """i.i.d. uniform points in the open domain, shape (n_points, dim)."""
    if n_points < 1:
        raise ConfigurationError("n_points must be >= 1")
    rng = _rng(seed)
    if domain.kind == "interval":
        u = rng.random((n_points, 1))
        u = np.clip(u, np.finfo(float).tiny, np.nextafter(1.0, 0.0))
        pts = domain.a + (domain.b - domain.a) * u
        pts = np.where(pts <= domain.a, np.nextafter(domain.a, domain.b), pts)
    elif domain.kind == "annulus":
        d, r, R = domain.dim, domain.r, domain.R
        u = rng.random((n_points, 1))
        s = (r ** d + u * (R ** d - r ** d)) ** (1.0 / d)
        s = np.clip(s, np.nextafter(r, R), np.nextafter(R, r))
        pts = _directions(rng, n_points, d) * s
    else:
        pts = _rejection_star(domain, n_points, rng)
    return SampleBatch(pts, seed, iteration)


def _rejection_star(domain, n_points, rng):
    chunks, have = [], 0
    first = True
    while have < n_points:
        m = max(64, int(1.5 * (n_points - have)) + 16)
        cand = _directions(rng, m, 3) * domain.bound * rng.random((m, 1)) ** (1.0 / 3.0)
        keep = cand[domain.contains(cand)]
        if first:
            if keep.shape[0] < 0.01 * m:
                raise ConfigurationError("rejection acceptance below 1%")
            first = False
        chunks.append(keep)
        have += keep.shape[0]
    return np.vstack(chunks)[:n_points]


def sample_boundary(domain, n_points, seed, iteration=0):
    """Uniform samples of the boundary (endpoints alternate for intervals)."""
    if n_points < 1:
        raise ConfigurationError("n_points must be >= 1")
    rng = _rng(seed)
    if domain.kind == "interval":
        ends = np.array([domain.a, domain.b])
        pts = ends[np.arange(n_points) % 2][:, None]
    elif domain.kind == "annulus":
        d, r, R = domain.dim, domain.r, domain.R
        p_outer = R ** (d - 1) / (R ** (d - 1) + r ** (d - 1))
        radius = np.where(rng.random((n_points, 1)) < p_outer, R, r)
        pts = _directions(rng, n_points, d) * radius
    else:
        pts = _star_surface(domain, n_points, rng)
    return SampleBatch(pts, seed, iteration)


def _star_surface(domain, n_points, rng):
    # surface r = rho(phi); area element rho * sqrt(rho_phi^2 + rho^2 sin^2 theta)
    amp, k = domain.amplitude, domain.lobes
    rho_max = 1.0 + abs(amp)
    w_max = rho_max * np.sqrt((amp * k) ** 2 + rho_max ** 2)
    chunks, have = [], 0
    while have < n_points:
        m = 2 * (n_points - have) + 16
        theta = rng.uniform(0.0, np.pi, m)
        phi = rng.uniform(-np.pi, np.pi, m)
        rho = 1.0 + amp * np.sin(k * phi)
        drho = amp * k * np.cos(k * phi)
        w = rho * np.sqrt(drho ** 2 + (rho * np.sin(theta)) ** 2)
        ok = rng.random(m) * w_max < w
        t, p, rr = theta[ok], phi[ok], rho[ok]
        chunks.append(np.column_stack([rr * np.sin(t) * np.cos(p),
                                       rr * np.sin(t) * np.sin(p),
                                       rr * np.cos(t)]))
        have += int(ok.sum())
    return np.vstack(chunks)[:n_points]


def discrete_l2(values):
    """Root mean square over the batch."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ConfigurationError("discrete_l2 of an empty batch")
    # scale first so tiny or huge values neither underflow nor overflow when squared
    scale = float(np.abs(v).max())
    if scale == 0.0 or not np.isfinite(scale):
        return scale
    w = v / scale
    return scale * float(np.sqrt(np.mean(w * w)))
