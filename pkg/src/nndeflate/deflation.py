"""Deflated losses and the shift schedule.

The deflation factor is

    sum_k ||u - u_k||^(-p_k) + alpha_n

with the norm taken as the discrete L2 norm over the current batch; the
deflated loss multiplies it onto the least-squares loss on the same batch.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, SourceCollapseError
from .residual import _mean_square, assemble, boundary_mismatch

MIN_DISTANCE = 1e-12


@dataclass(frozen=True)
class ShiftSchedule:
    """Constant shift ``alpha`` or log-linear ramp 10**p0 -> 10**p1."""

    mode: str = "constant"
    alpha: float = 1.0
    p0: float = -2.0
    p1: float = 2.0
    n_iter: int = 1

    def __post_init__(self):
        if self.mode not in ("constant", "varying"):
            raise ConfigurationError(f"unknown shift mode {self.mode!r}")
        if self.mode == "constant" and self.alpha < 0:
            raise ConfigurationError("alpha must be non-negative")
        if self.mode == "varying" and self.p0 > self.p1:
            raise ConfigurationError("varying shift needs p0 <= p1")

    @classmethod
    def constant(cls, alpha):
        return cls("constant", alpha=float(alpha))

    @classmethod
    def varying(cls, p0, p1, n_iter):
        return cls("varying", p0=float(p0), p1=float(p1), n_iter=int(n_iter))

    @classmethod
    def from_range(cls, lo, hi, n_iter):
        """Ramp between two shift values, e.g. (1e-2, 1e2)."""
        return cls.varying(np.log10(lo), np.log10(hi), n_iter)

    def with_iterations(self, n_iter):
        return ShiftSchedule(self.mode, self.alpha, self.p0, self.p1, int(n_iter))

    def to_dict(self):
        if self.mode == "constant":
            return {"mode": "constant", "alpha": self.alpha}
        return {"mode": "varying", "p0": self.p0, "p1": self.p1}


def shift_at(schedule, n):
    if schedule.mode == "constant":
        return schedule.alpha
    N = max(schedule.n_iter, 1)
    return 10.0 ** (schedule.p0 + n * (schedule.p1 - schedule.p0) / N)


class DeflationSource:
    """A frozen known solution with its deflation power.

    ``solution`` is a WrappedNetwork (deep-copied here) or any callable
    mapping points (batch, d) to values (batch, n_fields).
    """

    def __init__(self, solution, power=2.0, label=None):
        if power <= 0:
            raise ConfigurationError("deflation power must be positive")
        self.solution = solution.copy() if hasattr(solution, "copy") else solution
        self.power = float(power)
        self.label = label

    def evaluate(self, x):
        vals = np.asarray(self.solution(x), dtype=np.float64)
        return vals[:, None] if vals.ndim == 1 else vals

    def __repr__(self):
        return f"DeflationSource({self.label!r}, p={self.power})"


def deflation_factor(tape, outputs, sources, batch, alpha):
    """sum_k sum_fields dist(field, source field)^(-p_k) + alpha, on the tape."""
    if not isinstance(outputs, (list, tuple)):
        outputs = [outputs]
    x = getattr(batch, "points", batch)
    total = None
    for src in sources:
        vals = src.evaluate(x)
        for f, out in enumerate(outputs):
            ms = tape.reduce("mean_square", out - vals[:, f:f + 1])
            if np.sqrt(float(ms.value)) < MIN_DISTANCE:
                raise SourceCollapseError(
                    f"distance to deflation source {src.label or ''} vanished")
            term = ms ** (-src.power / 2.0)
            total = term if total is None else total + term
    if total is None:
        return float(alpha)
    return total + float(alpha)


@dataclass
class LossParts:
    loss: object
    ls: object
    factor: object

    @property
    def value(self):
        return float(np.asarray(getattr(self.loss, "value", self.loss)))


def nd_terms(tape, problem, model, sources, batch, alpha, cfg=None,
             boundary_batch=None, lam=0.0):
    """Deflated loss together with its least-squares part and factor."""
    x = getattr(batch, "points", batch)
    residuals, outputs = assemble(tape, problem, model, x, cfg)
    ls = _mean_square(tape, residuals, x)
    if boundary_batch is not None and lam:
        ls = ls + lam * boundary_mismatch(tape, problem, model, boundary_batch, cfg)
    factor = deflation_factor(tape, outputs, sources, x, alpha)
    loss = ls * factor if isinstance(factor, float) else factor * ls
    return LossParts(loss, ls, factor)


def nd_loss(tape, problem, model, sources, batch, alpha, cfg=None):
    """(deflation factor) * (least-squares loss), one shared batch."""
    return nd_terms(tape, problem, model, sources, batch, alpha, cfg).loss


def nd_penalty_loss(tape, problem, model, sources, interior_batch, boundary_batch, lam,
                    alpha, cfg=None):
    """(deflation factor) * (interior residual + lam * boundary mismatch)."""
    return nd_terms(tape, problem, model, sources, interior_batch, alpha, cfg,
                    boundary_batch, lam).loss


def system_nd_loss(tape, problem, model, sources, batch, alpha, cfg=None):
    """Deflated loss of a two-field system; each source carries both fields."""
    if problem.n_fields != 2:
        raise ConfigurationError("system_nd_loss needs a two-field problem")
    return nd_loss(tape, problem, model, sources, batch, alpha, cfg)
