"""Adam, the exponential learning-rate schedule and the training loop."""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .deflation import ShiftSchedule, nd_terms, shift_at
from .errors import ConfigurationError, NumericDomainError, TrainingError
from .sampling import sample_boundary, sample_interior

LOSS_MODES = ("ls", "penalty", "nd", "nd_penalty", "system_nd")


@dataclass(frozen=True)
class LrSchedule:
    """tau_n = 10**(q0 + n (q1 - q0) / N_I), decaying from 10**q0 to 10**q1."""

    q0: float = -2.0
    q1: float = -3.0
    n_iter: int = 1

    def __post_init__(self):
        if self.q0 < self.q1:
            raise ConfigurationError("learning rate must decay (q0 >= q1)")

    @classmethod
    def from_range(cls, low, high, n_iter):
        """From a table-style range [low, high]: start at high, end at low."""
        return cls(float(np.log10(high)), float(np.log10(low)), int(n_iter))


def lr_at(schedule, n):
    N = max(schedule.n_iter, 1)
    return 10.0 ** (schedule.q0 + n * (schedule.q1 - schedule.q0) / N)


@dataclass
class AdamState:
    size: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = None
    v: np.ndarray = None

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)


def adam_step(state, params, grads, lr):
    """One bias-corrected Adam update; returns the new parameter vector."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != state.m.shape or np.shape(params) != state.m.shape:
        raise ConfigurationError("parameter/gradient length mismatch")
    if not np.all(np.isfinite(grads)):
        raise TrainingError("non-finite gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1.0 - b1) * grads
    state.v = b2 * state.v + (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class TrainConfig:
    mode: str = "ls"
    n_iter: int = 2000
    n_points: int = 256
    lr: tuple = (-2.0, -3.0)             # (q0, q1) powers of ten
    shift: ShiftSchedule = field(default_factory=lambda: ShiftSchedule.constant(1.0))
    sources: list = field(default_factory=list)
    penalty: float = 0.0
    n_boundary: int = 64
    stencil: object = None

    def __post_init__(self):
        if self.mode not in LOSS_MODES:
            raise ConfigurationError(f"unknown loss mode {self.mode!r}")
        if self.n_iter < 0 or self.n_points < 1:
            raise ConfigurationError("n_iter >= 0 and n_points >= 1 required")
        self.lr = tuple(float(q) for q in self.lr)
        if self.lr[0] < self.lr[1]:
            raise ConfigurationError("learning-rate powers must decay (q0 >= q1)")

    def lr_schedule(self):
        return LrSchedule(self.lr[0], self.lr[1], self.n_iter)

    def shift_schedule(self):
        return self.shift.with_iterations(self.n_iter)


@dataclass
class TrainReport:
    loss: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    factor: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    model: object = None
    wall_time: float = 0.0

    def __len__(self):
        return len(self.loss)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "loss", "residual", "factor", "alpha", "lr"])
            for i in range(len(self.loss)):
                w.writerow([i] + [f"{v:.17g}" for v in (self.loss[i], self.residual[i],
                                                        self.factor[i], self.alpha[i],
                                                        self.lr[i])])


def check_config(problem, model, config):
    if model.n_fields != problem.n_fields:
        raise ConfigurationError("model and problem disagree on the number of fields")
    if config.mode == "system_nd" and problem.n_fields != 2:
        raise ConfigurationError("system_nd needs a two-field problem")
    penalty_mode = config.mode in ("penalty", "nd_penalty")
    if not penalty_mode and model.wrapper.kind == "none":
        raise ConfigurationError(f"{config.mode} loss needs a boundary-exact wrapper")
    if model.wrapper.kind not in ("none", problem.wrapper.kind):
        raise ConfigurationError(
            f"model wrapper {model.wrapper.kind} does not match problem {problem.wrapper.kind}")
    if config.mode in ("ls", "penalty") and config.sources:
        raise ConfigurationError(f"{config.mode} loss takes no deflation sources")


def loss_parts(tape, problem, model, config, batch, boundary_batch, alpha):
    """Assemble the configured loss on one batch."""
    cfg = config.stencil
    if config.mode in ("ls", "penalty"):
        sources, alpha = [], 1.0
    else:
        sources = config.sources
    lam = config.penalty if config.mode in ("penalty", "nd_penalty") else 0.0
    return nd_terms(tape, problem, model, sources, batch, alpha, cfg,
                    boundary_batch if lam else None, lam)


def train(problem, model, config, run_seed=0, callback=None):
    """Run ``config.n_iter`` Adam steps with a fresh batch every iteration.

    Raises TrainingError / NumericDomainError on divergence or collapse onto
    a source; the exception carries ``iteration`` and the partial ``report``.
    """
    check_config(problem, model, config)
    lr_sched = config.lr_schedule()
    shift = config.shift_schedule()
    theta = model.theta.copy()
    state = AdamState(theta.size)
    report = TrainReport()
    keys = model.param_keys()
    start = time.perf_counter()
    n = 0
    # overflow surfaces as a non-finite loss and is reported as TrainingError
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            for n in range(config.n_iter):
                batch = sample_interior(problem.domain, config.n_points, (run_seed, n), n)
                bbatch = None
                if config.mode in ("penalty", "nd_penalty") and config.penalty:
                    bbatch = sample_boundary(problem.domain, config.n_boundary, (run_seed, n, 1), n)
                alpha = shift_at(shift, n)
                tau = lr_at(lr_sched, n)
                current = model.with_theta(theta)
                tape = Tape()
                parts = loss_parts(tape, problem, current, config, batch.points, bbatch, alpha)
                loss_value = float(parts.loss.value)
                if not np.isfinite(loss_value):
                    raise TrainingError("non-finite loss", iteration=n)
                grads = tape.backward(parts.loss)
                g = np.concatenate([grads[k] for k in keys])
                theta = adam_step(state, theta, g, tau)
                ls_value = float(parts.ls.value)
                report.loss.append(loss_value)
                report.residual.append(float(np.sqrt(ls_value)))
                report.factor.append(float(np.asarray(getattr(parts.factor, "value", parts.factor))))
                report.alpha.append(alpha)
                report.lr.append(tau)
                if callback is not None:
                    callback(n, report)
        except (TrainingError, NumericDomainError) as exc:
            report.model = model.with_theta(theta)
            report.wall_time = time.perf_counter() - start
            if getattr(exc, "iteration", None) is None:
                exc.iteration = n
            exc.report = report
            raise
    report.model = model.with_theta(theta)
    report.wall_time = time.perf_counter() - start
    return report
