"""Structure-probing bases: extra trainable terms sum_j c_j xi_j(x)."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .sampling import rng_for

FAMILIES = ("cosine_mixed_1d", "sine_annulus", "planewave", "radial_sine")

# families whose basis functions satisfy the homogeneous BC of these wrappers
_COMPATIBLE = {
    "cosine_mixed_1d": {"mixed_1d", "bootstrap_mixed"},
    "sine_annulus": {"annulus_radial"},
    "planewave": {"none"},
    "radial_sine": {"none"},
}


@dataclass
class ProbingBasis:
    family: str
    J: int = 1
    c_range: tuple = (-5.0, 5.0)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown probing family {self.family!r}")
        if self.J < 1:
            raise ConfigurationError("J must be >= 1")
        self.c_range = tuple(self.c_range)
        self.params = dict(self.params)
        if self.family == "planewave" and "wavevectors" not in self.params:
            dim = int(self.params.get("dim", 2))
            rng = rng_for(int(self.params.get("direction_seed", 0)), 7)
            dirs = rng.standard_normal((self.J, dim))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            self.params["wavevectors"] = (dirs * np.arange(1, self.J + 1)[:, None]).tolist()

    @property
    def n_coeffs(self):
        return 2 * self.J if self.family == "planewave" else self.J

    def compatible_with(self, wrapper_kind):
        return wrapper_kind in _COMPATIBLE[self.family]

    def basis(self, x):
        """Matrix of basis values, shape (batch, n_coeffs)."""
        x = np.asarray(x, dtype=np.float64)
        j = np.arange(1, self.J + 1)
        p = self.params
        if self.family == "cosine_mixed_1d":
            a, b = p.get("a", 0.0), p.get("b", 1.0)
            return np.cos((2 * j - 1) * np.pi * (x[:, :1] - a) / (2.0 * (b - a)))
        rad = np.linalg.norm(x, axis=1, keepdims=True)
        if self.family == "sine_annulus":
            r, R = p.get("r", 1.0), p.get("R", 100.0)
            return np.sin(j * np.pi * (rad - r) / (R - r))
        if self.family == "radial_sine":
            return np.sin(j * np.pi * rad)
        k = np.asarray(p["wavevectors"], dtype=np.float64)
        phase = x @ k.T
        out = np.empty((x.shape[0], 2 * self.J))
        out[:, 0::2] = np.sin(phase)
        out[:, 1::2] = np.cos(phase)
        return out

    def to_dict(self):
        return {"family": self.family, "J": self.J, "c_range": list(self.c_range),
                "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], d["J"], tuple(d["c_range"]), d.get("params", {}))


def probe_output(tape, base_output, coeffs, x, basis, wrapper_kind=None):
    """base_output + sum_j c_j xi_j(x); ``coeffs`` is a tape variable of shape (n,)."""
    if wrapper_kind is not None and not basis.compatible_with(wrapper_kind):
        raise ConfigurationError(
            f"{basis.family} probing is not compatible with the {wrapper_kind} wrapper")
    xi = basis.basis(x)
    row = tape.block(coeffs, 0, (1, basis.n_coeffs))
    return base_output + tape.affine(row, None, xi)


def init_probing_coeffs(basis, seed):
    """Zeros except the last coefficient (pair, for plane waves) ~ U(c_range)."""
    rng = rng_for(int(seed), 0x5052)
    c = np.zeros(basis.n_coeffs)
    lo, hi = basis.c_range
    if basis.family == "planewave":
        c[-2:] = rng.uniform(lo, hi, 2)
    else:
        c[-1] = rng.uniform(lo, hi)
    return c


def pretrain_to_target(model, target, domain, iters=500, lr=1e-2, seed=0, n_points=256):
    """Fit a wrapped network to ``target`` by mean-square regression.

    Used to start a solve from a prescribed initial guess such as
    ``2 - u_k``.  ``target`` maps points (batch, d) to values (batch,) or
    (batch, n_fields).  Returns the fitted model and the discrete L2 fit
    error on a fresh batch.
    """
    from .autodiff import Tape
    from .errors import TrainingError
    from .optim import AdamState, adam_step
    from .sampling import discrete_l2, sample_interior

    def values(x):
        t = np.asarray(target(x), dtype=np.float64)
        return t[:, None] if t.ndim == 1 else t

    theta = model.theta.copy()
    state = AdamState(theta.size)
    keys = model.param_keys()
    for n in range(int(iters)):
        x = sample_interior(domain, n_points, (int(seed), n, 0x50)).points
        current = model.with_theta(theta)
        tape = Tape()
        outs = current.outputs(tape, x)
        want = values(x)
        loss = None
        for f, out in enumerate(outs):
            term = tape.reduce("mean_square", out - want[:, f:f + 1])
            loss = term if loss is None else loss + term
        if not np.isfinite(float(loss.value)):
            raise TrainingError("non-finite regression loss", iteration=n)
        grads = tape.backward(loss)
        theta = adam_step(state, theta, np.concatenate([grads[k] for k in keys]), lr)
    fitted = model.with_theta(theta)
    x = sample_interior(domain, 4 * n_points, (int(seed), int(iters), 0x51)).points
    err = discrete_l2(fitted(x) - values(x))
    return fitted, float(err)
