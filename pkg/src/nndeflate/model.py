"""WrappedNetwork: raw FNN(s) + boundary wrapper + optional probing terms."""

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tape
from .errors import ConfigurationError
from .network import NetworkParams, NetworkSpec, bind, forward, init_params
from .probing import ProbingBasis, init_probing_coeffs, probe_output
from .wrappers import BoundaryWrapper


@dataclass
class WrappedNetwork:
    """One raw network per field sharing ``spec``.

    The first field's extra scalars hold the wrapper constants followed by
    the probing coefficients.  ``input_scale`` multiplies x before it reaches
    the raw network (wrappers always see unscaled x).
    """

    spec: NetworkSpec
    wrapper: BoundaryWrapper
    params: list
    probing: ProbingBasis = None
    input_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.params) != self.wrapper.n_fields:
            raise ConfigurationError(
                f"{self.wrapper.kind} needs {self.wrapper.n_fields} networks")
        need = self.wrapper.n_extra + (self.probing.n_coeffs if self.probing else 0)
        if self.spec.extra_scalars != need:
            raise ConfigurationError(
                f"spec carries {self.spec.extra_scalars} extra scalars, need {need}")
        if self.probing is not None and not self.probing.compatible_with(self.wrapper.kind):
            raise ConfigurationError(
                f"{self.probing.family} probing is not compatible with "
                f"the {self.wrapper.kind} wrapper")

    @classmethod
    def create(cls, input_dim, wrapper, seed, depth=3, width=100, activation="relu_cubed",
               scheme="uniform_fanin", probing=None, input_scale=1.0, wrapper_init=None):
        """Fresh model; field i uses seed ``seed + i``."""
        n_extra = wrapper.n_extra + (probing.n_coeffs if probing else 0)
        spec = NetworkSpec(input_dim, depth, width, activation, n_extra)
        extra = np.zeros(n_extra)
        meta = {}
        if wrapper_init is not None:
            extra[:wrapper.n_extra] = wrapper_init
        if probing is not None:
            c0 = init_probing_coeffs(probing, seed)
            extra[wrapper.n_extra:] = c0
            meta["initial_probing_coeffs"] = c0.tolist()
        params = [init_params(spec, seed, scheme, extra if n_extra else None)]
        for i in range(1, wrapper.n_fields):
            params.append(init_params(spec, seed + i, scheme, extra if n_extra else None))
        return cls(spec, wrapper, params, probing, input_scale, meta)

    @property
    def n_fields(self):
        return self.wrapper.n_fields

    @property
    def theta(self):
        return np.concatenate([p.theta for p in self.params])

    def with_theta(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        n = self.spec.n_params
        if theta.shape != (n * self.n_fields,):
            raise ConfigurationError("parameter vector length mismatch")
        params = [NetworkParams(self.spec, theta[i * n:(i + 1) * n], p.seed, p.scheme)
                  for i, p in enumerate(self.params)]
        return WrappedNetwork(self.spec, self.wrapper, params, self.probing,
                              self.input_scale, dict(self.meta))

    def copy(self):
        return self.with_theta(self.theta.copy())

    def param_keys(self):
        return [f"theta{i}" for i in range(self.n_fields)]

    def outputs(self, tape, x):
        """Wrapped outputs recorded on ``tape``, one (batch, 1) Var per field."""
        x = np.asarray(x, dtype=np.float64)
        scale = self.input_scale
        uhats = []
        for p, key in zip(self.params, self.param_keys()):
            uhats.append(lambda xs, p=p, key=key:
                         forward(tape, self.spec, p, np.asarray(xs) * scale, key))
        extras = []
        coeffs = None
        if self.spec.extra_scalars:
            extra = bind(tape, self.params[0], "theta0")["extra"]
            nw = self.wrapper.n_extra
            extras = [tape.block(extra, i, ()) for i in range(nw)]
            if self.probing is not None:
                coeffs = tape.block(extra, nw, (self.probing.n_coeffs,))
        outs = self.wrapper.apply(tape, uhats, extras, x)
        if coeffs is not None:
            outs[0] = probe_output(tape, outs[0], coeffs, x, self.probing)
        return outs

    def evaluate(self, x):
        """Field values at x as an array of shape (batch, n_fields)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        outs = self.outputs(Tape(), x)
        return np.hstack([o.value for o in outs])

    def __call__(self, x):
        return self.evaluate(x)

    def to_dict(self):
        d = {"spec": asdict(self.spec), "wrapper": self.wrapper.to_dict(),
             "probing": self.probing.to_dict() if self.probing else None,
             "input_scale": self.input_scale, "meta": self.meta,
             "seeds": [int(p.seed) for p in self.params],
             "scheme": self.params[0].scheme}
        return d

    @classmethod
    def from_dict(cls, d, params):
        spec = NetworkSpec(**d["spec"])
        probing = ProbingBasis.from_dict(d["probing"]) if d.get("probing") else None
        return cls(spec, BoundaryWrapper.from_dict(d["wrapper"]), list(params), probing,
                   d.get("input_scale", 1.0), dict(d.get("meta", {})))
