"""Fully connected feed-forward networks stored as one flat parameter vector.

Layout of the flat vector (row-major blocks, in this order)::

    W1 (N, d), b1 (N,), W2 (N, N), b2 (N,), ..., WL (N, N), bL (N,), a (N,),
    extra scalars (n_extra,)

The extra scalars hold wrapper constants (c, c1, c2) and probing
coefficients so the optimiser treats them like any other weight.
"""

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import ACTIVATIONS, Var
from .errors import ConfigurationError, RecordIOError

INIT_SCHEMES = ("uniform_fanin", "uniform_literal", "xavier", "he", "zeros")

MAGIC = b"NNDP"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sII")   # magic, version, header length


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    depth: int = 3
    width: int = 100
    activation: str = "relu_cubed"
    extra_scalars: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.depth < 1 or self.width < 1:
            raise ConfigurationError(f"invalid network shape {self}")
        if self.extra_scalars < 0:
            raise ConfigurationError("extra_scalars must be >= 0")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")

    def layout(self):
        """Ordered (name, shape) pairs describing the flat vector."""
        d, N = self.input_dim, self.width
        blocks = []
        fan_in = d
        for layer in range(1, self.depth + 1):
            blocks.append((f"W{layer}", (N, fan_in)))
            blocks.append((f"b{layer}", (N,)))
            fan_in = N
        blocks.append(("a", (N,)))
        if self.extra_scalars:
            blocks.append(("extra", (self.extra_scalars,)))
        return blocks

    @property
    def n_params(self):
        d, N, L = self.input_dim, self.width, self.depth
        return N * d + N + (L - 1) * (N * N + N) + N + self.extra_scalars


def offset_table(spec):
    table = {}
    start = 0
    for name, shape in spec.layout():
        size = int(np.prod(shape))
        table[name] = (start, shape)
        start += size
    return table


@dataclass
class NetworkParams:
    spec: NetworkSpec
    theta: np.ndarray
    seed: int = 0
    scheme: str = "uniform_fanin"
    offsets: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (self.spec.n_params,):
            raise ConfigurationError(
                f"parameter vector has length {self.theta.size}, "
                f"spec implies {self.spec.n_params}")
        self.offsets = offset_table(self.spec)

    def block(self, name):
        start, shape = self.offsets[name]
        return self.theta[start:start + int(np.prod(shape))].reshape(shape)

    @property
    def extra(self):
        if "extra" not in self.offsets:
            return np.zeros(0)
        return self.block("extra")

    def copy(self):
        return NetworkParams(self.spec, self.theta.copy(), self.seed, self.scheme)


def init_params(spec, seed, scheme="uniform_fanin", extra=None):
    """Draw a parameter vector; identical (spec, seed, scheme) give identical output.

    ``uniform_fanin`` draws U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and
    biases; ``uniform_literal`` uses U(-sqrt(fan_in), sqrt(fan_in)).
    ``xavier`` uses N(0, 1/fan_in) weights and zero biases; ``he`` uses
    variance 2/(fan_in + fan_out) for weights and 2/fan_in for biases.
    The output vector ``a`` is handled as a final 1-wide layer.
    """
    if scheme not in INIT_SCHEMES:
        raise ConfigurationError(f"unknown init scheme {scheme!r}")
    rng = np.random.Generator(np.random.Philox(seed))
    theta = np.zeros(spec.n_params)
    table = offset_table(spec)
    for name, (start, shape) in table.items():
        if name == "extra":
            continue
        size = int(np.prod(shape))
        if name == "a":
            fan_in, fan_out = spec.width, 1
        else:
            layer = int(name[1:])
            fan_in = spec.input_dim if layer == 1 else spec.width
            fan_out = spec.width
        is_bias = name.startswith("b")
        if scheme == "uniform_fanin":
            bound = 1.0 / np.sqrt(fan_in)
            vals = rng.uniform(-bound, bound, size)
        elif scheme == "uniform_literal":
            bound = np.sqrt(fan_in)
            vals = rng.uniform(-bound, bound, size)
        elif scheme == "xavier":
            vals = np.zeros(size) if is_bias else rng.normal(0.0, np.sqrt(1.0 / fan_in), size)
        elif scheme == "he":
            var = 2.0 / fan_in if is_bias else 2.0 / (fan_in + fan_out)
            vals = rng.normal(0.0, np.sqrt(var), size)
        else:
            vals = np.zeros(size)
        theta[start:start + size] = vals
    if extra is not None:
        extra = np.asarray(extra, dtype=np.float64)
        if extra.shape != (spec.extra_scalars,):
            raise ConfigurationError("extra scalar override has the wrong length")
        start, _ = table["extra"]
        theta[start:] = extra
    return NetworkParams(spec, theta, seed, scheme)


def bind(tape, params, key="theta"):
    """Register ``params`` on ``tape`` and return its blocks as tape variables."""
    def build():
        theta = tape.parameter(key, params.theta)
        return {name: tape.block(theta, start, shape)
                for name, (start, shape) in params.offsets.items()}
    return tape.memo(("bind", key), build)


def forward(tape, spec, params, x, key="theta"):
    """Network output of shape (batch, 1) recorded on ``tape``."""
    if not isinstance(x, Var):
        x = np.asarray(x, dtype=np.float64)
    if len(x.shape) != 2 or x.shape[1] != spec.input_dim:
        raise ConfigurationError(
            f"input has shape {x.shape}, network expects (batch, {spec.input_dim})")
    blocks = bind(tape, params, key)
    h = x
    for layer in range(1, spec.depth + 1):
        h = tape.activation(spec.activation,
                            tape.affine(blocks[f"W{layer}"], blocks[f"b{layer}"], h))
    a = blocks["a"]
    return tape.affine(tape.block(a, 0, (1, spec.width)), None, h)


def evaluate(spec, params, x):
    """Plain numpy evaluation, no tape."""
    h = np.asarray(x, dtype=np.float64)
    for layer in range(1, spec.depth + 1):
        z = h @ params.block(f"W{layer}").T + params.block(f"b{layer}")
        h = np.maximum(z, 0.0) ** 3 if spec.activation == "relu_cubed" else np.tanh(z)
    return h @ params.block("a")[:, None]


# -- parameter files --------------------------------------------------------

def save_params(path, params):
    """Write header + little-endian float64 payload.

    Layout: ``b"NNDP"``, uint32 version, uint32 header length, UTF-8 JSON
    header (spec fields, seed, scheme, n_params, crc32 of the payload), payload.
    """
    payload = params.theta.astype("<f8").tobytes()
    header = json.dumps({
        "spec": asdict(params.spec),
        "seed": int(params.seed),
        "scheme": params.scheme,
        "n_params": int(params.theta.size),
        "crc32": zlib.crc32(payload),
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(payload)


def load_params(path, spec=None):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise RecordIOError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _PREFIX.size:
        raise RecordIOError(f"{path}: truncated header")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise RecordIOError(f"{path}: not a parameter file")
    if version != FORMAT_VERSION:
        raise RecordIOError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    try:
        header = json.loads(raw[_PREFIX.size:_PREFIX.size + hlen])
    except ValueError as exc:
        raise RecordIOError(f"{path}: corrupt header") from exc
    payload = raw[_PREFIX.size + hlen:]
    if len(payload) != 8 * header["n_params"] or zlib.crc32(payload) != header["crc32"]:
        raise RecordIOError(f"{path}: checksum failure")
    stored = NetworkSpec(**header["spec"])
    if spec is not None and spec != stored:
        raise ConfigurationError(f"{path}: stored spec {stored} differs from {spec}")
    theta = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return NetworkParams(stored, theta, header["seed"], header["scheme"])
