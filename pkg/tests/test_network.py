import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nndeflate.autodiff import Tape
from nndeflate.errors import ConfigurationError, RecordIOError
from nndeflate.network import (NetworkSpec, evaluate, forward, init_params, load_params,
                               offset_table, save_params)


def test_parameter_count_example():
    assert NetworkSpec(1, 3, 100).n_params == 20500
    assert NetworkSpec(1, 3, 100, extra_scalars=3).n_params == 20503


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(1, 12), st.integers(0, 4))
def test_offset_table_partitions_vector(d, L, N, extra):
    spec = NetworkSpec(d, L, N, extra_scalars=extra)
    table = offset_table(spec)
    pos = 0
    for name, (start, shape) in table.items():
        assert start == pos
        pos += int(np.prod(shape))
    assert pos == spec.n_params


def test_invalid_spec():
    with pytest.raises(ConfigurationError):
        NetworkSpec(0)
    with pytest.raises(ConfigurationError):
        NetworkSpec(1, activation="relu")


@pytest.mark.parametrize("scheme", ["uniform_fanin", "xavier", "he", "uniform_literal"])
def test_init_is_deterministic(scheme):
    spec = NetworkSpec(2, 3, 10)
    a, b = init_params(spec, 5, scheme), init_params(spec, 5, scheme)
    assert a.theta.tobytes() == b.theta.tobytes()
    assert not np.array_equal(a.theta, init_params(spec, 6, scheme).theta)


def test_xavier_biases_zero():
    p = init_params(NetworkSpec(2, 3, 10), 0, "xavier")
    for layer in (1, 2, 3):
        assert np.all(p.block(f"b{layer}") == 0.0)


def test_uniform_fanin_bound():
    p = init_params(NetworkSpec(1, 3, 100), 0, "uniform_fanin")
    assert np.abs(p.block("W2")).max() <= 0.1
    assert np.abs(p.block("W3")).max() <= 0.1
    assert np.abs(p.block("W1")).max() <= 1.0


def test_extra_scalars_default_zero_and_override():
    spec = NetworkSpec(1, 2, 4, extra_scalars=2)
    assert np.all(init_params(spec, 0).extra == 0.0)
    assert init_params(spec, 0, extra=[1.5, -2.0]).extra.tolist() == [1.5, -2.0]


def test_forward_examples():
    spec = NetworkSpec(1, 3, 8)
    zero = init_params(spec, 0, "zeros")
    x = np.linspace(-1, 1, 7)[:, None]
    out = forward(Tape(), spec, zero, x)
    assert out.value.shape == (7, 1)
    assert np.all(out.value == 0.0)
    with pytest.raises(ConfigurationError):
        forward(Tape(), spec, zero, np.zeros((3, 2)))


@pytest.mark.parametrize("act", ["relu_cubed", "tanh"])
def test_forward_matches_plain_evaluation(act):
    spec = NetworkSpec(2, 3, 6, act)
    p = init_params(spec, 1)
    x = np.random.default_rng(0).uniform(-1, 1, (9, 2))
    np.testing.assert_allclose(forward(Tape(), spec, p, x).value, evaluate(spec, p, x),
                               rtol=1e-14, atol=1e-15)


def test_forward_lipschitz_in_params():
    spec = NetworkSpec(1, 3, 8)
    p = init_params(spec, 2)
    x = np.linspace(0, 1, 50)[:, None]
    base = evaluate(spec, p, x)
    ratios = []
    for eps in (1e-4, 1e-6):
        q = p.copy()
        q.theta[:] += eps
        ratios.append(np.abs(evaluate(spec, q, x) - base).max() / eps)
    assert np.isfinite(ratios).all()
    assert ratios[1] < 2.0 * ratios[0] + 1e-6


def test_save_load_roundtrip(tmp_path):
    spec = NetworkSpec(3, 2, 5, "tanh", extra_scalars=1)
    p = init_params(spec, 11, "he", extra=[0.25])
    path = tmp_path / "p.nndp"
    save_params(path, p)
    q = load_params(path)
    assert q.theta.tobytes() == p.theta.tobytes()
    assert (q.spec, q.seed, q.scheme) == (spec, 11, "he")


def test_truncated_file_fails(tmp_path):
    path = tmp_path / "p.nndp"
    save_params(path, init_params(NetworkSpec(1, 2, 4), 0))
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(RecordIOError):
        load_params(path)
    path.write_bytes(raw[:6])
    with pytest.raises(RecordIOError):
        load_params(path)


def test_corrupt_payload_and_version(tmp_path):
    path = tmp_path / "p.nndp"
    save_params(path, init_params(NetworkSpec(1, 2, 4), 0))
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(RecordIOError):
        load_params(path)
    raw[-1] ^= 0xFF
    raw[4] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(RecordIOError, match="version"):
        load_params(path)


def test_load_with_wrong_spec(tmp_path):
    path = tmp_path / "p.nndp"
    save_params(path, init_params(NetworkSpec(1, 2, 4), 0))
    with pytest.raises(ConfigurationError):
        load_params(path, NetworkSpec(1, 2, 5))
