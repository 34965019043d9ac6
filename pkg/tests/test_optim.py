import csv

import numpy as np
import pytest

from nndeflate.deflation import DeflationSource, ShiftSchedule
from nndeflate.errors import ConfigurationError, TrainingError
from nndeflate.optim import AdamState, LrSchedule, TrainConfig, adam_step, lr_at, train
from nndeflate.problems import get_problem


def test_lr_examples():
    s = LrSchedule.from_range(1e-3, 1e-2, 10000)
    assert lr_at(s, 0) == 1e-2
    assert lr_at(s, 10000) == pytest.approx(1e-3, rel=1e-15)
    assert lr_at(s, 5000) == pytest.approx(10 ** -2.5, rel=1e-15)
    assert lr_at(s, 5000) == pytest.approx(3.162e-3, rel=1e-3)
    with pytest.raises(ConfigurationError):
        LrSchedule(-3, -2, 10)


def test_adam_first_step():
    st = AdamState(1)
    theta = adam_step(st, np.zeros(1), np.array([0.5]), 0.1)
    # bias-corrected m_hat = g, v_hat = g^2
    want = -0.1 * 0.5 / (0.5 + 1e-8)
    assert theta[0] == pytest.approx(want, rel=1e-15)
    assert theta[0] == pytest.approx(-0.099999998, abs=1e-9)
    assert st.t == 1


def test_adam_zero_gradient():
    st = AdamState(2)
    adam_step(st, np.zeros(2), np.array([1.0, -1.0]), 0.1)
    m, v = st.m.copy(), st.v.copy()
    p = np.array([0.3, 0.4])
    out = adam_step(st, p, np.zeros(2), 0.1)
    np.testing.assert_array_equal(st.m, 0.9 * m)
    np.testing.assert_array_equal(st.v, 0.999 * v)
    assert np.all(np.isfinite(out))
    st0 = AdamState(2)
    np.testing.assert_array_equal(adam_step(st0, p, np.zeros(2), 0.1), p)


def test_adam_errors():
    with pytest.raises(TrainingError):
        adam_step(AdamState(1), np.zeros(1), np.array([np.nan]), 0.1)
    with pytest.raises(ConfigurationError):
        adam_step(AdamState(2), np.zeros(1), np.zeros(1), 0.1)


def test_adam_v_nonnegative():
    st = AdamState(5)
    rng = np.random.default_rng(0)
    p = np.zeros(5)
    for _ in range(20):
        p = adam_step(st, p, rng.normal(size=5), 0.01)
        assert np.all(st.v >= 0)


def _quick(seed=0, n_iter=30):
    prob = get_problem("manufactured_linear")
    cfg = TrainConfig(n_iter=n_iter, n_points=32, lr=(-2, -3))
    return train(prob, prob.make_model(seed, width=8), cfg, run_seed=seed)


def test_train_is_deterministic():
    a, b = _quick(1), _quick(1)
    assert a.loss == b.loss
    assert a.model.theta.tobytes() == b.model.theta.tobytes()
    assert _quick(2).loss != a.loss


def test_zero_iterations():
    prob = get_problem("manufactured_linear")
    m = prob.make_model(0, width=8)
    rep = train(prob, m, TrainConfig(n_iter=0))
    assert len(rep) == 0
    assert rep.model.theta.tobytes() == m.theta.tobytes()


def test_report_lengths_and_csv(tmp_path):
    rep = _quick(n_iter=12)
    for col in (rep.loss, rep.residual, rep.factor, rep.alpha, rep.lr):
        assert len(col) == 12
    path = tmp_path / "r.csv"
    rep.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["iteration", "loss", "residual", "factor", "alpha", "lr"]
    assert len(rows) == 13 and float(rows[1][1]) == rep.loss[0]


def test_config_consistency_errors():
    prob = get_problem("painleve")
    bare = prob.make_model(0, width=8, exact=False)
    with pytest.raises(ConfigurationError):
        train(prob, bare, TrainConfig(mode="ls", n_iter=1))
    with pytest.raises(ConfigurationError):
        train(prob, prob.make_model(0, width=8),
              TrainConfig(mode="ls", n_iter=1, sources=[DeflationSource(bare)]))
    with pytest.raises(ConfigurationError):
        train(prob, prob.make_model(0, width=8), TrainConfig(mode="system_nd", n_iter=1))
    with pytest.raises(ConfigurationError):
        TrainConfig(mode="sgd")
    with pytest.raises(ConfigurationError):
        TrainConfig(lr=(-3, -2))


@pytest.mark.filterwarnings("ignore:overflow")
def test_divergence_reports_iteration():
    prob = get_problem("painleve")
    cfg = TrainConfig(n_iter=200, n_points=32, lr=(3.0, 3.0))
    with pytest.raises(TrainingError) as info:
        train(prob, prob.make_model(0, width=8), cfg)
    assert info.value.iteration is not None
    assert len(info.value.report) == info.value.iteration


def test_collapse_onto_source_raises():
    from nndeflate.errors import SourceCollapseError
    prob = get_problem("painleve")
    m = prob.make_model(0, width=8)
    cfg = TrainConfig(mode="nd", n_iter=3, n_points=16, sources=[DeflationSource(m)])
    with pytest.raises(SourceCollapseError):
        train(prob, m, cfg)


def test_shift_schedule_applied():
    prob = get_problem("painleve")
    m = prob.make_model(0, width=8)
    src = DeflationSource(prob.make_model(1, width=8))
    cfg = TrainConfig(mode="nd", n_iter=10, n_points=16, sources=[src],
                      shift=ShiftSchedule.varying(-2, 2, 1))
    rep = train(prob, m, cfg)
    assert rep.alpha[0] == 0.01
    assert rep.alpha[5] == pytest.approx(1.0)


def test_manufactured_smoke():
    prob = get_problem("manufactured_linear")
    cfg = TrainConfig(n_iter=2000, n_points=128, lr=(-2, -3))
    rep = train(prob, prob.make_model(0, width=32), cfg)
    x = np.linspace(0, 1, 201)[:, None]
    err = np.abs(rep.model(x)[:, 0] - x[:, 0] ** 2).max()
    assert err < 1e-2
    first, last = np.median(rep.loss[:20]), np.median(rep.loss[-20:])
    assert last < first * 1e-3
