import numpy as np
import pytest

from nndeflate.autodiff import Tape


def fd_gradient(f, theta, step=1e-6):
    """Central differences of scalar f at theta, one coordinate at a time."""
    theta = np.asarray(theta, dtype=np.float64)
    g = np.zeros_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += step
        tm[i] -= step
        g[i] = (f(tp) - f(tm)) / (2.0 * step)
    return g


def grad_mismatch(analytic, numeric, small=1e-4):
    """Worst violation of: rel err < 1e-6, or abs err < 1e-8 when |grad| < small.

    Returns a number that must be < 1 for the check to pass.
    """
    analytic, numeric = np.ravel(analytic), np.ravel(numeric)
    err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    tiny = scale < small
    out = np.where(tiny, err / 1e-8, err / (1e-6 * np.where(tiny, 1.0, scale)))
    return float(out.max()) if out.size else 0.0


def model_loss_and_grad(model, loss_fn):
    """loss_fn(tape, model) -> scalar Var; returns (value, flat gradient)."""
    tape = Tape()
    loss = loss_fn(tape, model)
    grads = tape.backward(loss)
    return float(loss.value), np.concatenate([grads[k] for k in model.param_keys()])


def model_loss(model, loss_fn, theta):
    return float(loss_fn(Tape(), model.with_theta(theta)).value)


@pytest.fixture
def tmp_registry(tmp_path, monkeypatch):
    root = tmp_path / "reg"
    monkeypatch.setenv("NNDEFLATE_REGISTRY", str(root))
    return root


# -- boundary-exactness suite shared by the wrapper tests and acceptance ----

def _fd(f, x0, order, h):
    """Central-difference oracle on a plain numpy callable f(x: (n,1)) -> (n,)."""
    if order == 1:
        pts, w = [-1, 1], [-0.5, 0.5]
    elif order == 2:  # 5-point, fourth order
        pts, w = [-2, -1, 0, 1, 2], [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12]
    else:
        raise ValueError(order)
    xs = np.array([[x0 + k * h] for k in pts])
    return float(np.dot(w, f(xs))) / h ** order


def wrapper_cases():
    """(label, model factory(seed), value checks, derivative checks).

    Value checks: list of (points (n,d), field, target).
    Derivative checks (1-D): list of (terms [(coef, order, point)], target).
    """
    from nndeflate.model import WrappedNetwork
    from nndeflate.problems import get_problem
    from nndeflate.sampling import sample_boundary
    from nndeflate.wrappers import BoundaryWrapper

    def one_d(kind, **consts):
        wrapper = BoundaryWrapper(kind, consts)

        def make(seed):
            m = WrappedNetwork.create(1, wrapper, seed, depth=2, width=8)
            theta = m.theta.copy()
            if wrapper.n_extra:
                start, _ = m.params[0].offsets["extra"]
                rng = np.random.default_rng(seed)
                theta[start:start + wrapper.n_extra] = rng.uniform(-5, 5, wrapper.n_extra)
            return m.with_theta(theta)
        return make

    def pt(v):
        return np.array([[v]])

    sq10 = float(np.sqrt(10.0))
    cases = [
        ("dirichlet_1d", one_d("dirichlet_1d", a=0.0, b=1.0, a0=0.0, b0=sq10),
         [(pt(0.0), 0, 0.0), (pt(1.0), 0, sq10)], []),
        ("dirichlet_1d fractional", one_d("dirichlet_1d", a=-1.0, b=2.0, a0=0.5, b0=-1.5,
                                          pa=0.5, pb=0.75),
         [(pt(-1.0), 0, 0.5), (pt(2.0), 0, -1.5)], []),
        ("one_sided_1d", one_d("one_sided_1d", a=0.0, a0=1.0, a1=-2.0),
         [(pt(0.0), 0, 1.0)], [([(1.0, 1, 0.0)], -2.0)]),
        ("mixed_1d", one_d("mixed_1d", a=0.0, b=1.0, a0=0.7, b0=-0.3),
         [(pt(1.0), 0, -0.3)], [([(1.0, 1, 0.0)], 0.7)]),
        ("bootstrap_mixed", one_d("bootstrap_mixed"),
         [(pt(1.0), 0, 0.0)], [([(1.0, 1, 0.0)], 0.0)]),
        ("neumann_1d", one_d("neumann_1d", a=0.0, b=1.0, a0=0.4, b0=-1.2),
         [], [([(1.0, 1, 0.0)], 0.4), ([(1.0, 1, 1.0)], -1.2)]),
        ("three_point_graef", one_d("three_point_graef", gamma=0.2),
         [(pt(0.0), 0, 0.0)],
         [([(1.0, 1, 1.0)], 0.0), ([(1.0, 2, 1.0)], 0.0),
          ([(1.0, 2, 0.0), (-1.0, 2, 0.2)], 0.0)]),
        ("channel_flow", one_d("channel_flow"),
         [(pt(0.0), 0, 0.0), (pt(1.0), 0, 1.0)],
         [([(1.0, 2, 0.0)], 0.0), ([(1.0, 1, 1.0)], 0.0)]),
    ]
    for name in ("yamabe2d", "yamabe3d", "yamabe6d", "reaction_diffusion"):
        prob = get_problem(name)
        xb = sample_boundary(prob.domain, 64, (7, prob.domain.dim)).points
        checks = [(xb, f, g) for f, g in enumerate(prob.dirichlet)]
        label = prob.wrapper.kind + ("" if name == "reaction_diffusion" else f" d={prob.domain.dim}")
        cases.append((label, lambda s, prob=prob: prob.make_model(s, width=8, depth=2),
                      checks, []))
    return cases


def bc_errors(make, values, derivs, n_draws=100):
    """Worst value and derivative violations over ``n_draws`` random draws."""
    worst_v, worst_d = 0.0, 0.0
    for seed in range(n_draws):
        m = make(seed)
        for x, f, target in values:
            worst_v = max(worst_v, float(np.abs(m(x)[:, f] - target).max()))
        for terms, target in derivs:
            fn = lambda xs: m(xs)[:, 0]
            acc = sum(c * _fd(fn, p, order, 1e-5 if order == 1 else 1e-3)
                      for c, order, p in terms)
            worst_d = max(worst_d, abs(acc - target))
    return worst_v, worst_d


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
