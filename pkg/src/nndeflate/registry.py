"""Solution registry, verification, distinctness and the staged campaign.

On disk a registry root holds one directory per problem::

    <root>/<problem>/registry.json     array of record dicts
    <root>/<problem>/<id>.f<k>.nndp    parameter file of field k

Record ids are ``u0, u1, ...`` per problem, assigned in admission order and
never reused.  Records are only ever appended.
"""

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .deflation import DeflationSource, ShiftSchedule
from .errors import ConfigurationError, NNDeflateError, RecordIOError, TrainingError
from .model import WrappedNetwork
from .network import load_params, save_params
from .optim import TrainConfig, train
from .problems import get_problem
from .residual import assemble
from .autodiff import Tape
from .sampling import discrete_l2, sample_boundary, sample_interior

log = logging.getLogger(__name__)

CANONICAL_SEED = 20210701
VERIFY_SAMPLES = 10000
DEFAULT_DELTA = 0.05
# distances below this are treated as "the same function" whatever the
# relative measure says; it matters only next to the zero solution
DEFAULT_ATOL = 1e-2
DEFAULT_THRESHOLD = 1e-2
ENV_ROOT = "NNDEFLATE_REGISTRY"


@dataclass
class SolutionRecord:
    id: str
    problem: str
    constants: dict
    param_files: list
    model: dict                  # WrappedNetwork.to_dict()
    train: dict                  # n_iter, n_points, lr, shift, sources, seed, mode, penalty
    residual: float
    residual_se: float = 0.0
    verify_samples: int = VERIFY_SAMPLES
    verify_seed: int = CANONICAL_SEED
    created: str = ""
    stage: str = ""
    root: str = field(default=None, repr=False, compare=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("root")
        return d

    @classmethod
    def from_dict(cls, d, root=None):
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d and k != "root"}
        return cls(root=root, **known)

    @property
    def sources(self):
        return list(self.train.get("sources", []))

    def get_problem(self):
        return get_problem(self.problem, **self.constants)

    def load_model(self):
        if self.root is None:
            raise RecordIOError(f"record {self.id} is not attached to a registry")
        if self.model.get("trivial"):
            return get_problem(self.problem, **self.constants).trivial_model()
        params = [load_params(os.path.join(self.root, f)) for f in self.param_files]
        return WrappedNetwork.from_dict(self.model, params)


def _as_model(obj):
    return obj.load_model() if isinstance(obj, SolutionRecord) else obj


def residual_stats(problem, model, n_samples=VERIFY_SAMPLES, seed=CANONICAL_SEED):
    """(discrete L2 residual, Monte-Carlo standard error) on a fresh batch."""
    x = sample_interior(problem.domain, int(n_samples), (int(seed), 0x7E41)).points
    residuals, _ = assemble(Tape(), problem, model, x)
    sq = sum(np.asarray(r.value if hasattr(r, "value") else r)[:, 0] ** 2 for r in residuals)
    if not np.all(np.isfinite(sq)):
        return float("inf"), float("inf")
    ms = float(np.mean(sq))
    rms = float(np.sqrt(ms))
    se_ms = float(np.std(sq, ddof=1) / np.sqrt(sq.size)) if sq.size > 1 else 0.0
    se = se_ms / (2.0 * rms) if rms > 0 else 0.0
    return rms, se


def boundary_error(problem, model, n_samples=1024, seed=CANONICAL_SEED):
    """Discrete L2 violation of the boundary conditions.

    Zero up to rounding (and finite-difference error for derivative
    conditions) for boundary-exact wrappers; this is what exposes the
    spurious solutions of penalty-mode training.
    """
    xb = sample_boundary(problem.domain, int(n_samples), (int(seed), 0xB0)).points
    tape = Tape()
    mism = problem.boundary_residuals(tape, lambda pts: model.outputs(tape, pts), xb)
    return discrete_l2(np.hstack([np.asarray(getattr(m, "value", m)) for m in mism]))


def verify(record, n_samples=VERIFY_SAMPLES, seed=CANONICAL_SEED, problem=None):
    """Discrete L2 of the residual of a stored (or in-memory) solution."""
    if problem is None:
        if not isinstance(record, SolutionRecord):
            raise ConfigurationError("verifying a bare model needs its problem")
        problem = record.get_problem()
    return residual_stats(problem, _as_model(record), n_samples, seed)[0]


def distance(rec_a, rec_b, n_samples=VERIFY_SAMPLES, seed=CANONICAL_SEED, problem=None):
    """(relative, absolute) discrete L2 distance, maximised over fields."""
    if isinstance(rec_a, SolutionRecord) and isinstance(rec_b, SolutionRecord):
        if (rec_a.problem, rec_a.constants) != (rec_b.problem, rec_b.constants):
            raise ConfigurationError(
                f"records {rec_a.id} and {rec_b.id} belong to different problems")
    if problem is None:
        for r in (rec_a, rec_b):
            if isinstance(r, SolutionRecord):
                problem = r.get_problem()
                break
        else:
            raise ConfigurationError("comparing bare models needs their problem")
    x = sample_interior(problem.domain, int(n_samples), (int(seed), 0xD157)).points
    ua = np.asarray(_as_model(rec_a)(x), dtype=np.float64)
    ub = np.asarray(_as_model(rec_b)(x), dtype=np.float64)
    rel, ab = 0.0, 0.0
    for f in range(ua.shape[1]):
        na = np.sqrt(np.mean(ua[:, f] ** 2))
        nb = np.sqrt(np.mean(ub[:, f] ** 2))
        d = np.sqrt(np.mean((ua[:, f] - ub[:, f]) ** 2))
        rel = max(rel, d / (na + nb + 1e-12))
        ab = max(ab, d)
    return float(rel), float(ab)


def distinct(rec_a, rec_b, n_samples=VERIFY_SAMPLES, seed=CANONICAL_SEED, delta=DEFAULT_DELTA,
             atol=DEFAULT_ATOL, problem=None):
    """(is_distinct, relative distance).

    Distinct means relative distance > delta and absolute distance > atol.
    """
    if delta <= 0:
        raise ConfigurationError("delta must be positive")
    rel, ab = distance(rec_a, rec_b, n_samples, seed, problem)
    return bool(rel > delta and ab > atol), rel


# -- storage -------------------------------------------------------------------

def default_root():
    return os.environ.get(ENV_ROOT, os.path.join(os.getcwd(), "nndeflate-registry"))


class Registry:
    """Append-only store of solution records rooted at a directory."""

    def __init__(self, root=None):
        self.root = os.path.abspath(root or default_root())

    def problem_dir(self, problem):
        return os.path.join(self.root, problem)

    def _index(self, problem):
        return os.path.join(self.problem_dir(problem), "registry.json")

    def problems(self):
        if not os.path.isdir(self.root):
            return []
        return sorted(p for p in os.listdir(self.root)
                      if os.path.isfile(self._index(p)))

    def records(self, problem):
        path = self._index(problem)
        if not os.path.exists(path):
            return []
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, ValueError) as exc:
            raise RecordIOError(f"cannot read {path}: {exc}") from exc
        if not isinstance(raw, list):
            raise RecordIOError(f"{path}: expected a JSON array")
        return [SolutionRecord.from_dict(d, self.problem_dir(problem)) for d in raw]

    def all_records(self):
        return [r for p in self.problems() for r in self.records(p)]

    def get(self, ref, problem=None):
        """Look up ``u3`` (optionally scoped by problem) or ``painleve/u3``."""
        if "/" in ref:
            problem, ref = ref.split("/", 1)
        pool = self.records(problem) if problem else self.all_records()
        hits = [r for r in pool if r.id == ref]
        if not hits:
            raise ConfigurationError(f"no record {ref!r}" + (f" for {problem}" if problem else ""))
        if len(hits) > 1:
            names = ", ".join(sorted(f"{r.problem}/{r.id}" for r in hits))
            raise ConfigurationError(f"record id {ref!r} is ambiguous ({names}); "
                                     "qualify it as problem/id")
        return hits[0]

    def next_id(self, problem):
        used = [int(r.id[1:]) for r in self.records(problem) if r.id[1:].isdigit()]
        return f"u{max(used) + 1 if used else 0}"

    def add(self, problem, model, train_info, residual, residual_se=0.0, stage="",
            verify_samples=VERIFY_SAMPLES, verify_seed=CANONICAL_SEED, trivial=False):
        """Store ``model`` as a new record and return it."""
        prob = problem if not isinstance(problem, str) else get_problem(problem)
        for src in train_info.get("sources", []):
            self.get(src["id"], prob.name)
        rid = self.next_id(prob.name)
        pdir = self.problem_dir(prob.name)
        os.makedirs(pdir, exist_ok=True)
        files = []
        mdict = model.to_dict()
        if trivial:
            mdict["trivial"] = True
        else:
            for k, p in enumerate(model.params):
                name = f"{rid}.f{k}.nndp"
                save_params(os.path.join(pdir, name), p)
                files.append(name)
        rec = SolutionRecord(
            id=rid, problem=prob.name, constants=dict(prob.constants), param_files=files,
            model=mdict, train=dict(train_info), residual=float(residual),
            residual_se=float(residual_se), verify_samples=int(verify_samples),
            verify_seed=int(verify_seed),
            created=time.strftime("%Y-%m-%dT%H:%M:%S%z"), stage=stage, root=pdir)
        existing = [r.to_dict() for r in self.records(prob.name)]
        tmp = self._index(prob.name) + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(existing + [rec.to_dict()], fh, indent=1)
        os.replace(tmp, self._index(prob.name))
        return rec


def parse_grid(text, dim):
    """``a:b:n`` (every axis) or ``a:b:n,a:b:n,...`` into grid points."""
    axes = []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 3:
            raise ConfigurationError(f"grid axis {part!r} is not a:b:n")
        a, b, n = float(bits[0]), float(bits[1]), int(bits[2])
        if n < 1:
            raise ConfigurationError("grid needs n >= 1")
        axes.append(np.linspace(a, b, n))
    if len(axes) == 1:
        axes = axes * dim
    if len(axes) != dim:
        raise ConfigurationError(f"grid has {len(axes)} axes, problem has {dim}")
    if np.prod([len(a) for a in axes], dtype=float) > 2e6:
        raise ConfigurationError("grid too large")
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def export_csv(record, dest, grid):
    """Write solution values at grid points; header x1..xd, u[, v].

    ``dest`` is a path or an open text stream.  Returns the row count.
    """
    model = record.load_model()
    problem = record.get_problem()
    pts = parse_grid(grid, problem.domain.dim) if isinstance(grid, str) else np.asarray(grid)
    if problem.domain.dim > 1:
        inside = problem.domain.contains(pts)
        pts = pts[inside]
    vals = model(pts) if len(pts) else np.zeros((0, model.n_fields))
    names = [f"x{i + 1}" for i in range(pts.shape[1])] + ["u", "v"][:vals.shape[1]]
    lines = [",".join(names)]
    table = np.hstack([pts, vals]) + 0.0      # no "-0" in the output
    lines += [",".join(f"{v:.17g}" for v in row) for row in table]
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w") as fh:
            fh.write(text)
    return len(pts)


# -- campaign ------------------------------------------------------------------

@dataclass
class StageConfig:
    seeds: int = 2
    n_iter: int = 3000
    n_points: int = 256
    lr: tuple = (-2.0, -3.0)
    shift: ShiftSchedule = field(default_factory=lambda: ShiftSchedule.constant(1.0))

    def __post_init__(self):
        if self.seeds < 0 or self.n_iter < 0 or self.n_points < 1:
            raise ConfigurationError("stage budgets must be non-negative")


@dataclass
class CampaignConfig:
    """Budgets and thresholds of the four-stage search.

    Stages: ``ls`` plain least squares, ``nd`` deflation with a constant
    shift, ``probe`` deflation with structure probing for every J in
    ``j_ladder``, ``probe_vs`` the same with a varying shift.
    """

    ls: StageConfig = field(default_factory=StageConfig)
    nd: StageConfig = field(default_factory=StageConfig)
    probe: StageConfig = field(default_factory=lambda: StageConfig(seeds=0))
    probe_vs: StageConfig = field(default_factory=lambda: StageConfig(
        seeds=0, shift=ShiftSchedule.varying(-2.0, 0.0, 1)))
    delta: float = DEFAULT_DELTA
    atol: float = DEFAULT_ATOL
    threshold: float = DEFAULT_THRESHOLD
    j_ladder: tuple = (1, 2)
    power: float = 2.0
    max_solutions: int = None
    verify_samples: int = VERIFY_SAMPLES
    jobs: int = 1

    def __post_init__(self):
        if self.delta <= 0 or self.threshold <= 0 or self.atol < 0:
            raise ConfigurationError("delta and threshold must be positive")
        if self.max_solutions is not None and self.max_solutions < 1:
            raise ConfigurationError("max_solutions must be >= 1")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1")

    @classmethod
    def for_problem(cls, problem, **overrides):
        """Desk-scale defaults tuned per problem."""
        d = problem.defaults
        base = dict(n_iter=d.get("n_iter", 3000), n_points=d.get("n_points", 256),
                    lr=tuple(d.get("lr", (-2.0, -3.0))))
        stages = d.get("campaign", {})

        def stage(name, **kw):
            merged = dict(base, **kw)
            merged.update(stages.get(name, {}))
            return StageConfig(**merged)

        cfg = cls(ls=stage("ls"), nd=stage("nd"),
                  probe=stage("probe", seeds=2 if problem.probing else 0),
                  probe_vs=stage("probe_vs", seeds=0,
                                 shift=ShiftSchedule.varying(-2.0, 0.0, 1)),
                  j_ladder=tuple(d.get("j_ladder", (1, 2))))
        return replace(cfg, **overrides)


def sub_seed(run_seed, *keys):
    """Documented derivation of per-run seeds from the campaign seed."""
    ss = np.random.SeedSequence([int(run_seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint32)[0] & 0x7FFFFFFF)


_STAGE_CODE = {"ls": 1, "nd": 2, "probe": 3, "probe_vs": 4}


def _train_job(job):
    """Worker body; module-level so it pickles for process pools."""
    problem, model_kwargs, tcfg, seed, sources = job
    problem_obj = get_problem(problem["name"], **problem["constants"])
    model = problem_obj.make_model(seed, **model_kwargs)
    srcs = [DeflationSource(m, p, label=i) for i, m, p in sources]
    tcfg = replace(tcfg, sources=srcs)
    try:
        rep = train(problem_obj, model, tcfg, run_seed=seed)
    except (TrainingError, ArithmeticError) as exc:
        return None, f"{type(exc).__name__}: {exc} (iteration {getattr(exc, 'iteration', '?')})"
    return rep.model, None


class Campaign:
    """State of one campaign run: the known solutions and the admission rule."""

    def __init__(self, problem, config, registry=None, logger=None):
        self.problem = problem
        self.config = config
        self.registry = registry
        self.log = logger or log
        self.known = []          # (id, model, record or None)
        self.admitted = []
        if registry is not None:
            for rec in registry.records(problem.name):
                if rec.constants == problem.constants:
                    self.known.append((rec.id, rec.load_model(), rec))
        self._counter = len(self.known)

    def full(self):
        cap = self.config.max_solutions
        return cap is not None and len(self.admitted) >= cap

    def consider(self, model, train_info, stage):
        cfg = self.config
        res, se = residual_stats(self.problem, model, cfg.verify_samples, CANONICAL_SEED)
        if not res < cfg.threshold:
            self.log.info("%s candidate rejected: residual %.3g >= %.3g",
                          stage, res, cfg.threshold)
            return None
        for kid, kmodel, _ in self.known:
            ok, rel = distinct(model, kmodel, cfg.verify_samples, CANONICAL_SEED,
                               cfg.delta, cfg.atol, self.problem)
            if not ok:
                self.log.info("%s candidate rejected: relative distance %.3g to %s",
                              stage, rel, kid)
                return None
        return self._store(model, train_info, res, se, stage)

    def _store(self, model, train_info, res, se, stage, trivial=False):
        if self.registry is not None:
            rec = self.registry.add(self.problem, model, train_info, res, se, stage,
                                    self.config.verify_samples, CANONICAL_SEED, trivial)
        else:
            rec = SolutionRecord(
                id=f"u{self._counter}", problem=self.problem.name,
                constants=dict(self.problem.constants), param_files=[],
                model=model.to_dict(), train=dict(train_info), residual=res,
                residual_se=se, verify_samples=self.config.verify_samples,
                created=time.strftime("%Y-%m-%dT%H:%M:%S%z"), stage=stage)
        self._counter += 1
        self.known.append((rec.id, model, rec))
        self.admitted.append(rec)
        self.log.info("%s admitted %s (residual %.3g)", stage, rec.id, res)
        return rec

    def add_trivial(self):
        model = self.problem.trivial_model()
        res, se = residual_stats(self.problem, model, self.config.verify_samples)
        info = {"mode": "exact", "n_iter": 0, "n_points": 0, "sources": [], "seed": None}
        return self._store(model, info, res, se, "trivial", trivial=True)


def run_campaign(problem, config=None, run_seed=0, registry=None, logger=None):
    """Four-stage search; returns the records admitted by this call."""
    if isinstance(problem, str):
        problem = get_problem(problem)
    config = config or CampaignConfig.for_problem(problem)
    camp = Campaign(problem, config, registry, logger)
    lg = camp.log
    if problem.trivial and not camp.known and not camp.full():
        camp.add_trivial()

    plan = [("ls", config.ls, None), ("nd", config.nd, None)]
    for J in config.j_ladder:
        plan.append(("probe", config.probe, J))
    for J in config.j_ladder:
        plan.append(("probe_vs", config.probe_vs, J))

    pool = ProcessPoolExecutor(config.jobs) if config.jobs > 1 else None
    try:
        for name, stage, J in plan:
            if camp.full():
                break
            if name in ("probe", "probe_vs") and not problem.probing:
                continue
            if name != "ls" and not camp.known:
                lg.info("stage %s skipped: no deflation sources yet", name)
                continue
            if problem.n_fields == 2:
                mode = "system_nd"
            else:
                mode = "ls" if name == "ls" else "nd"
            for start in range(0, stage.seeds, config.jobs):
                if camp.full():
                    break
                batch = range(start, min(start + config.jobs, stage.seeds))
                src_list = [(kid, km, config.power) for kid, km, _ in camp.known]
                jobs, infos = [], []
                for k in batch:
                    seed = sub_seed(run_seed, _STAGE_CODE[name], J or 0, k)
                    shift = stage.shift.with_iterations(stage.n_iter)
                    sources = [] if name == "ls" else src_list
                    tcfg = TrainConfig(mode=mode, n_iter=stage.n_iter, n_points=stage.n_points,
                                       lr=stage.lr, shift=shift)
                    if mode == "system_nd" and not sources:
                        tcfg = replace(tcfg, shift=ShiftSchedule.constant(1.0))
                    kwargs = {"probing_J": J} if J else {}
                    jobs.append(({"name": problem.name, "constants": problem.constants},
                                 kwargs, tcfg, seed, sources))
                    infos.append({"mode": mode, "n_iter": stage.n_iter,
                                  "n_points": stage.n_points, "lr": list(stage.lr),
                                  "shift": shift.to_dict(), "probing_J": J, "seed": seed,
                                  "sources": [{"id": s[0], "power": s[2]} for s in sources]})
                if pool is not None:
                    results = list(pool.map(_train_job, jobs))
                else:
                    results = [_train_job(j) for j in jobs]
                for (model, err), info in zip(results, infos):
                    if camp.full():
                        break
                    if model is None:
                        lg.info("%s seed %d failed: %s", name, info["seed"], err)
                        continue
                    if model.meta.get("initial_probing_coeffs"):
                        info["initial_probing_coeffs"] = model.meta["initial_probing_coeffs"]
                    camp.consider(model, info, name if J is None else f"{name}:J={J}")
    finally:
        if pool is not None:
            pool.shutdown()
    return camp.admitted


__all__ = ["SolutionRecord", "Registry", "CampaignConfig", "StageConfig", "Campaign",
           "run_campaign", "verify", "distinct", "distance", "residual_stats", "export_csv",
           "parse_grid", "sub_seed", "boundary_error", "CANONICAL_SEED", "NNDeflateError"]
