"""Monte Carlo trials, parameter sweeps, bound coverage and result files."""

import csv
import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds
from .errors import BMLRError, ConfigError
from .estimators import ThresholdSpec, compute_C_hat, fit_from_C, support_of
from .linalg import frobenius_norm, max_norm, operator_norm
from .model import (
    DesignKind,
    ModelParameters,
    child_rng,
    child_seed,
    generate_A_star,
    generate_B_star,
    generate_dataset,
)

NORMS = ("frobenius_sq", "operator", "max")
SWEEPABLE = ("n", "m", "p", "q", "T", "sigma_r", "sigma_c")
CSV_COLUMNS = (
    "param_name", "param_value", "trial", "seed",
    "errA_frob_sq", "errB_frob_sq", "errA_op", "errB_op", "errA_max", "errB_max",
    "clip_count", "status",
)
_CSV_NORM = {"frobenius_sq": "frob_sq", "operator": "op", "max": "max"}
DEFAULT_TRIALS = 100


@dataclass(frozen=True)
class TrialConfig:
    """One point of the simulation grid.

    ``delta`` switches on the hard-thresholded estimators.  Defaults are the
    reference configuration with a uniform design.
    """

    n: int = 15
    m: int = 13
    p: int = 14
    q: int = 12
    T: int = 1000
    sigma_r: float = 1.0
    sigma_c: float = 1.0
    design: str = "uniform"
    delta: float = None

    def __post_init__(self):
        for name in ("n", "m", "p", "q", "T"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
            object.__setattr__(self, name, int(getattr(self, name)))
        object.__setattr__(self, "design", DesignKind.parse(self.design).value)
        if self.delta is not None and not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")

    @property
    def sigma(self):
        return self.sigma_r * self.sigma_c

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class ErrorRecord:
    config: dict
    trial: int
    seed: int
    errA: dict
    errB: dict
    clip_count: int
    status: str = "ok"
    param_name: str = ""
    param_value: object = ""
    sparse: dict = None

    @property
    def ok(self):
        return self.status == "ok"

    def csv_row(self):
        row = {"param_name": self.param_name, "param_value": self.param_value,
               "trial": self.trial, "seed": self.seed,
               "clip_count": self.clip_count, "status": self.status}
        for norm, short in _CSV_NORM.items():
            row[f"errA_{short}"] = self.errA.get(norm, math.nan)
            row[f"errB_{short}"] = self.errB.get(norm, math.nan)
        return row

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SweepSpec:
    base: TrialConfig
    param: str
    values: tuple
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    norms: tuple = NORMS

    def __post_init__(self):
        if self.param not in SWEEPABLE:
            raise ConfigError(f"cannot sweep {self.param!r}; choose from {SWEEPABLE}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        for v in self.values:
            if not v > 0:
                raise ConfigError("swept values must be positive")
        unknown = set(self.norms) - set(NORMS)
        if unknown:
            raise ConfigError(f"unknown norms {sorted(unknown)}")
        object.__setattr__(self, "values", tuple(self.values))

    def config_at(self, value):
        if self.param in ("sigma_r", "sigma_c"):
            return self.base.replace(**{self.param: float(value)})
        return self.base.replace(**{self.param: int(value)})


def make_parameters(config, seed):
    return ModelParameters(
        generate_A_star(config.n, config.m, seed),
        generate_B_star(config.q, config.p, seed),
        config.sigma_r, config.sigma_c,
    )


def _norms(D, which):
    out = {}
    if "frobenius_sq" in which:
        out["frobenius_sq"] = frobenius_norm(D) ** 2
    if "operator" in which:
        out["operator"] = operator_norm(D)
    if "max" in which:
        out["max"] = max_norm(D)
    return out


def run_trial(config, seed, params=None, norms=NORMS):
    """Generate one dataset, fit every estimator and score it against the truth.

    ``params`` overrides the seeded ground truth.  Errors raised by the
    numerical modules are caught and returned as a failed record.
    """
    seed = int(seed)
    try:
        if params is None:
            params = make_parameters(config, seed)
        data = generate_dataset(params, config.design, config.T, seed)
        C = compute_C_hat(data)
        est = fit_from_C(C, delta=config.delta, sigma=params.sigma, T=config.T)
    except BMLRError as exc:
        nan = {k: math.nan for k in norms}
        return ErrorRecord(config.to_dict(), 0, seed, dict(nan), dict(nan), 0,
                           status=f"failed: {exc}")
    rec = ErrorRecord(
        config=config.to_dict(), trial=0, seed=seed,
        errA=_norms(est.A_hat - params.A_star, norms),
        errB=_norms(est.B_hat - params.B_star, norms),
        clip_count=est.clip_count,
    )
    if config.delta is not None:
        rec.sparse = _sparse_metrics(est, params)
    return rec


def _sparse_metrics(est, params):
    out = {}
    for name, estimate, truth in (("A", est.A_sparse, params.A_star),
                                  ("B", est.B_sparse, params.B_star)):
        s_true, s_est = support_of(truth), support_of(estimate)
        out[f"{name}_support_true"] = len(s_true)
        out[f"{name}_support_est"] = len(s_est)
        out[f"{name}_support_match"] = s_true == s_est
        out[f"err{name}_sparse_frob_sq"] = frobenius_norm(estimate - truth) ** 2
    out["tau_A"] = est.thresholds.tau_A
    out["tau_B"] = est.thresholds.tau_B
    out["t_delta"] = est.thresholds.t_delta
    return out


def trial_seed(master, point, trial):
    return child_seed(master, point, trial)


def _ordered_map(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def run_sweep(spec, jobs=1):
    """One record per (swept value, trial), ordered by value then trial."""
    tasks = [(pi, v, t) for pi, v in enumerate(spec.values) for t in range(spec.trials)]

    def one(task):
        pi, value, t = task
        cfg = spec.config_at(value)
        rec = run_trial(cfg, trial_seed(spec.seed, pi, t), norms=spec.norms)
        rec.trial = t
        rec.param_name = spec.param
        rec.param_value = value
        return rec

    return _ordered_map(one, tasks, jobs)


def aggregate_errors(records):
    """Mean and population std of each error metric per swept value.

    Only successful trials enter the statistics; a point where every trial
    failed gets NaN statistics and ``all_failed=True``.
    """
    if not records:
        raise ConfigError("nothing to aggregate")
    groups = {}
    for r in records:
        groups.setdefault((r.param_name, r.param_value), []).append(r)
    rows = []
    for (pname, pval), recs in groups.items():
        good = [r for r in recs if r.ok]
        failures = len(recs) - len(good)
        for side in ("errA", "errB"):
            keys = sorted({k for r in recs for k in getattr(r, side)}, key=NORMS.index)
            for norm in keys:
                vals = np.array([getattr(r, side)[norm] for r in good], dtype=float)
                rows.append({
                    "param_name": pname, "param_value": pval,
                    "metric": f"{side}_{_CSV_NORM[norm]}",
                    "mean": float(vals.mean()) if vals.size else math.nan,
                    "std": float(vals.std()) if vals.size else math.nan,
                    "count": int(vals.size), "failures": failures,
                    "all_failed": vals.size == 0,
                })
    return rows


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_results(items, path, fmt="csv", metadata=None):
    """Write records (or summary rows) as CSV or JSON.

    ``metadata`` goes into ``#``-prefixed comment lines ahead of the CSV
    header, or under the ``"metadata"`` key of the JSON document.
    """
    path = Path(path)
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format {fmt!r}")
    rows = [r.csv_row() if isinstance(r, ErrorRecord) else dict(r) for r in items]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            doc = {"metadata": metadata or {},
                   "rows": [r.to_dict() if isinstance(r, ErrorRecord) else dict(r) for r in items]}
            path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
            return path
        columns = list(CSV_COLUMNS) if not rows or "status" in rows[0] else list(rows[0])
        with path.open("w", newline="") as fh:
            for line in _metadata_lines(metadata):
                fh.write(line)
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(row[c]) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def _metadata_lines(metadata):
    if not metadata:
        return []
    return [f"# {json.dumps(metadata, sort_keys=True, default=_json_default)}\n"]


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def read_results(path):
    """Parse a CSV written by :func:`emit_results`; returns ``(metadata, rows)``."""
    path = Path(path)
    with path.open() as fh:
        lines = fh.read().splitlines()
    meta = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            meta.update(json.loads(line[1:]))
        else:
            body.append(line)
    rows = list(csv.DictReader(body))
    return meta, rows


# -- bound coverage -----------------------------------------------------------


@dataclass
class CoverageReport:
    bound: str
    params: dict
    budget: float
    failures: int
    trials: int
    details: dict = field(default_factory=dict)

    @property
    def frequency(self):
        return self.failures / self.trials

    @property
    def slack(self):
        return bounds.binomial_slack(self.budget, self.trials)

    @property
    def limit(self):
        return self.budget + 2 * self.slack

    @property
    def passed(self):
        return self.frequency <= self.limit

    def row(self):
        return {"bound": self.bound, "params": json.dumps(self.params, sort_keys=True),
                "budget": self.budget, "failures": self.failures, "trials": self.trials,
                "frequency": self.frequency, "limit": self.limit, "passed": self.passed}


def _point(item):
    if isinstance(item, TrialConfig):
        return item, None
    cfg, params = item
    return cfg, params


def _min_nonzero(M):
    nz = np.abs(M[M != 0])
    return float(nz.min()) if nz.size else math.inf


def _check_sparse_assumptions(name, params, th):
    if name == "B_sparse_support" and not _min_nonzero(params.B_star) > 3 * th.tau_B:
        raise ConfigError("support assumption violated: min nonzero |B*| must exceed 3 tau")
    if name == "A_sparse_support":
        if not _min_nonzero(params.A_star) > 3 * th.tau_A:
            raise ConfigError("support assumption violated: min nonzero |A*| must exceed 3 tau")
        if not 3 * params.beta_star > 1:
            raise ConfigError("support assumption violated: 3 beta* > 1")


def verify_bound_coverage(bound_names, grid, trials, delta, seed=0, jobs=1):
    """Monte Carlo frequency of each bound's violation event.

    ``bound_names`` is a name or a list of names from
    :data:`bounds.ALL_BOUNDS`.  ``grid`` holds :class:`TrialConfig` items or
    ``(TrialConfig, ModelParameters)`` pairs.  Every grid point is simulated
    once and all requested events are evaluated on the same trials, always
    with an orthogonal design.  Dense bounds are tested at the deviation level
    whose bound equals ``delta``.
    """
    names = [bound_names] if isinstance(bound_names, str) else list(bound_names)
    for name in names:
        if name not in bounds.ALL_BOUNDS:
            raise ConfigError(f"unknown bound {name!r}; choose from {bounds.ALL_BOUNDS}")
    if not 0 < delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    reports = []
    for pi, item in enumerate(grid):
        cfg, params = _point(item)
        if "gauss_max_tail" in names:
            reports.append(_gauss_coverage(cfg.n, trials, delta, child_seed(seed, pi)))
        model_names = [b for b in names if b != "gauss_max_tail"]
        if model_names:
            reports.extend(_model_coverage(model_names, cfg, params, trials, delta,
                                           child_seed(seed, pi), jobs))
    return reports


def _gauss_coverage(n, trials, delta, seed):
    lower, upper = bounds.gauss_max_bracket(n, delta)
    rng = child_rng(seed)
    fails = 0
    chunk = max(1, 2_000_000 // n)
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        mx = np.abs(rng.standard_normal((k, n))).max(axis=1)
        fails += int(np.sum((mx < lower) | (mx > upper)))
        done += k
    return CoverageReport("gauss_max_tail", {"n": n, "delta": delta}, delta, fails, trials,
                          {"lower": lower, "upper": upper})


def _model_coverage(names, cfg, params, trials, delta, seed, jobs):
    cfg = cfg.replace(design=DesignKind.ORTHOGONAL.value, delta=delta)
    if params is None:
        params = make_parameters(cfg, seed)
    n, m, p, q = params.dims
    if (n, m, p, q) != (cfg.n, cfg.m, cfg.p, cfg.q):
        raise ConfigError("explicit parameters disagree with the configured dimensions")
    sigma, T = params.sigma, cfg.T
    if sigma <= 0:
        raise ConfigError("coverage checks need sigma > 0")
    th = ThresholdSpec.compute(sigma, n, m, p, q, T, delta)
    levels, budgets = {}, {}
    for name in names:
        if name in ("A_max", "A_sparse_frob", "A_sparse_support"):
            if name == "A_max":
                bounds.check_a_assumptions(params.A_star, params.B_star)
            elif n < 2:
                raise ConfigError("A bounds need n >= 2 (leave-one-out denominator)")
        if name in bounds.DENSE_BOUNDS:
            levels[name] = bounds.epsilon_for_budget(
                name, delta, sigma, n, m, p, q, T, params.A_star, params.B_star)
            budgets[name] = delta
        elif name == "B_sparse_frob":
            levels[name] = bounds.b_sparse_frob_bound(params.B_star, th.tau_B)
            budgets[name] = delta
        elif name == "A_sparse_frob":
            levels[name] = bounds.a_sparse_frob_bound(params.A_star, params.B_star,
                                                      th.tau_A, th.t_delta)
            budgets[name] = 2 * delta
        else:
            _check_sparse_assumptions(name, params, th)
            levels[name] = None
            budgets[name] = delta if name.startswith("B") else 2 * delta
    beta = abs(params.beta_star)
    supp_A, supp_B = support_of(params.A_star), support_of(params.B_star)

    def one(t):
        data = generate_dataset(params, cfg.design, T, child_seed(seed, 1, t))
        est = fit_from_C(compute_C_hat(data), delta=delta, sigma=sigma, T=T)
        dB = est.B_hat - params.B_star
        dA = est.A_hat - params.A_star
        ev = {}
        for name in names:
            lv = levels[name]
            if name == "B_max":
                ev[name] = max_norm(dB) > lv
            elif name == "B_op":
                ev[name] = operator_norm(dB) > lv
            elif name == "B_frob":
                ev[name] = frobenius_norm(dB) ** 2 > lv
            elif name == "A_max":
                ev[name] = max_norm(dA) > 2 * lv / beta
            elif name == "B_sparse_frob":
                ev[name] = not frobenius_norm(est.B_sparse - params.B_star) ** 2 < lv
            elif name == "A_sparse_frob":
                ev[name] = frobenius_norm(est.A_sparse - params.A_star) ** 2 > lv
            elif name == "B_sparse_support":
                ev[name] = support_of(est.B_sparse) != supp_B
            elif name == "A_sparse_support":
                ev[name] = support_of(est.A_sparse) != supp_A
        return ev

    events = _ordered_map(one, range(trials), jobs)
    point = dict(cfg.to_dict(), sigma=sigma, beta_star=params.beta_star)
    out = []
    for name in names:
        fails = sum(bool(e[name]) for e in events)
        details = {"level": levels[name], "tau_A": th.tau_A, "tau_B": th.tau_B,
                   "t_delta": th.t_delta}
        out.append(CoverageReport(name, point, budgets[name], fails, trials, details))
    return out


def emit_coverage(reports, path, fmt="csv", metadata=None):
    rows = [r.row() for r in reports]
    if fmt == "json":
        return emit_results(rows, path, "json", metadata)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["bound", "params", "budget", "failures", "trials", "frequency", "limit", "passed"]
    with path.open("w", newline="") as fh:
        for line in _metadata_lines(metadata):
            fh.write(line)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
    return path
