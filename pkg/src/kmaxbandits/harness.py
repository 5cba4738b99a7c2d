"""Experiment orchestration: config -> environment + policy -> regret traces.

Configs are TOML files. Regret is computed exactly from cached subset
values rather than from realized rewards. Each seed runs independently
and results come back in seed order, so outputs do not depend on the
worker count.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ._subsets import all_subsets
from .discretize import cdf_to_p, make_grid, p_to_q
from .dck_ucb import DckConfig, DckUcbPolicy, Lemma4Tracker, bonus_bias_diagnostics, default_epsilon
from .env_continuous import (
    ContinuousEnv,
    builtin_arm,
    expected_max_exact,
    sample_outcome_table,
    value_index_feedback,
)
from .errors import InputError, KMaxError, RoundError
from .kmin_exp import ExpLinearModel, MleExpConfig, MleExpPolicy, expected_min_loss, sample_min_loss

OUTPUT_DIR_ENV = "KMAXBANDITS_OUTPUT_DIR"
CACHE_SIZE = 100_000
BASE_COLUMNS = ("t", "seed", "action", "inst_regret", "cum_regret")
DIAG_COLUMNS = {
    "kmax_continuous": ("reward", "bonus_t", "bias_t"),
    "kmin_exponential": ("loss", "lambda_t", "gamma_t", "theta_err"),
}
POLICIES = {
    "kmax_continuous": ("dck_ucb", "uniform_random", "oracle_known"),
    "kmin_exponential": ("mle_exp", "uniform_random", "oracle_known"),
}

_ARM_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["truncated_gaussian", "uniform_mixture", "beta"]},
        "mu": {"type": "number"},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "weights": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "intervals": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        },
        "a": {"type": "number"},
        "b": {"type": "number"},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "kmaxbandits experiment config (TOML)",
    "type": "object",
    "required": ["problem", "policy", "horizon", "seeds", "k"],
    "properties": {
        "problem": {"enum": ["kmax_continuous", "kmin_exponential"]},
        "policy": {"enum": ["dck_ucb", "mle_exp", "uniform_random", "oracle_known"]},
        "horizon": {"type": "integer", "minimum": 1},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "k": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1, "default": 1},
        "diagnostics": {"type": "boolean", "default": False},
        "dump_state": {"type": "boolean", "default": False},
        "checkpoints": {
            "type": "array", "items": {"type": "integer", "minimum": 1},
            "description": "rounds at which to record theta_hat (kmin) or lemma checks",
        },
        "quad_points": {"type": "integer", "minimum": 2, "default": 10000},
        "output": {
            "type": "object",
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json_summary"]}},
            },
            "additionalProperties": False,
        },
        "arms": {"type": "array", "items": _ARM_SCHEMA, "minItems": 1,
                 "description": "kmax_continuous: one [[arms]] table per arm"},
        "model": {
            "type": "object",
            "description": "kmin_exponential: linear exponential model",
            "required": ["theta_star", "features", "v_bound"],
            "properties": {
                "theta_star": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "features": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                "v_bound": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "policy_params": {
            "type": "object",
            "description": "dck_ucb: epsilon | c0, lipschitz, bonus_log_arg, oracle; "
                           "mle_exp: delta, l_star, m1, lambda, gamma, tol",
            "properties": {
                "epsilon": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                "c0": {"type": "number", "exclusiveMinimum": 0},
                "lipschitz": {"type": "number", "minimum": 1},
                "bonus_log_arg": {"enum": ["NMT", "NMt"]},
                "oracle": {"enum": ["exact", "greedy"]},
                "delta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "l_star": {"type": "number", "exclusiveMinimum": 0},
                "m1": {"type": "number", "exclusiveMinimum": 0},
                "lambda": {"type": "number", "exclusiveMinimum": 0},
                "gamma": {"type": "number", "minimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


@dataclass
class ExperimentConfig:
    problem: str
    policy: str
    horizon: int
    seeds: list
    k: int
    arms: list = field(default_factory=list)
    model: dict | None = None
    policy_params: dict = field(default_factory=dict)
    workers: int = 1
    diagnostics: bool = False
    dump_state: bool = False
    checkpoints: list = field(default_factory=list)
    quad_points: int = 10_000
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw):
        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise InputError(f"config error at {where}: {exc.message}") from None
        cfg = cls(**copy.deepcopy(raw))
        cfg.check()
        return cfg

    def check(self):
        if self.policy not in POLICIES[self.problem]:
            raise InputError(f"policy {self.policy!r} does not apply to {self.problem}")
        if self.problem == "kmax_continuous" and not self.arms:
            raise InputError("kmax_continuous needs [[arms]] tables")
        if self.problem == "kmin_exponential" and self.model is None:
            raise InputError("kmin_exponential needs a [model] table")
        dck_keys = {"epsilon", "c0", "lipschitz", "bonus_log_arg", "oracle"}
        mle_keys = {"delta", "l_star", "m1", "lambda", "gamma", "tol"}
        wrong = set(self.policy_params) & (mle_keys if self.problem == "kmax_continuous" else dck_keys)
        if wrong:
            raise InputError(f"policy_params {sorted(wrong)} do not apply to {self.problem}")

    def to_dict(self):
        """Plain dict that ``from_dict`` accepts back; unused env fields are omitted."""
        d = {
            "problem": self.problem, "policy": self.policy, "horizon": self.horizon,
            "seeds": list(self.seeds), "k": self.k, "arms": self.arms, "model": self.model,
            "policy_params": self.policy_params, "workers": self.workers,
            "diagnostics": self.diagnostics, "dump_state": self.dump_state,
            "checkpoints": list(self.checkpoints), "quad_points": self.quad_points,
            "output": self.output,
        }
        if not self.arms:
            d.pop("arms")
        if self.model is None:
            d.pop("model")
        return d

    def digest(self):
        """sha256 of the settings that determine the traces (not paths or workers)."""
        d = self.to_dict()
        for key in ("workers", "output", "dump_state"):
            d.pop(key)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def output_dir(self):
        return Path(self.output.get("dir") or os.environ.get(OUTPUT_DIR_ENV) or "runs")


def load_config(path):
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return ExperimentConfig.from_dict(raw)


class SubsetValueCache:
    """LRU cache of exact subset values keyed by the sorted subset."""

    def __init__(self, fn, maxsize=CACHE_SIZE):
        self.fn = fn
        self.maxsize = maxsize
        self._data = OrderedDict()

    def __call__(self, s):
        key = tuple(sorted(s))
        try:
            self._data.move_to_end(key)
            return self._data[key]
        except KeyError:
            value = self._data[key] = self.fn(key)
            if len(self._data) > self.maxsize:
                self._data.popitem(last=False)
            return value


def build_env(config):
    if config.problem == "kmax_continuous":
        arms = []
        for i, spec in enumerate(config.arms):
            params = {k: v for k, v in spec.items() if k != "kind"}
            arms.append(builtin_arm(spec["kind"], label=i, **params))
        return ContinuousEnv(tuple(arms), config.k)
    m = config.model
    return ExpLinearModel(np.array(m["theta_star"], dtype=float), np.array(m["features"], dtype=float),
                          float(m["v_bound"]), config.k)


def subset_value_fn(env, quad_points=10_000):
    """Exact value of a subset: expected max (K-Max) or expected min loss (K-Min)."""
    if isinstance(env, ContinuousEnv):
        return lambda s: expected_max_exact(env.arms, s, quad_points)
    return lambda s: expected_min_loss(env, s)


def best_action_exact(env, quad_points=10_000):
    """Optimal subset by enumeration; lexicographic tie-break.

    K-Max maximizes the expected maximum, K-Min minimizes the expected
    minimum loss (maximizes the summed rate).
    """
    subsets = all_subsets(env.n, env.k)
    if isinstance(env, ContinuousEnv):
        values = np.array([expected_max_exact(env.arms, s, quad_points) for s in subsets])
        idx = int(np.argmax(values))
    else:
        rates = env.features[subsets].sum(axis=1) @ env.theta_star
        values = 1.0 / rates
        idx = int(np.argmin(values))
    return tuple(int(i) for i in subsets[idx]), float(values[idx])


class UniformRandomPolicy:
    name = "uniform_random"

    def __init__(self, n, k, rng):
        self.n, self.k, self.rng = n, k, rng

    def select(self):
        return tuple(sorted(int(i) for i in self.rng.choice(self.n, self.k, replace=False)))

    def update(self, s, feedback):
        pass


class FixedPolicy:
    """Plays the same subset forever; with S* this is the zero-regret baseline."""

    name = "oracle_known"

    def __init__(self, s):
        self.s = tuple(s)

    def select(self):
        return self.s

    def update(self, s, feedback):
        pass


def _dck_config(config, env):
    pp = config.policy_params
    lipschitz = float(pp.get("lipschitz", max(a.lipschitz_upper for a in env.arms)))
    eps = pp.get("epsilon")
    if eps is None:
        eps = default_epsilon(env.n, env.k, lipschitz, config.horizon, pp.get("c0", 1.0))
    return DckConfig(float(eps), lipschitz, config.horizon, env.n, env.k,
                     pp.get("oracle", "exact"), pp.get("bonus_log_arg", "NMT"))


def _mle_config(config):
    pp = config.policy_params
    return MleExpConfig(config.horizon, pp.get("delta"), pp.get("l_star"), pp.get("m1"),
                        pp.get("lambda"), pp.get("gamma"), pp.get("tol", 1e-9))


def make_policy(config, env, best, rng):
    if config.policy == "dck_ucb":
        return DckUcbPolicy(_dck_config(config, env))
    if config.policy == "mle_exp":
        return MleExpPolicy(env, _mle_config(config))
    if config.policy == "uniform_random":
        return UniformRandomPolicy(env.n, env.k, rng)
    return FixedPolicy(best)


@dataclass
class RegretTrace:
    seed: int
    actions: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    realized: np.ndarray
    config_digest: str
    diagnostics: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def horizon(self):
        return len(self.inst_regret)


def _seed_streams(seed):
    env_ss, policy_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(env_ss), np.random.default_rng(policy_ss)


def run_seed(config, seed, env=None, best=None):
    """One full run of ``config.horizon`` rounds for one seed."""
    env = env if env is not None else build_env(config)
    if best is None:
        best = best_action_exact(env, config.quad_points)
    best_s, best_value = best
    env_rng, policy_rng = _seed_streams(seed)
    policy = make_policy(config, env, best_s, policy_rng)
    value = SubsetValueCache(subset_value_fn(env, config.quad_points))
    T, K = config.horizon, env.k
    kmax = isinstance(env, ContinuousEnv)
    actions = np.empty((T, K), dtype=np.int64)
    inst = np.empty(T)
    realized = np.empty(T)
    diag_names = DIAG_COLUMNS[config.problem][1:] if config.diagnostics else ()
    diag = {name: np.empty(T) for name in diag_names}
    extras = {}
    checkpoints = set(config.checkpoints)
    thetas = {}

    q_star = tracker = table = None
    if kmax:
        table = sample_outcome_table(env, T, env_rng)
        if config.diagnostics and isinstance(policy, DckUcbPolicy):
            q_star = p_to_q(cdf_to_p(env.arms, policy.state.grid))
            tracker = Lemma4Tracker(q_star, policy.config)

    for t in range(T):
        try:
            if tracker is not None:
                tracker.record(policy.state)
            s = policy.select()
            if kmax:
                fb = value_index_feedback(table[t, list(s)], s)
                policy.update(s, fb)
                realized[t] = fb.reward
                inst[t] = best_value - value(s)
                if diag:
                    if q_star is not None:
                        diag["bonus_t"][t], diag["bias_t"][t] = bonus_bias_diagnostics(policy.state, s, q_star)
                    else:
                        diag["bonus_t"][t] = diag["bias_t"][t] = math.nan
            else:
                st = getattr(policy, "state", None)
                if diag:
                    if st is not None:
                        diag["lambda_t"][t], diag["gamma_t"][t] = st.lambda_t, st.gamma_t
                        diag["theta_err"][t] = float(np.linalg.norm(st.theta_hat - env.theta_star))
                    else:
                        diag["lambda_t"][t] = diag["gamma_t"][t] = diag["theta_err"][t] = math.nan
                if (t + 1) in checkpoints and st is not None:
                    thetas[t + 1] = {"theta_hat": st.theta_hat.tolist(),
                                     "covers_theta_star": policy.covers(env.theta_star)}
                loss = sample_min_loss(env, s, env_rng)
                policy.update(s, loss)
                realized[t] = loss
                inst[t] = value(s) - best_value
        except KMaxError as exc:
            raise RoundError(t + 1, seed, exc) from exc
        actions[t] = s
    if tracker is not None:
        extras["lemma4_violation_rate"] = tracker.rate
        extras["lemma4_violations"] = tracker.violations
        extras["lemma4_checked"] = tracker.checked
    if thetas:
        extras["checkpoints"] = thetas
    if config.dump_state and hasattr(policy, "snapshot"):
        extras["state"] = policy.snapshot()
    return RegretTrace(seed, actions, inst, np.cumsum(inst), realized, config.digest(), diag, extras)


def _run_seed_job(args):
    config, seed = args
    return run_seed(config, seed)


def run_experiment(config, workers=None):
    """Run every seed; traces are returned in seed order whatever the worker count."""
    workers = workers or config.workers
    if workers <= 1 or len(config.seeds) == 1:
        env = build_env(config)
        best = best_action_exact(env, config.quad_points)
        return [run_seed(config, seed, env, best) for seed in config.seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_seed_job, [(config, s) for s in config.seeds]))


def fit_growth_exponent(trace, burn_in_fraction=0.2):
    """Least-squares slope of log cumulative regret against log t after burn-in.

    Accepts a ``RegretTrace`` or a cumulative-regret array. Rounds with
    zero cumulative regret are skipped; returns ``None`` when none remain
    (e.g. a zero-regret policy), since the exponent is then undefined.
    """
    cum = trace.cum_regret if isinstance(trace, RegretTrace) else np.asarray(trace, dtype=float)
    T = len(cum)
    t = np.arange(1, T + 1, dtype=float)
    keep = (t > burn_in_fraction * T) & (cum > 0)
    if keep.sum() < 2:
        return None
    slope, _ = np.polyfit(np.log(t[keep]), np.log(cum[keep]), 1)
    return float(slope)


def _fmt(x):
    return repr(float(x))


def traces_to_csv(traces, diagnostics=False, problem="kmax_continuous"):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    diag_cols = DIAG_COLUMNS[problem] if diagnostics else ()
    writer.writerow(BASE_COLUMNS + diag_cols)
    for tr in traces:
        cols = [tr.realized] + [tr.diagnostics.get(c) for c in diag_cols[1:]]
        for t in range(tr.horizon):
            row = [t + 1, tr.seed, ";".join(str(int(i)) for i in tr.actions[t]),
                   _fmt(tr.inst_regret[t]), _fmt(tr.cum_regret[t])]
            row += [_fmt(c[t]) if c is not None else "" for c in cols] if diag_cols else []
            writer.writerow(row)
    return buf.getvalue()


def load_csv(path):
    """Read a trace CSV back into ``RegretTrace`` objects (one per seed)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    extra = header[len(BASE_COLUMNS):]
    by_seed = OrderedDict()
    for row in rows:
        by_seed.setdefault(int(row[1]), []).append(row)
    traces = []
    for seed, rs in by_seed.items():
        actions = np.array([[int(i) for i in r[2].split(";")] for r in rs], dtype=np.int64)
        inst = np.array([float(r[3]) for r in rs])
        cum = np.array([float(r[4]) for r in rs])
        cols = {name: np.array([float(r[5 + a]) if r[5 + a] else math.nan for r in rs])
                for a, name in enumerate(extra)}
        realized = cols.pop(extra[0]) if extra else np.full(len(rs), math.nan)
        traces.append(RegretTrace(seed, actions, inst, cum, realized, "", cols))
    return traces, header


def summarize(traces, config):
    finals = np.array([tr.cum_regret[-1] for tr in traces])
    exps = [fit_growth_exponent(tr) for tr in traces]
    valid = [e for e in exps if e is not None]
    per_seed = []
    for tr, e in zip(traces, exps):
        entry = {"seed": tr.seed, "final_regret": float(tr.cum_regret[-1]), "exponent": e,
                 "realized_total": float(tr.realized.sum())}
        entry.update({k: v for k, v in tr.extras.items() if k != "state"})
        per_seed.append(entry)
    return {
        "config_digest": config.digest(),
        "problem": config.problem,
        "policy": config.policy,
        "horizon": config.horizon,
        "seeds": per_seed,
        "final_regret_mean": float(finals.mean()),
        "final_regret_std": float(finals.std(ddof=1)) if len(finals) > 1 else 0.0,
        "exponent_mean": float(np.mean(valid)) if valid else None,
        "exponent_std": float(np.std(valid, ddof=1)) if len(valid) > 1 else (0.0 if valid else None),
    }


def emit(traces, config, out_dir=None, formats=None):
    """Write ``traces.csv`` and/or ``summary.json`` under ``out_dir``; returns the paths."""
    if not traces:
        raise InputError("no traces to emit")
    out = Path(out_dir) if out_dir is not None else config.output_dir()
    formats = formats or config.output.get("formats") or ["csv", "json_summary"]
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            path = out / "traces.csv"
            path.write_text(traces_to_csv(traces, config.diagnostics, config.problem))
            written.append(path)
        if "json_summary" in formats:
            path = out / "summary.json"
            path.write_text(json.dumps(summarize(traces, config), indent=2) + "\n")
            written.append(path)
        if config.dump_state:
            for tr in traces:
                if "state" in tr.extras or "checkpoints" in tr.extras:
                    path = out / f"state_seed{tr.seed}.json"
                    payload = {"state": tr.extras.get("state"),
                               "checkpoints": tr.extras.get("checkpoints")}
                    path.write_text(json.dumps(payload, indent=2) + "\n")
                    written.append(path)
    except OSError as exc:
        raise OSError(f"writing outputs to {out}: {exc}") from exc
    return written
