"""Experiment configuration: JSON loading, validation, defaults and building.

A config names one MDP source, one feature source, a step-size schedule, an
oracle, the iteration budget ``T``, the regression distribution ``rho``,
output paths and a seed.  ``load_config`` returns a fully materialised
``ExperimentConfig`` whose ``to_dict`` echo loads back to an equal config.
Relative file paths are resolved against the config file's directory.
"""
import copy
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from npglab.envs import chain_mdp, gridworld_mdp, random_mdp
from npglab.features import (
    FeatureMap, linear_mdp_generate, random_projection_features, tabular_features,
)
from npglab.mdp import Mdp
from npglab.oracle import OracleConfig
from npglab.solver import (
    LOGIT_CAP, constant_schedule, default_eta0, geometric_schedule, prepare,
)

REQUIRED = object()

GENERATORS = {
    "random": {"n_states": REQUIRED, "n_actions": REQUIRED, "gamma": REQUIRED, "seed": 0, "branching": None},
    "chain": {"n_states": REQUIRED, "gamma": REQUIRED, "slip": 0.1},
    "gridworld": {"width": REQUIRED, "height": REQUIRED, "gamma": REQUIRED, "slip": 0.1},
    "linear_mdp": {"dim": REQUIRED, "n_states": REQUIRED, "n_actions": REQUIRED, "gamma": REQUIRED, "seed": 0},
}
FEATURES = {
    "tabular": {},
    "linear_mdp": {},
    "random_projection": {"dim": REQUIRED, "seed": 0},
    "file": {"path": REQUIRED},
}
SCHEDULES = ("geometric", "constant")
SWEEP_AXES = ("seed", "eps_stat", "schedule")
TOP_KEYS = ("mdp", "features", "schedule", "oracle", "T", "rho", "output", "seed",
            "nominal", "logit_cap", "sweep")


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


@dataclass
class ExperimentConfig:
    mdp: dict
    features: dict
    schedule: dict
    oracle: OracleConfig
    T: int = 100
    rho: dict = field(default_factory=lambda: {"kind": "uniform"})
    output: dict = field(default_factory=lambda: {"csv": None, "dir": None})
    seed: int = 0
    nominal: dict | None = None
    logit_cap: float = LOGIT_CAP
    sweep: dict | None = None

    def to_dict(self):
        return {
            "mdp": copy.deepcopy(self.mdp),
            "features": dict(self.features),
            "schedule": dict(self.schedule),
            "oracle": self.oracle.to_dict(),
            "T": self.T,
            "rho": dict(self.rho),
            "output": dict(self.output),
            "seed": self.seed,
            "nominal": None if self.nominal is None else dict(self.nominal),
            "logit_cap": self.logit_cap,
            "sweep": copy.deepcopy(self.sweep),
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def replace(self, **changes):
        doc = self.to_dict()
        doc.update(changes)
        return from_dict(doc)


def _fill(doc, defaults, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    out = {}
    for key, default in defaults.items():
        if key in doc:
            out[key] = doc[key]
        elif default is REQUIRED:
            raise ConfigError(f"{where}.{key}: required field missing")
        else:
            out[key] = default
    for key in doc:
        if key not in defaults and key != "kind":
            raise ConfigError(f"{where}.{key}: unknown field")
    return out


def _positive_int(value, where):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{where}: must be a positive integer, got {value!r}")


def _gamma(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0 <= value < 1:
        raise ConfigError(f"{where}: must lie in [0, 1), got {value!r}")


def _path(value, base, where, must_exist=True):
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a path string")
    p = os.path.abspath(os.path.join(base, value))
    if must_exist and not os.path.isfile(p):
        raise ConfigError(f"{where}: file not found: {p}")
    return p


def _mdp_source(doc, base):
    if not isinstance(doc, dict) or len(doc) != 1:
        raise ConfigError("mdp: exactly one of 'file', 'inline', 'generator' is required")
    (kind, body), = doc.items()
    if kind == "file":
        return {"file": _path(body, base, "mdp.file")}
    if kind == "inline":
        try:
            Mdp.from_dict(body)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"mdp.inline: {e}") from None
        return {"inline": body}
    if kind == "generator":
        if not isinstance(body, dict) or body.get("kind") not in GENERATORS:
            raise ConfigError(f"mdp.generator.kind: must be one of {tuple(GENERATORS)}")
        g = _fill(body, GENERATORS[body["kind"]], "mdp.generator")
        for key in ("n_states", "n_actions", "width", "height", "dim"):
            if key in g:
                _positive_int(g[key], f"mdp.generator.{key}")
        _gamma(g["gamma"], "mdp.generator.gamma")
        return {"generator": {"kind": body["kind"], **g}}
    raise ConfigError(f"mdp.{kind}: unknown source (use 'file', 'inline' or 'generator')")


def _feature_source(doc, base, mdp_src):
    if not isinstance(doc, dict) or doc.get("kind") not in FEATURES:
        raise ConfigError(f"features.kind: must be one of {tuple(FEATURES)}")
    kind = doc["kind"]
    f = _fill(doc, FEATURES[kind], "features")
    if kind == "random_projection":
        _positive_int(f["dim"], "features.dim")
    if kind == "file":
        f["path"] = _path(f["path"], base, "features.path")
    if kind == "linear_mdp" and mdp_src.get("generator", {}).get("kind") != "linear_mdp":
        raise ConfigError("features.kind: 'linear_mdp' requires a linear_mdp generator")
    return {"kind": kind, **f}


def _rho(doc, base):
    if doc in (None, "uniform"):
        return {"kind": "uniform"}
    if isinstance(doc, dict) and doc.get("kind") == "uniform" and len(doc) == 1:
        return {"kind": "uniform"}
    if isinstance(doc, dict) and doc.get("kind") == "file":
        return {"kind": "file", "path": _path(doc.get("path"), base, "rho.path")}
    raise ConfigError("rho: expected 'uniform' or {\"kind\": \"file\", \"path\": ...}")


def from_dict(doc, base="."):
    """Validate a config document and materialise every default."""
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    for key in doc:
        if key not in TOP_KEYS:
            raise ConfigError(f"{key}: unknown field")
    if "mdp" not in doc:
        raise ConfigError("mdp: required field missing")
    mdp_src = _mdp_source(doc["mdp"], base)
    features = _feature_source(doc.get("features", {"kind": "tabular"}), base, mdp_src)

    T = doc.get("T", 100)
    if isinstance(T, bool) or not isinstance(T, int) or T < 0:
        raise ConfigError(f"T: must be a nonnegative integer, got {T!r}")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed: must be a nonnegative integer, got {seed!r}")

    try:
        oracle = OracleConfig(**doc.get("oracle", {}))
    except TypeError as e:
        raise ConfigError(f"oracle: {e}") from None
    except ValueError as e:
        raise ConfigError(str(e)) from None

    sched = doc.get("schedule", {})
    if not isinstance(sched, dict):
        raise ConfigError("schedule: expected an object")
    sched = _fill(sched, {"eta0": "auto", "nu_scale": 1.0}, "schedule") | {
        "kind": sched.get("kind", "geometric")}
    if sched["kind"] not in SCHEDULES:
        raise ConfigError(f"schedule.kind: must be one of {SCHEDULES}")
    if sched["eta0"] == "auto":
        mdp = build_mdp(mdp_src)
        sched["eta0"] = default_eta0(mdp.gamma, mdp.n_actions)
    if not isinstance(sched["eta0"], (int, float)) or not sched["eta0"] >= 0:
        raise ConfigError("schedule.eta0: must be nonnegative")
    if not isinstance(sched["nu_scale"], (int, float)) or not sched["nu_scale"] > 0:
        raise ConfigError("schedule.nu_scale: must be positive")

    output = _fill(doc.get("output", {}), {"csv": "", "dir": ""}, "output")
    output = {k: (_path(v, base, f"output.{k}", must_exist=False) if v else None)
              for k, v in output.items()}

    nominal = doc.get("nominal")
    if nominal is not None:
        if not isinstance(nominal, dict):
            raise ConfigError("nominal: expected an object")
        for key, value in nominal.items():
            if key not in ("eps_stat", "eps_bias", "kappa", "nu_mu"):
                raise ConfigError(f"nominal.{key}: unknown field")
            if not isinstance(value, (int, float)) or value < 0:
                raise ConfigError(f"nominal.{key}: must be a nonnegative number")

    cap = doc.get("logit_cap", LOGIT_CAP)
    if not isinstance(cap, (int, float)) or not cap > 0:
        raise ConfigError("logit_cap: must be positive")

    sweep = doc.get("sweep")
    if sweep is not None:
        sweep = _fill(sweep, {"axis": REQUIRED, "values": REQUIRED}, "sweep")
        if sweep["axis"] not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis: must be one of {SWEEP_AXES}")
        if not isinstance(sweep["values"], list) or not sweep["values"]:
            raise ConfigError("sweep.values: expected a nonempty list")

    return ExperimentConfig(mdp_src, features, sched, oracle, T, _rho(doc.get("rho"), base),
                            output, seed, nominal, cap, sweep)


def load_config(path):
    """Read, validate and materialise a JSON config file."""
    path = os.path.abspath(path)
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    return from_dict(doc, base=os.path.dirname(path))


def build_mdp(src):
    if "file" in src:
        try:
            return Mdp.load(src["file"])
        except (ValueError, TypeError, json.JSONDecodeError) as e:
            raise ConfigError(f"mdp.file: {e}") from None
    if "inline" in src:
        return Mdp.from_dict(src["inline"])
    return _generate(src["generator"])[0]


def _generate(g):
    kind = g["kind"]
    if kind == "random":
        return random_mdp(g["n_states"], g["n_actions"], g["gamma"],
                          np.random.default_rng(g["seed"]), branching=g["branching"]), None
    if kind == "chain":
        return chain_mdp(g["n_states"], g["gamma"], slip=g["slip"]), None
    if kind == "gridworld":
        return gridworld_mdp(g["width"], g["height"], g["gamma"], slip=g["slip"]), None
    m, fm, _, _ = linear_mdp_generate(g["dim"], g["n_states"], g["n_actions"],
                                      np.random.default_rng(g["seed"]), gamma=g["gamma"])
    return m, fm


def build(cfg):
    """Materialise ``(mdp, features, rho)`` from a config."""
    if "generator" in cfg.mdp:
        mdp, gen_fm = _generate(cfg.mdp["generator"])
    else:
        mdp, gen_fm = build_mdp(cfg.mdp), None
    f = cfg.features
    S, A = mdp.n_states, mdp.n_actions
    if f["kind"] == "tabular":
        fm = tabular_features(S, A)
    elif f["kind"] == "linear_mdp":
        fm = gen_fm
    elif f["kind"] == "random_projection":
        fm = random_projection_features(S, A, f["dim"], np.random.default_rng(f["seed"]))
    else:
        fm = FeatureMap.load(f["path"])
    if (fm.n_states, fm.n_actions) != (S, A):
        raise ConfigError("features: state/action counts disagree with the MDP")
    if cfg.rho["kind"] == "uniform":
        rho = np.full((S, A), 1.0 / (S * A))
    else:
        with open(cfg.rho["path"]) as fh:
            rho = np.asarray(json.load(fh)["rho"], dtype=np.float64)
        if rho.shape != (S, A) or rho.min() < 0 or abs(rho.sum() - 1) > 1e-12:
            raise ConfigError("rho: expected a distribution of shape (n_states, n_actions)")
    return mdp, fm, rho


def build_schedule(cfg, nu_mu):
    """Step-size schedule; ``nu_scale`` multiplies the measured ``nu_mu``."""
    s = cfg.schedule
    if s["kind"] == "constant":
        return constant_schedule(s["eta0"])
    nu = nu_mu * s["nu_scale"] if math.isfinite(nu_mu) else nu_mu
    return geometric_schedule(nu, s["eta0"])


def build_problem(cfg):
    mdp, fm, rho = build(cfg)
    prob = prepare(mdp, fm, rho)
    return prob, build_schedule(cfg, prob.nu_mu)
