"""Experiment configuration: JSON schema, validation and object construction.

Relative paths inside a config resolve against the config file's directory;
a ``pkg:`` prefix resolves against the installed package (bundled data).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import geometry, grid_oracle
from .errors import ConfigError
from .hamiltonian import hamiltonian_from_dict
from .loss import LossWeights
from .network import MlpArchitecture, PeriodicArchitecture
from .scheme import SchemeConfig
from .trainer import Problem, Schedule, SgdConfig, Stage, constant_boundary

PACKAGE_DIR = Path(__file__).resolve().parent
CONFIG_DIR = PACKAGE_DIR / "configs"

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_count = {"type": "integer", "minimum": 0}
_vector = {"type": "array", "items": _num}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_base_domain = {"oneOf": [
    _obj({"kind": {"const": "cube"}, "dim": {"type": "integer", "minimum": 1},
          "half_width": _pos, "center": _vector}, ["kind", "dim", "half_width"]),
    _obj({"kind": {"const": "ball"}, "dim": {"type": "integer", "minimum": 1},
          "radius": _pos, "center": _vector}, ["kind", "dim", "radius"]),
    _obj({"kind": {"const": "annulus"}, "dim": {"type": "integer", "minimum": 1},
          "inner_radius": _pos, "outer_radius": _pos, "center": _vector},
         ["kind", "dim", "inner_radius", "outer_radius"]),
]}

_domain = {"oneOf": _base_domain["oneOf"] + [
    _obj({"kind": {"const": "product_with_torus"}, "base": _base_domain,
          "torus_dims": {"type": "integer", "minimum": 1}}, ["kind", "base", "torus_dims"]),
]}

_hamiltonian = {"oneOf": [
    _obj({"kind": {"enum": ["eikonal_squared", "eikonal_norm", "quadratic"]}}, ["kind"]),
    _obj({"kind": {"const": "reeds_shepp"}, "sigma": _pos, "rho": _pos}, ["kind"]),
    _obj({"kind": {"const": "pursuit_evasion"}, "sigma_e": _pos, "rho_e": _pos,
          "sigma_p": _pos, "rho_p": _pos}, ["kind"]),
]}

_sgd_props = {
    "n_interior": _count, "n_boundary": _count, "n_supervised": _count, "n_initial": _count,
    "step_rule": {"enum": ["adam", "constant"]}, "lr": _pos, "beta1": _nonneg, "beta2": _nonneg,
    "eps": _pos, "resample": {"enum": ["every_iteration", "fixed_dataset"]},
    "epochs": _count, "batch_size": {"type": "integer", "minimum": 1}, "shuffle_seed": _count,
}

_stage = _obj({"alpha": _pos, "delta": _pos, "iterations": _count, "delta_t": _pos, "tau": _nonneg,
               **_sgd_props}, ["alpha", "delta", "iterations"])

_car = _obj({"sigma": _pos, "rho": _pos})

SCHEMA = _obj({
    "name": {"type": "string"},
    "description": {"type": "string"},
    "domain": _domain,
    "sampling": _obj({"interior": {"enum": ["uniform_interior", "radially_uniform"]}}),
    "hamiltonian": _hamiltonian,
    "boundary": _obj({"value": _num, "values": _obj({"inner": _num, "outer": _num})}),
    "supervised": _obj({
        "kind": {"enum": ["uniform", "localized", "file"]},
        "n": {"type": "integer", "minimum": 1}, "seed": _count,
        "center": _vector, "radius": _pos, "path": {"type": "string"},
    }, ["kind"]),
    "initial": _obj({"kind": {"const": "riccati"}, "A_diag": _vector}, ["kind"]),
    "horizon": _pos,
    "ground_truth": _obj({"kind": {"enum": ["cube", "ball", "annulus", "riccati", "none"]}}, ["kind"]),
    "network": {"oneOf": [
        _obj({"type": {"const": "mlp"}, "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1},
                                                   "minItems": 1}}, ["type", "hidden"]),
        _obj({"type": {"const": "periodic"},
              "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
              "groups": {"type": "array", "minItems": 1,
                         "items": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                   "minItems": 2, "maxItems": 2}}},
             ["type", "hidden", "groups"]),
    ]},
    "scheme": _obj({"alpha": _pos, "delta": _pos, "tau": _nonneg, "delta_t": _pos}, ["alpha", "delta"]),
    "loss": _obj({"gamma1": _nonneg, "gamma2": _nonneg, "gamma0": _nonneg}),
    "sgd": _obj(_sgd_props),
    "schedule": {"type": "array", "items": _stage, "minItems": 1},
    "evaluation": _obj({"n": {"type": "integer", "minimum": 1}, "include_origin": {"type": "boolean"},
                        "seed": _count, "heatmap_resolution": {"type": "integer", "minimum": 2}}),
    "seeds": {"type": "array", "items": _count, "minItems": 1},
    "output": {"type": "string"},
    "oracle": _obj({
        "grids": {"type": "array", "minItems": 1, "items": _obj(
            {"d": {"type": "integer", "minimum": 1, "maximum": 3}, "N": {"type": "integer", "minimum": 2},
             "alpha": _pos, "boundary_value": _num}, ["d", "N", "alpha"])},
        "tol": _pos, "max_iters": {"type": "integer", "minimum": 1},
    }, ["grids"]),
    "rollout": _obj({
        "kind": {"enum": ["car", "game"]}, "delta": _pos, "dt": _pos, "t_max": _pos,
        "t_max_factor": _pos, "target_radius": _pos, "capture_radius": _pos, "escape_radius": _pos,
        "car": _car, "evader": _car, "pursuer": _car, "initial_states": {"type": "string"},
        "theta": {"type": "string"},
    }, ["kind"]),
    "sweep": _obj({
        "deltas": {"type": "array", "items": _pos, "minItems": 1},
        "alphas": {"type": "array", "items": _pos, "minItems": 1},
        "iterations": {"type": "integer", "minimum": 1},
        "supervised": {"type": "array", "minItems": 1, "items": {"enum": ["none", "uniform", "localized"]}},
        "n_supervised": {"type": "integer", "minimum": 1},
        "localized_radius": _pos,
        "n_probes": {"type": "integer", "minimum": 1},
        "retry": {"type": "boolean"},
    }, ["deltas"]),
}, ["domain", "hamiltonian"])


def resolve_path(value, base_dir):
    if value.startswith("pkg:"):
        return PACKAGE_DIR / value[4:]
    p = Path(value)
    return p if p.is_absolute() else Path(base_dir) / p


@dataclass
class Experiment:
    """A validated configuration plus the objects it describes."""

    raw: dict
    base_dir: Path

    @property
    def name(self):
        return self.raw.get("name", "experiment")

    def path(self, key_value):
        return resolve_path(key_value, self.base_dir)

    # --- components ---------------------------------------------------------------
    def domain(self):
        return geometry.domain_from_dict(self.raw["domain"])

    def hamiltonian(self):
        return hamiltonian_from_dict(self.raw["hamiltonian"])

    def horizon(self):
        return self.raw.get("horizon")

    def space_dim(self):
        return self.domain().dim

    def architecture(self):
        net = self.raw.get("network", {"type": "mlp", "hidden": [20]})
        in_dim = self.space_dim() + (1 if self.horizon() is not None else 0)
        if net["type"] == "mlp":
            return MlpArchitecture(in_dim, tuple(net["hidden"]))
        groups = tuple(tuple(g) for g in net["groups"])
        return PeriodicArchitecture(in_dim - len(groups), groups, tuple(net["hidden"]))

    def weights(self):
        return LossWeights(**self.raw.get("loss", {}))

    def scheme(self):
        if "scheme" in self.raw:
            return SchemeConfig(**self.raw["scheme"])
        last = self.raw["schedule"][-1]
        return SchemeConfig(last["alpha"], last["delta"], last.get("tau", 0.0), last.get("delta_t"))

    def sgd_defaults(self):
        return dict(self.raw.get("sgd", {}))

    def schedule(self, iterations_override=None, alpha=None, delta=None):
        if "schedule" not in self.raw:
            raise ConfigError("config has no schedule")
        base = self.sgd_defaults()
        stages = []
        for st in self.raw["schedule"]:
            st = dict(st)
            a = st.pop("alpha") if alpha is None else alpha
            dl = st.pop("delta") if delta is None else delta
            st.pop("alpha", None)
            st.pop("delta", None)
            dt = st.pop("delta_t", None)
            tau = st.pop("tau", 0.0)
            its = st.pop("iterations")
            if iterations_override is not None:
                its = iterations_override
            sgd = SgdConfig(iterations=its, **{**base, **st})
            stages.append(Stage(a, dl, sgd, dt, tau))
        try:
            return Schedule(stages)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def truth(self):
        """Ground-truth evaluator ``f(X)`` (or ``f(X, t)`` for riccati), or None."""
        gt = self.raw.get("ground_truth", {"kind": "none"})
        kind = gt["kind"]
        dom = self.domain()
        base = dom.base if isinstance(dom, geometry.ProductWithTorus) else dom
        if kind == "cube":
            return lambda X: grid_oracle.cube_distance(X, base.half_width, base.center)
        if kind == "ball":
            return lambda X: grid_oracle.ball_distance(X, base.radius, base.center)
        if kind == "annulus":
            return lambda X: grid_oracle.annulus_distance(X, base.inner_radius, base.outer_radius, base.center)
        if kind == "riccati":
            sol = grid_oracle.RiccatiSolution(self.riccati_matrix(), self.horizon())
            return sol.value
        return None

    def riccati_matrix(self):
        init = self.raw.get("initial", {})
        if "A_diag" in init:
            return np.diag(init["A_diag"])
        return grid_oracle.riccati_initial_matrix(self.space_dim())

    def boundary_function(self):
        b = self.raw.get("boundary")
        if b is None:
            return None
        if "values" in b:
            v = b["values"]
            return constant_boundary({geometry.INNER: v.get("inner", 0.0), geometry.OUTER: v.get("outer", 0.0)})
        return constant_boundary(float(b.get("value", 0.0)))

    def supervised_set(self, override=None, n=None, seed=None, radius=None):
        sup = dict(self.raw.get("supervised", {})) if override is None else override
        if not sup or sup.get("kind") in (None, "none"):
            return None, None
        kind = sup["kind"]
        if kind == "file":
            from .csvio import read_csv
            _, _, data = read_csv(self.path(sup["path"]))
            return data[:, :-1], data[:, -1]
        truth = self.truth()
        if truth is None:
            raise ConfigError("supervised data needs a ground_truth")
        dom = self.domain()
        n = n or sup.get("n", 10)
        seed = sup.get("seed", 0) if seed is None else seed
        rng = geometry.make_rng(seed, 7)
        if kind == "uniform":
            X = dom.sample_uniform(rng, n)
        else:
            c = np.asarray(sup.get("center", np.zeros(dom.dim)), dtype=float)
            r = radius or sup.get("radius", 0.5)
            X = c + geometry.Ball(dom.dim, r).sample_uniform(rng, n)
        return X, truth(X)

    def initial_function(self):
        init = self.raw.get("initial")
        if init is None:
            return None
        A = self.riccati_matrix()
        return lambda X: 0.5 * (np.einsum("ni,ij,nj->n", X, A, X) - 1.0)

    def problem(self, supervised=None):
        Xs, hs = self.supervised_set() if supervised is None else supervised
        sampling = self.raw.get("sampling", {}).get("interior", geometry.UNIFORM_INTERIOR)
        return Problem(self.domain(), self.hamiltonian(), self.boundary_function(), Xs, hs,
                       self.initial_function(), self.horizon(), sampling)

    def seeds(self):
        return list(self.raw.get("seeds", [0]))

    def evaluation(self):
        ev = {"n": 100_000, "include_origin": True, "seed": 12345, "heatmap_resolution": 101}
        ev.update(self.raw.get("evaluation", {}))
        return ev


def validate(raw, base_dir="."):
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    exp = Experiment(raw, Path(base_dir))
    # referenced files must exist now, not halfway through a run
    refs = []
    if raw.get("supervised", {}).get("kind") == "file":
        refs.append(raw["supervised"].get("path", ""))
    # rollout.theta is checked when rolling out, since training produces it
    if "initial_states" in raw.get("rollout", {}):
        refs.append(raw["rollout"]["initial_states"])
    for ref in refs:
        if not ref or not exp.path(ref).is_file():
            raise ConfigError(f"referenced file does not exist: {ref!r}")
    try:
        dom = exp.domain()
        exp.hamiltonian()
        exp.architecture()
        if "schedule" in raw:
            exp.schedule()
    except (ValueError, TypeError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config: {exc}") from None
    h = exp.hamiltonian()
    if h.dim is not None and dom.dim != h.dim:
        raise ConfigError(f"hamiltonian {h.kind} needs a {h.dim}-dimensional domain, got {dom.dim}")
    if raw.get("sampling", {}).get("interior") == "radially_uniform" and not dom.radial:
        raise ConfigError("radially_uniform sampling needs a ball or annulus domain")
    return exp


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return validate(raw, path.parent)


def bundled_config(name):
    """Path of a config shipped with the package (``"eikonal2d"`` or ``"eikonal2d.json"``)."""
    p = CONFIG_DIR / (name if name.endswith(".json") else name + ".json")
    if not p.is_file():
        raise ConfigError(f"no bundled config {name!r}; available: {sorted(os.listdir(CONFIG_DIR))}")
    return p
