"""Experiment configuration: YAML documents layered over named presets.

Schema (every section optional; keys not listed are rejected)::

    experiment: convergence | lshape | tumour | custom
    level: 4                 # structured mesh level, h = 2^-level
    tau: 1.0e-5
    T: 0.01
    chl_mode: false
    output_dir: out          # relative paths resolve against $CHBIOT_OUTPUT_ROOT
    snapshot_stride: 0       # write VTK every n steps (0: off)
    snapshot_times: [0, 1]   # additional snapshot times (nearest step)
    material:                # MaterialParams fields
      gamma: 1.0e-4
      mobility: {kind: constant, value: 1.0}
      C_minus: [[4, 2, 0], [2, 4, 0], [0, 0, 8]]
    sources:
      r: {kind: zero, value: 0.0}
      s: {kind: zero, value: 0.0}
      f: [0.0, 0.0]
    initial:
      kind: perturbed | bubbles | constant
      value: -0.1            # perturbed / constant
      amplitude: 0.01        # perturbed
      bubbles: [[0.3, 0.3, 0.15]]   # bubbles: (x0, y0, radius)
      width: 0.005           # bubbles
    scheme: {newton_tol: 1.0e-10, newton_max_iters: 50, quad_points: 5, degree: 6}
"""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .material import MaterialParams, MobilitySpec, SourceSpec

OUTPUT_ROOT_ENV = "CHBIOT_OUTPUT_ROOT"
EXPERIMENTS = ("convergence", "lshape", "tumour", "custom")


class ConfigError(ValueError):
    pass


_MATERIAL_KEYS = {"gamma", "xi", "eigen_scale", "eigen_shift", "kappa", "M", "alpha",
                  "C_minus", "C_plus", "Cnu_minus", "Cnu_plus", "mobility"}
_MOBILITY_KEYS = {"kind", "value", "floor", "scale"}
_SOURCE_KEYS = {"kind", "value"}
_INITIAL_KEYS = {"kind", "value", "amplitude", "bubbles", "width"}
_SCHEME_KEYS = {"newton_tol", "newton_max_iters", "quad_points", "degree"}
_TOP_KEYS = {"experiment", "level", "tau", "T", "chl_mode", "output_dir", "snapshot_stride",
             "snapshot_times", "material", "sources", "initial", "scheme"}

_ZERO = {"kind": "zero", "value": 0.0}

PRESETS = {
    "convergence": {
        "level": 4, "tau": 1e-5, "T": 0.01, "output_dir": "convergence",
        "initial": {"kind": "perturbed", "value": -0.1, "amplitude": 0.01},
    },
    "lshape": {
        "level": 7, "tau": 1e-3, "T": 2.0, "output_dir": "lshape", "snapshot_stride": 0,
        "snapshot_times": [0.0, 0.02, 0.06, 2.0],
        "initial": {"kind": "bubbles", "width": 0.005,
                    "bubbles": [[0.3, 0.3, 0.15], [0.3, 0.7, 0.15], [0.7, 0.3, 0.15]]},
    },
    "tumour": {
        "level": 7, "tau": 1e-3, "T": 1.0, "output_dir": "tumour",
        "snapshot_times": [0.0, 0.5, 0.75, 1.0],
        "material": {
            "eigen_scale": 0.5, "eigen_shift": -1.0,
            "C_minus": [[6.0, 4.0, 0.0], [4.0, 6.0, 0.0], [0.0, 0.0, 1.0]],
            "C_plus": [[1.55, 0.38, 0.0], [0.38, 1.55, 0.0], [0.0, 0.0, 0.58]],
            "Cnu_minus": [[0.0] * 3] * 3, "Cnu_plus": [[0.0] * 3] * 3,
            "mobility": {"kind": "degenerate", "floor": 1e-14, "scale": 1.0 / 16.0},
        },
        "sources": {"r": {"kind": "logistic", "value": 2.5}},
        "initial": {"kind": "bubbles", "width": 0.005, "bubbles": [[0.5, 0.5, 0.15]]},
    },
    "custom": {},
}


def _tolist(x):
    return np.asarray(x, dtype=float).tolist()


def _material_defaults() -> dict:
    d = MaterialParams()
    return {
        "gamma": d.gamma, "xi": d.xi, "eigen_scale": d.eigen_scale,
        "eigen_shift": d.eigen_shift, "kappa": list(d.kappa), "M": list(d.M),
        "alpha": list(d.alpha), "C_minus": _tolist(d.C_minus), "C_plus": _tolist(d.C_plus),
        "Cnu_minus": _tolist(d.Cnu_minus), "Cnu_plus": _tolist(d.Cnu_plus),
        "mobility": {"kind": "constant", "value": 1.0, "floor": 1e-14, "scale": 1.0 / 16.0},
    }


def _base_document() -> dict:
    return {
        "experiment": "custom", "level": 4, "tau": 1e-5, "T": 0.01, "chl_mode": False,
        "output_dir": "out", "snapshot_stride": 0, "snapshot_times": [],
        "material": _material_defaults(),
        "sources": {"r": dict(_ZERO), "s": dict(_ZERO), "f": [0.0, 0.0]},
        "initial": {"kind": "perturbed", "value": -0.1, "amplitude": 0.01,
                    "bubbles": [], "width": 0.005},
        "scheme": {"newton_tol": 1e-10, "newton_max_iters": 50, "quad_points": 5, "degree": 6},
    }


def _check_keys(where, d, allowed):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(d).__name__}")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _validate(doc: dict):
    _check_keys("config", doc, _TOP_KEYS)
    for name, allowed in (("material", _MATERIAL_KEYS), ("initial", _INITIAL_KEYS),
                          ("scheme", _SCHEME_KEYS), ("sources", {"r", "s", "f"})):
        if name in doc:
            _check_keys(name, doc[name], allowed)
    if "mobility" in doc.get("material", {}):
        _check_keys("material.mobility", doc["material"]["mobility"], _MOBILITY_KEYS)
    for src in ("r", "s"):
        if src in doc.get("sources", {}):
            _check_keys(f"sources.{src}", doc["sources"][src], _SOURCE_KEYS)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description; build with :func:`from_dict`."""
    experiment: str
    level: int
    tau: float
    T: float
    chl_mode: bool
    output_dir: str
    snapshot_stride: int
    snapshot_times: tuple
    material: dict = field(hash=False)
    sources: dict = field(hash=False)
    initial: dict = field(hash=False)
    scheme: dict = field(hash=False)

    def to_dict(self) -> dict:
        d = {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}
        d["snapshot_times"] = list(self.snapshot_times)
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def material_params(self) -> MaterialParams:
        m = copy.deepcopy(self.material)
        mob = m.pop("mobility")
        tup = {k: tuple(map(tuple, v)) if k.startswith("C") else tuple(v)
               for k, v in m.items() if isinstance(v, list)}
        m.update(tup)
        src = self.sources
        return MaterialParams(**m, mobility=MobilitySpec(**mob),
                              r=SourceSpec(**src["r"]), s=SourceSpec(**src["s"]),
                              f=tuple(src["f"]))

    def output_path(self) -> Path:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
        return root / self.output_dir

    def initial_phi(self):
        """Callable phi0(x, y)."""
        ini = self.initial
        kind = ini["kind"]
        if kind == "constant":
            return lambda x, y: np.full_like(x, ini["value"])
        if kind == "perturbed":
            c, a = ini["value"], ini["amplitude"]
            return lambda x, y: c + a * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
        bubbles, w = ini["bubbles"], ini["width"]

        def phi0(x, y):
            out = np.full_like(x, len(bubbles) - 1.0)
            for x0, y0, r in bubbles:
                out -= np.tanh(((x - x0) ** 2 + (y - y0) ** 2 - r * r) / w)
            return out
        return phi0


def from_dict(doc: dict) -> ExperimentConfig:
    doc = doc or {}
    _validate(doc)
    name = doc.get("experiment", "custom")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {EXPERIMENTS}")
    full = _merge(_merge(_base_document(), PRESETS[name]), doc)
    full["experiment"] = name
    _validate(full)
    try:
        cfg = ExperimentConfig(
            experiment=name, level=int(full["level"]), tau=float(full["tau"]),
            T=float(full["T"]), chl_mode=bool(full["chl_mode"]),
            output_dir=str(full["output_dir"]),
            snapshot_stride=int(full["snapshot_stride"]),
            snapshot_times=tuple(float(t) for t in full["snapshot_times"] or ()),
            material=full["material"], sources=full["sources"], initial=full["initial"],
            scheme=full["scheme"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value: {exc}") from exc
    if cfg.level < 0:
        raise ConfigError("level must be non-negative")
    if cfg.initial["kind"] not in ("perturbed", "bubbles", "constant"):
        raise ConfigError(f"unknown initial kind {cfg.initial['kind']!r}")
    cfg.material_params()  # raises on invalid material data
    return cfg


def parse_yaml(text: str) -> ExperimentConfig:
    return from_dict(yaml.safe_load(text))


def load(path) -> ExperimentConfig:
    return parse_yaml(Path(path).read_text())
