"""Run configuration: one structured JSON file per run.

Every report embeds the configuration hash, the tool version and the
seed, so outputs are traceable and reruns are byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import ValidationError

DEFAULTS = {
    "seed": 1,
    "model": {"dim": 1, "lambdas": [1.0], "kind": "schrodinger_barrier",
              "perturbation": []},
    "scenario": {"epsilon": 0.1, "domain_radius": None, "eta_halfwidth": None},
    "spectral": {"h": [0.1], "z": [[0.0, 0.0]], "C0": 1.0, "C1": 1.0,
                 "nu": 0.1},
    "tolerances": {"chart_tol": 1e-8, "flow_tol": 1e-10, "phase_tol": 1e-6},
    "lattice": {"bound": 0.2},
    "flow": {"start": None, "t_max": 6.0, "samples": 80},
    "phase": {"eta_prime": None, "t_max": 7.0},
    "transition": {"x_targets": [[0.5]], "y_prime": None},
    "verify": {"z_scaled": [0.0, 0.3, -0.3], "h_list": [0.2, 0.1, 0.05],
               "x_target": -1.0, "resonance_count": 5,
               "resonance_h": [0.1, 0.05], "tube_thickness": 0.15},
    "fbi": {"x_axis": [-0.55, 0.55, 90], "xi_axis": [-0.75, 0.75, 121],
            "tube_thickness": 0.15, "mass_x_bound": 0.5},
    "output_dir": "out",
}


@dataclass
class RunConfig:
    raw: dict
    sha256: str
    seed: int
    sections: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.sections[key]


def _merge(base, override):
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot parse config {path}: {exc}") from exc
    merged = _merge(DEFAULTS, raw)
    validate_config(merged)
    canon = json.dumps(merged, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canon.encode()).hexdigest()
    return RunConfig(raw=merged, sha256=digest, seed=int(merged["seed"]),
                     sections=merged)


def validate_config(cfg):
    model = cfg["model"]
    lams = model.get("lambdas", [])
    if not lams or any(v <= 0 for v in lams):
        raise ValidationError("model.lambdas must be nonempty and positive")
    if len(lams) != int(model.get("dim", len(lams))):
        raise ValidationError("model.dim must match lambdas length")
    for key, val in cfg["tolerances"].items():
        if val <= 0:
            raise ValidationError(f"tolerance {key} must be positive")
    sp = cfg["spectral"]
    if not sp["h"] or any(h <= 0 for h in sp["h"]):
        raise ValidationError("spectral.h sweep must be nonempty and positive")
    if not sp["z"]:
        raise ValidationError("spectral.z sweep must be nonempty")
    for name in ("C0", "C1", "nu"):
        if sp[name] <= 0:
            raise ValidationError(f"spectral.{name} must be positive")
    if cfg["scenario"]["epsilon"] <= 0:
        raise ValidationError("scenario.epsilon must be positive")
    if cfg["lattice"]["bound"] <= 0:
        raise ValidationError("lattice.bound must be positive")
