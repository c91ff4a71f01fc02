"""Scenario files: a flat dotted-key TOML schema, strictly validated.

Unknown keys are rejected so typos surface immediately; every validation
error names the offending key and the violated constraint. Shipped presets
live in mracsim/presets and can be referenced by bare name.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .acc import (
    AccConfig,
    AccRefModel,
    DisturbanceSpec,
    LeadSpec,
    SpacingPolicy,
    VehicleModel,
    carsim_reduction,
)
from .errors import ConfigError
from .lti import Polynomial, TransferFunction
from .mrac import MracConfig, ReferenceSpec

_NUM = (int, float)


def _is_num(v):
    return isinstance(v, _NUM) and not isinstance(v, bool)


def _is_numlist(v):
    return isinstance(v, list) and len(v) > 0 and all(_is_num(x) for x in v)


def _positive(v):
    return _is_num(v) and v > 0


def _nonneg(v):
    return _is_num(v) and v >= 0


def _is_bool(v):
    return isinstance(v, bool)


def _is_str(v):
    return isinstance(v, str)


# key -> (applies-to-modes, required-in-those-modes, predicate, constraint text)
_SCHEMA = {
    "name": (("acc", "generic-mrac"), True, _is_str, "string"),
    "mode": (("acc", "generic-mrac"), True,
             lambda v: v in ("acc", "generic-mrac"), "acc | generic-mrac"),
    "description": (("acc", "generic-mrac"), False, _is_str, "string"),
    "analysis_mode": (("acc", "generic-mrac"), False, _is_bool, "boolean"),
    "law.type": (("acc", "generic-mrac"), True,
                 lambda v: v in ("gradient", "rls"), "gradient | rls"),
    "law.gamma": (("acc", "generic-mrac"), False,
                  lambda v: _positive(v) or (_is_numlist(v) and all(x > 0 for x in v)),
                  "positive number or positive list"),
    "law.beta": (("acc", "generic-mrac"), False, _nonneg, ">= 0"),
    "law.p0": (("acc", "generic-mrac"), False, _positive, "> 0"),
    "law.rho_max": (("acc", "generic-mrac"), False,
                    lambda v: _is_num(v) and v > 0, "> 0 (inf disables the cap)"),
    "law.normalized": (("acc", "generic-mrac"), False, _is_bool, "boolean"),
    "sim.dt": (("acc", "generic-mrac"), True, _positive, "> 0"),
    "sim.t_final": (("acc", "generic-mrac"), True, _positive, "> 0"),
    "sim.seed": (("acc", "generic-mrac"), False,
                 lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0,
                 "integer >= 0"),
    "sim.noise_sigma": (("acc", "generic-mrac"), False, _nonneg, ">= 0"),
    "sim.noise_hold": (("acc", "generic-mrac"), False, _positive, "> 0 seconds"),
    "sim.output_every": (("acc", "generic-mrac"), False,
                         lambda v: isinstance(v, int) and v >= 1, "integer >= 1"),
    "sim.alarm": (("acc", "generic-mrac"), False, _positive, "> 0"),
    "pe.t0": (("acc", "generic-mrac"), False, _positive, "> 0"),
    "pe.alpha0": (("acc", "generic-mrac"), False, _nonneg, ">= 0"),
    "bounds.lower": (("acc", "generic-mrac"), False,
                     lambda v: _is_num(v) or _is_numlist(v), "number or list"),
    "bounds.upper": (("acc", "generic-mrac"), False,
                     lambda v: _is_num(v) or _is_numlist(v), "number or list"),
    # acc only
    "vehicle.a": (("acc",), False, _positive, "> 0"),
    "vehicle.b": (("acc",), False, _positive, "> 0"),
    "vehicle.preset": (("acc",), False, lambda v: v == "carsim", "carsim"),
    "vehicle.mass": (("acc",), False, _positive, "> 0 kg"),
    "vehicle.wheel_radius": (("acc",), False, _positive, "> 0 m"),
    "vehicle.wheel_inertia": (("acc",), False, _positive, "> 0 kg m^2"),
    "vehicle.drag": (("acc",), False, _positive, "> 0 kg/s"),
    "vehicle.v0": (("acc",), False, _is_num, "number"),
    "spacing.s0": (("acc",), False, _positive, "> 0 m"),
    "spacing.h": (("acc",), False, _positive, "> 0 s"),
    "refmodel.am": (("acc",), False, _positive, "> 0"),
    "refmodel.k": (("acc",), False, _positive, "> 0"),
    "refmodel.vm0": (("acc",), False, _is_num, "number"),
    "initial.delta0": (("acc",), False, _is_num, "number"),
    "initial.k0": (("acc",), False,
                   lambda v: _is_numlist(v) and len(v) == 3, "list of 3 numbers"),
    "lead.kind": (("acc",), False,
                  lambda v: v in ("constant", "ramp", "piecewise", "sinusoid"),
                  "constant | ramp | piecewise | sinusoid"),
    "lead.value": (("acc",), False, _is_num, "number"),
    "lead.v_start": (("acc",), False, _is_num, "number"),
    "lead.v_end": (("acc",), False, _is_num, "number"),
    "lead.t_start": (("acc",), False, _nonneg, ">= 0"),
    "lead.t_end": (("acc",), False, _nonneg, ">= 0"),
    "lead.times": (("acc",), False, _is_numlist, "list of numbers"),
    "lead.values": (("acc",), False, _is_numlist, "list of numbers"),
    "lead.mean": (("acc",), False, _is_num, "number"),
    "lead.amplitude": (("acc",), False, _is_num, "number"),
    "lead.period": (("acc",), False, _positive, "> 0"),
    "disturbance.kind": (("acc",), False,
                         lambda v: v in ("constant", "grade_step"),
                         "constant | grade_step"),
    "disturbance.value": (("acc",), False, _is_num, "number"),
    "disturbance.slope_deg": (("acc",), False, _is_num, "number"),
    "disturbance.t_on": (("acc",), False, _nonneg, ">= 0"),
    # generic-mrac only
    "plant.gain": (("generic-mrac",), False,
                   lambda v: _is_num(v) and v != 0, "nonzero number"),
    "plant.num": (("generic-mrac",), False, _is_numlist, "coefficient list"),
    "plant.den": (("generic-mrac",), False, _is_numlist, "coefficient list"),
    "refmodel.gain": (("generic-mrac",), False,
                      lambda v: _is_num(v) and v != 0, "nonzero number"),
    "refmodel.num": (("generic-mrac",), False, _is_numlist, "coefficient list"),
    "refmodel.den": (("generic-mrac",), False, _is_numlist, "coefficient list"),
    "controller.n": (("generic-mrac",), False,
                     lambda v: isinstance(v, int) and v >= 1, "integer >= 1"),
    "controller.lambda0": (("generic-mrac",), False, _is_numlist,
                           "coefficient list"),
    "initial.theta0": (("generic-mrac",), False,
                       lambda v: v == "star" or _is_numlist(v),
                       "'star' or a coefficient list"),
    "reference.kind": (("generic-mrac",), False,
                       lambda v: v in ("constant", "step", "sum_of_sinusoids",
                                       "square"),
                       "constant | step | sum_of_sinusoids | square"),
    "reference.value": (("generic-mrac",), False, _is_num, "number"),
    "reference.t_on": (("generic-mrac",), False, _nonneg, ">= 0"),
    "reference.amplitudes": (("generic-mrac",), False, _is_numlist,
                             "list of numbers"),
    "reference.frequencies": (("generic-mrac",), False,
                              lambda v: _is_numlist(v) and all(x > 0 for x in v),
                              "list of positive rad/s"),
    "reference.phases": (("generic-mrac",), False, _is_numlist,
                         "list of numbers"),
    "reference.amplitude": (("generic-mrac",), False, _is_num, "number"),
    "reference.period": (("generic-mrac",), False, _positive, "> 0"),
    "analysis.track_composite_error": (("generic-mrac",), False, _is_bool,
                                       "boolean"),
}

_REQUIRED_BY_MODE = {
    "acc": ("refmodel.am", "refmodel.k", "lead.kind"),
    "generic-mrac": ("plant.gain", "plant.num", "plant.den", "refmodel.gain",
                     "refmodel.num", "refmodel.den", "reference.kind"),
}


def _flatten(d, prefix=""):
    out = {}
    for key, val in d.items():
        dotted = f"{prefix}{key}"
        if isinstance(val, dict):
            out.update(_flatten(val, dotted + "."))
        else:
            out[dotted] = val
    return out


@dataclass
class Scenario:
    """Validated flat scenario dictionary plus builders for the simulators."""

    flat: dict

    @property
    def name(self):
        return self.flat["name"]

    @property
    def mode(self):
        return self.flat["mode"]

    @property
    def law(self):
        return self.flat["law.type"]

    @property
    def analysis(self):
        return bool(self.flat.get("analysis_mode", False))

    @property
    def seed(self):
        return int(self.flat.get("sim.seed", 0))

    def hash(self) -> str:
        payload = json.dumps(self.flat, sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def with_overrides(self, **kv) -> "Scenario":
        """New scenario with dotted keys replaced (law=, seed=, analysis=)."""
        flat = dict(self.flat)
        mapping = {"law": "law.type", "seed": "sim.seed", "analysis": "analysis_mode"}
        for key, val in kv.items():
            if val is None:
                continue
            flat[mapping.get(key, key)] = val
        return validate_flat(flat)

    def _common_kwargs(self):
        f = self.flat
        kw = {
            "dt": float(f["sim.dt"]),
            "t_final": float(f["sim.t_final"]),
            "seed": int(f.get("sim.seed", 0)),
            "noise_sigma": float(f.get("sim.noise_sigma", 0.0)),
            "noise_hold": float(f.get("sim.noise_hold", 0.01)),
            "output_every": int(f.get("sim.output_every", 10)),
            "alarm": float(f.get("sim.alarm", 1e6)),
            "pe_t0": float(f.get("pe.t0", 5.0)),
            "pe_alpha0": float(f.get("pe.alpha0", 0.1)),
            "analysis": self.analysis,
            "beta": float(f.get("law.beta", 0.95)),
            "p0": float(f.get("law.p0", 100.0)),
            "rho_max": float(f.get("law.rho_max", 1e4)),
            "normalized": bool(f.get("law.normalized", False)),
        }
        return kw

    def build_acc(self):
        """(vehicle, spacing, refmodel, lead, law, AccConfig) for acc mode."""
        f = self.flat
        if self.mode != "acc":
            raise ConfigError(f"scenario {self.name} is not acc mode")
        if f.get("vehicle.preset") == "carsim":
            a, b = carsim_reduction(
                float(f.get("vehicle.mass", 567.75)),
                float(f.get("vehicle.wheel_radius", 0.3)),
                float(f.get("vehicle.wheel_inertia", 1.7)),
                float(f.get("vehicle.drag", 0.01)),
            )
        else:
            a, b = float(f["vehicle.a"]), float(f["vehicle.b"])
        dist = DisturbanceSpec(
            kind=f.get("disturbance.kind", "constant"),
            value=float(f.get("disturbance.value", 0.0)),
            slope_deg=float(f.get("disturbance.slope_deg", 0.0)),
            t_on=float(f.get("disturbance.t_on", 0.0)),
        )
        vehicle = VehicleModel(a, b, dist)
        spacing = SpacingPolicy(
            float(f.get("spacing.s0", 10.0)), float(f.get("spacing.h", 1.4))
        )
        refmodel = AccRefModel(float(f["refmodel.am"]), float(f["refmodel.k"]))
        lead = LeadSpec(
            kind=f["lead.kind"],
            value=float(f.get("lead.value", 20.0)),
            v_start=float(f.get("lead.v_start", 0.0)),
            v_end=float(f.get("lead.v_end", 0.0)),
            t_start=float(f.get("lead.t_start", 0.0)),
            t_end=float(f.get("lead.t_end", 0.0)),
            times=tuple(f.get("lead.times", ())),
            values=tuple(f.get("lead.values", ())),
            mean=float(f.get("lead.mean", 20.0)),
            amplitude=float(f.get("lead.amplitude", 0.0)),
            period=float(f.get("lead.period", 1.0)),
        )
        kw = self._common_kwargs()
        lower = f.get("bounds.lower", -100.0)
        upper = f.get("bounds.upper", 100.0)
        cfg = AccConfig(
            v0=f.get("vehicle.v0"),
            vm0=f.get("refmodel.vm0"),
            delta0=float(f.get("initial.delta0", 0.0)),
            k0=tuple(f.get("initial.k0", (0.0, 0.0, 0.0))),
            gamma=tuple(np.broadcast_to(
                np.asarray(f.get("law.gamma", (50.0, 30.0, 40.0)), float), (3,)
            )),
            bounds=(
                np.broadcast_to(np.asarray(lower, float), (3,)).copy(),
                np.broadcast_to(np.asarray(upper, float), (3,)).copy(),
            ),
            **kw,
        )
        return vehicle, spacing, refmodel, lead, self.law, cfg

    def build_mrac(self):
        """(plant, refmodel, law, reference, MracConfig) for generic mode."""
        f = self.flat
        if self.mode != "generic-mrac":
            raise ConfigError(f"scenario {self.name} is not generic-mrac mode")
        plant = TransferFunction(f["plant.gain"], f["plant.num"], f["plant.den"])
        refmodel = TransferFunction(
            f["refmodel.gain"], f["refmodel.num"], f["refmodel.den"]
        )
        reference = ReferenceSpec(
            kind=f["reference.kind"],
            value=float(f.get("reference.value", 0.0)),
            t_on=float(f.get("reference.t_on", 0.0)),
            amplitudes=tuple(f.get("reference.amplitudes", ())),
            frequencies=tuple(f.get("reference.frequencies", ())),
            phases=tuple(f.get("reference.phases", ())),
            amplitude=float(f.get("reference.amplitude", 0.0)),
            period=float(f.get("reference.period", 1.0)),
        )
        kw = self._common_kwargs()
        n = int(f.get("controller.n", 0)) or plant.order
        m = 2 * n
        theta0 = f.get("initial.theta0")
        if isinstance(theta0, list):
            theta0 = np.asarray(theta0, dtype=float)
        bounds = None
        if "bounds.lower" in f or "bounds.upper" in f:
            bounds = (
                np.broadcast_to(np.asarray(f.get("bounds.lower", -np.inf), float), (m,)).copy(),
                np.broadcast_to(np.asarray(f.get("bounds.upper", np.inf), float), (m,)).copy(),
            )
        lambda0 = None
        if "controller.lambda0" in f:
            lambda0 = Polynomial(f["controller.lambda0"])
        cfg = MracConfig(
            theta0=theta0,
            gamma=f.get("law.gamma", 10.0),
            bounds=bounds,
            n=n,
            lambda0=lambda0,
            track_composite_error=bool(
                f.get("analysis.track_composite_error", False)
            ),
            **kw,
        )
        return plant, refmodel, self.law, reference, cfg


def validate_flat(flat: dict) -> Scenario:
    """Validate a flat dotted-key dict against the schema; raise ConfigError."""
    if "mode" not in flat:
        raise ConfigError("mode: missing required key (acc | generic-mrac)")
    mode = flat["mode"]
    if mode not in ("acc", "generic-mrac"):
        raise ConfigError(f"mode: got {mode!r}, expected acc | generic-mrac")
    for key, val in sorted(flat.items()):
        if key not in _SCHEMA:
            raise ConfigError(f"{key}: unknown key (strict schema)")
        modes, _, pred, constraint = _SCHEMA[key]
        if mode not in modes:
            raise ConfigError(f"{key}: not valid in mode {mode}")
        if not pred(val):
            raise ConfigError(f"{key}: got {val!r}, expected {constraint}")
    for key, (modes, required, _, _) in _SCHEMA.items():
        if required and mode in modes and key not in flat:
            raise ConfigError(f"{key}: missing required key")
    for key in _REQUIRED_BY_MODE[mode]:
        if key not in flat:
            raise ConfigError(f"{key}: missing required key for mode {mode}")
    if float(flat["sim.t_final"]) <= float(flat["sim.dt"]):
        raise ConfigError("sim.t_final: must exceed sim.dt")
    if flat["mode"] == "acc":
        has_ab = "vehicle.a" in flat and "vehicle.b" in flat
        if not has_ab and flat.get("vehicle.preset") != "carsim":
            raise ConfigError(
                "vehicle.a: missing (give vehicle.a and vehicle.b, or "
                "vehicle.preset = 'carsim')"
            )
    if flat.get("law.type") == "gradient" and isinstance(flat.get("law.gamma"), list):
        need = 3 if mode == "acc" else None
        if need and len(flat["law.gamma"]) != need:
            raise ConfigError("law.gamma: acc mode needs exactly 3 entries")
    return Scenario(flat)


def preset_dir():
    return resources.files("mracsim.presets")


def list_presets():
    """Sorted (name, description) pairs of the shipped scenario files."""
    out = []
    for entry in sorted(preset_dir().iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".toml"):
            flat = _flatten(tomllib.loads(entry.read_text()))
            out.append((flat.get("name", entry.name[:-5]),
                        flat.get("description", "")))
    return out


def load_scenario(path_or_name) -> Scenario:
    """Load and validate a scenario file, or a shipped preset by name."""
    p = Path(str(path_or_name))
    if p.is_file():
        text = p.read_text()
    else:
        candidate = preset_dir() / (str(path_or_name) + ".toml")
        try:
            text = candidate.read_text()
        except (FileNotFoundError, OSError):
            raise ConfigError(
                f"{path_or_name}: not a file and not a shipped preset"
            ) from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as ex:
        raise ConfigError(f"{path_or_name}: parse error: {ex}") from None
    if not raw:
        raise ConfigError(f"{path_or_name}: empty scenario file")
    return validate_flat(_flatten(raw))
