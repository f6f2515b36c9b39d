"""JSON scenario files: schema validation and construction of run objects."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np

from .control import ControllerGains
from .model import DisturbanceBounds, ParametricDisturbance, PlantModel, TanhFriction, ZeroComponent, sine_reference
from .observer import ObserverGains
from .scaling import ScaledSystem, scale_gains
from .sim.scenario import CurrentLoopConfig, ScenarioConfig, StabilitySettings
from .sim.telescope import telescope_config


class ConfigError(ValueError):
    """Invalid scenario file; ``path`` locates the offending entry."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path
        self.message = message


def load_schema(name: str = "scenario") -> dict:
    text = resources.files("cascade_adrc").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def bundled_scenario(name: str) -> str:
    """Filesystem path of a scenario shipped with the package."""
    fname = name if name.endswith(".json") else f"{name}.json"
    path = resources.files("cascade_adrc").joinpath("scenarios", fname)
    if not path.is_file():
        raise FileNotFoundError(f"no bundled scenario {fname!r}")
    return str(path)


def _json_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def validate(doc: dict, schema: str = "scenario") -> None:
    """Raise :class:`ConfigError` for the first schema violation, deepest path first."""
    validator = jsonschema.Draft202012Validator(load_schema(schema))
    errors = list(validator.iter_errors(doc))
    if not errors:
        return
    # oneOf/anyOf wrappers report at the parent; the best match names the real leaf
    err = jsonschema.exceptions.best_match(errors)
    raise ConfigError(_json_path(err.absolute_path), err.message)


@dataclass
class LoadedConfig:
    """A validated scenario file and the objects built from it."""

    doc: dict
    scenario: ScenarioConfig
    grid: Optional[dict] = None
    telescope: Optional[dict] = None
    omega_grid: Optional[dict] = None
    kappa_grid: Optional[dict] = None

    @property
    def seed(self) -> int:
        return int(self.doc.get("seed", 0))


class _Builder:
    def __init__(self, doc: dict):
        self.doc = doc

    def wrap(self, path, fn, *a, **kw):
        try:
            return fn(*a, **kw)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(path, str(exc)) from None

    def matrix(self, path, x, n):
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            return arr * np.eye(n)
        if arr.ndim == 1:
            if arr.shape[0] not in (1, n):
                raise ConfigError(path, f"expected {n} diagonal entries, got {arr.shape[0]}")
            return np.diag(np.broadcast_to(arr, (n,)))
        if arr.shape != (n, n):
            raise ConfigError(path, f"expected a {n}x{n} matrix, got shape {arr.shape}")
        return arr

    def friction(self, path, spec, n):
        sched = spec.get("schedule")
        schedule = (sched["times"], sched["values"]) if sched else None
        return self.wrap(path, TanhFriction, spec["coefficient"], spec["steepness"], n=n, schedule=schedule)

    def component(self, path, spec, n):
        if spec is None or spec["type"] == "zero":
            return ZeroComponent(n)
        return self.friction(path, spec, n)

    def plant(self):
        p = self.doc["plant"]
        n = p["n"]
        B = self.matrix("plant.B", p["B"], n)
        T = self.wrap("plant.T", lambda: np.broadcast_to(np.asarray(p["T"], float), (n,)).copy())
        h1 = self.component("plant.h1", p.get("h1"), n)
        h2 = self.component("plant.h2", p.get("h2"), n)
        qs = p.get("q") or {}
        fr = self.friction("plant.q.friction", qs["friction"], n) if "friction" in qs else None
        q = self.wrap("plant.q", ParametricDisturbance, n, qs.get("offset", 0.0), qs.get("amplitude", 0.0),
                      qs.get("frequency", 0.0), fr)
        model = self.wrap("plant.T" if np.any(T <= 0) else "plant", PlantModel, B, T, h1, h2, q)
        return model

    def gains(self, n):
        g = self.doc["gains"]
        omega, kappa = self.doc.get("omega"), self.doc.get("kappa")
        if "scaled" in g:
            if omega is None or kappa is None:
                raise ConfigError("gains.scaled", "scaled gains need both omega and kappa")
            s = g["scaled"]
            scaled = self.wrap("gains.scaled", ScaledSystem.from_gains,
                               *(np.broadcast_to(np.asarray(s[k], float), (n,))
                                 for k in ("Kp_bar", "Kd_bar", "K1_bar", "K2_bar", "K3_bar")))
            un = self.wrap("gains.scaled", scaled.unscaled, omega, kappa)
            return un["Kp"], un["Kd"], un["observer"], scaled
        r = g["raw"]
        vec = {k: self.wrap(f"gains.raw.{k}", lambda k=k: np.broadcast_to(np.asarray(r[k], float), (n,)).copy())
               for k in ("Kp", "Kd", "K1", "K2", "K3")}
        obs = self.wrap("gains.raw", ObserverGains, vec["K1"], vec["K2"], vec["K3"])
        scaled = None
        if omega is not None and kappa is not None:
            Kc = np.hstack([np.diag(vec["Kp"]), np.diag(vec["Kd"])])
            scaled = self.wrap("gains.raw", scale_gains, Kc, obs.stacked, omega, kappa)
        return vec["Kp"], vec["Kd"], obs, scaled

    def input_model(self):
        im = self.doc.get("input_model", "first_order_lag")
        if isinstance(im, str):
            return im
        kw = {k: v for k, v in im.items() if k != "type"}
        return self.wrap("input_model", CurrentLoopConfig, **kw)

    def stability(self, n):
        s = self.doc.get("stability") or {}
        Qc = self.wrap("stability.Qc", self.weight, s.get("Qc"), 2 * n)
        Qo = self.wrap("stability.Qo", self.weight, s.get("Qo"), 3 * n)
        bounds = self.wrap("stability.bounds", DisturbanceBounds, **s["bounds"]) if "bounds" in s else None
        return StabilitySettings(Qc=Qc, Qo=Qo, bounds=bounds)

    @staticmethod
    def weight(Q, m):
        if Q is None or np.isscalar(Q):
            return Q
        arr = np.asarray(Q, dtype=float)
        if arr.shape != (m, m):
            raise ValueError(f"expected a {m}x{m} matrix, got shape {arr.shape}")
        return arr

    def simulation_kw(self):
        s = self.doc.get("simulation") or {}
        return {k: s[k] for k in ("duration", "step", "record_every", "x1_0", "x2_0") if k in s}

    def scenario(self) -> ScenarioConfig:
        if "telescope" in self.doc and "plant" not in self.doc:
            return self.telescope_scenario()
        model = self.plant()
        n = model.n
        Kp, Kd, obs, scaled = self.gains(n)
        c = self.doc.get("controller") or {}
        ctrl = self.wrap("controller", ControllerGains, Kp, Kd, c.get("compensation_mode", "none"),
                         c.get("rejection_enabled", True))
        tr = self.doc["trajectory"]
        traj = self.wrap("trajectory", sine_reference, tr["amplitude"], tr["angular_frequency"], n)
        kw = {"duration": 20.0, **self.simulation_kw()}
        return self.wrap("simulation", ScenarioConfig, model=model, controller=ctrl, observer=obs,
                         trajectory=traj, omega=self.doc.get("omega"), kappa=self.doc.get("kappa"),
                         scaled=scaled, input_model=self.input_model(), stability=self.stability(n),
                         name=self.doc.get("name", ""), **kw)

    def telescope_scenario(self) -> ScenarioConfig:
        t = self.doc["telescope"]
        im = self.input_model()
        if isinstance(im, str):
            im = CurrentLoopConfig()
        sched = t.get("friction_schedule")
        sim = self.simulation_kw()
        kw = {k: sim[k] for k in ("duration", "step", "record_every") if k in sim}
        cfg = self.wrap("telescope", telescope_config, t["speed_multiple"], t["friction_coefficient"],
                        true_friction_coefficient=t.get("true_friction_coefficient"),
                        friction_schedule=(sched["times"], sched["values"]) if sched else None,
                        loop=im, name=self.doc.get("name", ""), **kw)
        return cfg


def build(doc: dict) -> LoadedConfig:
    """Validate ``doc`` and build the scenario it describes."""
    validate(doc)
    b = _Builder(doc)
    scenario = b.scenario()
    grid = doc.get("grid")
    if grid is not None and (scenario.scaled is None or scenario.kappa is None):
        raise ConfigError("grid", "a grid over omega needs gains in scaled form with omega and kappa")
    st = doc.get("stability") or {}
    return LoadedConfig(doc, scenario, grid, doc.get("telescope"), st.get("omega_grid"), st.get("kappa_grid"))


def load(path: str) -> LoadedConfig:
    """Read, validate and build a scenario file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("", "top level must be an object")
    return build(doc)
