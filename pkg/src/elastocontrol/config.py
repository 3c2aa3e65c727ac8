"""Run configuration: INI-style text, defaults from the reference 1D experiment.

Every field lives in one section.  Unknown keys and malformed values are
collected and reported together, one line per field.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields

from . import fem
from .objective import KINDS, ObjectiveConfig
from .optimizer import OptimizerConfig
from .problem import Problem, TimeGrid, profile
from .tensor_calculus import StrainEnergyModel


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``(field, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"{k}: {m}" for k, m in self.errors))


def _f(section, default, **kw):
    return field(default=default, metadata={"section": section, **kw})


@dataclass
class RunConfig:
    # material and load
    law: str = _f("physics", "svk", choices=("svk", "fung", "ogden"))
    lam: float = _f("physics", 0.05)
    mu: float = _f("physics", 0.05)
    fung_w0: float = _f("physics", 0.0)
    fung_beta: float = _f("physics", 1.0)
    fung_gamma: float = _f("physics", 1.0)
    ogden_gamma: float = _f("physics", 2.0)
    kappa: float = _f("physics", 2e-4)
    surface_load: float = _f("physics", 0.0)
    u0: str = _f("physics", "zero", choices=("zero", "sine", "poly"))
    u0_amplitude: float = _f("physics", 0.0)
    u0_coeffs: tuple = _f("physics", ())
    v0: str = _f("physics", "zero", choices=("zero", "sine", "poly"))
    v0_amplitude: float = _f("physics", 0.0)
    v0_coeffs: tuple = _f("physics", ())
    # discretization
    T: float = _f("discretization", 15.0)
    dt: float = _f("discretization", 0.02)
    mesh_h: float = _f("discretization", 0.01)
    omega_lo: float = _f("discretization", 0.75)
    omega_hi: float = _f("discretization", 1.0)
    control_kind: str = _f("discretization", "plain", choices=("plain", "fiber"))
    constraint: str = _f("discretization", "bordered",
                         choices=("bordered", "augmented_lagrangian", "none"))
    newton_tol: float = _f("discretization", 1e-10)
    newton_max_iter: int = _f("discretization", 25)
    check_injectivity: bool = _f("discretization", False)
    # objective
    alpha: float = _f("objective", 2e-3)
    objective: str = _f("objective", "pressure_at_tau", choices=KINDS)
    eps: float | None = _f("objective", None)
    eps_ref: float | None = _f("objective", None)
    tau: float | None = _f("objective", None)
    # optimizer
    armijo_factor: float = _f("optimizer", 0.5)
    stop_tol: float = _f("optimizer", 1e-10)
    max_iters: int = _f("optimizer", 200)
    s_min: float = _f("optimizer", 1e-6)
    s_max: float = _f("optimizer", 1e2)
    initial_step: float = _f("optimizer", 1.0)
    tau_lo: float | None = _f("optimizer", None)
    tau_hi: float | None = _f("optimizer", None)
    tau0: float | None = _f("optimizer", None)
    # output
    out_dir: str = _f("output", "out")
    delimiter: str = _f("output", ",", choices=(",", ";", "tab", "space"))

    # ------------------------------------------------------------------ build
    def model(self):
        if self.law == "svk":
            return StrainEnergyModel.svk(self.lam, self.mu)
        if self.law == "fung":
            return StrainEnergyModel.fung(self.fung_w0, self.fung_beta, self.fung_gamma)
        return StrainEnergyModel.ogden(self.ogden_gamma)

    def mesh(self):
        return fem.Mesh1D.uniform(self.mesh_h, (self.omega_lo, self.omega_hi))

    def problem(self) -> Problem:
        mesh = self.mesh()
        u0 = profile(self.u0, mesh, self.u0_amplitude, self.u0_coeffs)
        v0 = profile(self.v0, mesh, self.v0_amplitude, self.v0_coeffs)
        return Problem(mesh, self.model(), TimeGrid(self.T, self.dt), kappa=self.kappa,
                       control_kind=self.control_kind, surface_load=self.surface_load,
                       u0=u0, v0=v0, constraint=self.constraint,
                       check_injectivity=self.check_injectivity,
                       newton_tol=self.newton_tol, newton_max_iter=self.newton_max_iter)

    def objective_config(self) -> ObjectiveConfig:
        return ObjectiveConfig(self.alpha, self.objective, self.eps, self.eps_ref)

    def optimizer_config(self) -> OptimizerConfig:
        bounds = None
        if self.tau_lo is not None or self.tau_hi is not None:
            eps = self.objective_config().window(self.T, self.dt)[0]
            lo = self.T / 100.0 if self.tau_lo is None else self.tau_lo
            hi = self.T - eps - self.T / 100.0 if self.tau_hi is None else self.tau_hi
            bounds = (lo, hi)
        return OptimizerConfig(armijo_factor=self.armijo_factor, stop_tol=self.stop_tol,
                               max_iters=self.max_iters, tau_bounds=bounds, s_min=self.s_min,
                               s_max=self.s_max, initial_step=self.initial_step)

    @property
    def tau_eval(self):
        """Evaluation time for the single-point subcommands (default ``T/2``)."""
        return 0.5 * self.T if self.tau is None else self.tau

    @property
    def separator(self):
        return {"tab": "\t", "space": " "}.get(self.delimiter, self.delimiter)

    def validate(self):
        """Build every derived object once and report all failures together."""
        errors = []
        for f in fields(self):
            choices = f.metadata.get("choices")
            if choices and getattr(self, f.name) not in choices:
                errors.append((f.name, f"must be one of {', '.join(map(str, choices))}"))
        if self.kappa <= 0:
            errors.append(("kappa", "must be positive"))
        if self.alpha <= 0:
            errors.append(("alpha", "must be positive"))
        builders = {"law": self.model, "mesh_h": self.mesh,
                    "dt": lambda: TimeGrid(self.T, self.dt),
                    "objective": self.objective_config, "max_iters": self.optimizer_config}
        if not errors:
            for name, build in builders.items():
                try:
                    build()
                except (ValueError, KeyError) as exc:
                    errors.append((name, str(exc)))
        if not errors:
            try:
                self.problem()
            except ValueError as exc:
                errors.append(("physics", str(exc)))
        if not (0.0 < self.tau_eval < self.T):
            errors.append(("tau", "must lie in (0, T)"))
        if errors:
            raise ConfigError(errors)
        return self


# ---------------------------------------------------------------------------
# text round trip

_FIELDS = {f.name: f for f in fields(RunConfig)}
SECTIONS = ("physics", "discretization", "objective", "optimizer", "output")


def _base_type(f):
    t = f.type if isinstance(f.type, str) else f.type.__name__
    return t.split("|")[0].strip()


def _convert(f, raw: str):
    raw = raw.strip()
    kind = _base_type(f)
    if raw.lower() in ("", "none") and f.default is None:
        return None
    if kind == "float":
        return float(raw)
    if kind == "int":
        return int(raw)
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "tuple":
        return tuple(float(x) for x in raw.replace(",", " ").split())
    return raw


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    return str(value)


def apply_overrides(cfg: RunConfig, pairs) -> RunConfig:
    """Apply ``key=value`` strings (``section.key`` is accepted too)."""
    errors, values = [], {}
    for item in pairs:
        if "=" not in item:
            errors.append((item, "expected key=value"))
            continue
        key, raw = item.split("=", 1)
        key = key.strip().split(".")[-1]
        if key not in _FIELDS:
            errors.append((key, "unknown key"))
            continue
        try:
            values[key] = _convert(_FIELDS[key], raw)
        except ValueError as exc:
            errors.append((key, str(exc)))
    if errors:
        raise ConfigError(errors)
    return dataclasses.replace(cfg, **values)


def parse(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([("file", str(exc))]) from None
    errors, pairs = [], []
    for section in cp.sections():
        if section not in SECTIONS:
            errors.append((section, "unknown section"))
            continue
        for key, raw in cp.items(section):
            f = _FIELDS.get(key)
            if f is None or f.metadata["section"] != section:
                errors.append((f"{section}.{key}", "unknown key"))
            else:
                pairs.append(f"{key}={raw}")
    if errors:
        raise ConfigError(errors)
    return apply_overrides(RunConfig(), pairs)


def serialize(cfg: RunConfig) -> str:
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        for f in fields(cfg):
            if f.metadata["section"] == section:
                lines.append(f"{f.name} = {_format(getattr(cfg, f.name))}")
        lines.append("")
    return "\n".join(lines)


def load(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())
