"""Scenario description: dataclasses, validation and the key-value file format.

A config file holds one ``key = value`` pair per line. Keys may be dotted
(``power_model.eta = 2.5``), ``#`` starts a comment, lists are written as
comma separated values (``P = 1.0, 2.0``) and nested lists with brackets
(``geometry.bs_positions = [[0, 0], [100, 0]]``). Physical quantities are in SI
units; keys ending in ``_db`` are given in decibels and converted on load.
"""
from __future__ import annotations

import ast
import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

FEASIBILITY_SETS = ("T_U", "T_I", "T_SN")
OP_MODES = ("ES", "MS")
LAYOUTS = ("reflect", "half", "sectors", "disc")


class ConfigError(ValueError):
    """Raised for unreadable files or configs that break an invariant.

    ``errors`` holds every individual message.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class PowerModel:
    p_c: float = 1.0   # static power per user [W]
    eta: float = 2.5   # amplifier inefficiency


@dataclass(frozen=True)
class IqiConfig:
    """Per-subband I/Q mismatch. A single entry is broadcast to every subband."""

    a_t: tuple = (1.0,)
    psi_t: tuple = (0.0,)
    a_r: tuple = (1.0,)
    phi_r: tuple = (0.0,)

    def tx(self, i: int) -> tuple[float, float]:
        return _pick(self.a_t, i), _pick(self.psi_t, i)

    def rx(self, i: int) -> tuple[float, float]:
        return _pick(self.a_r, i), _pick(self.phi_r, i)

    @property
    def is_ideal(self) -> bool:
        return (all(a == 1.0 for a in self.a_t + self.a_r)
                and all(p == 0.0 for p in self.psi_t + self.phi_r))

    @classmethod
    def ideal(cls) -> "IqiConfig":
        return cls()


def _pick(values: tuple, i: int) -> float:
    return float(values[0] if len(values) == 1 else values[i])


@dataclass(frozen=True)
class FadingConfig:
    rician_kappa: float = 10 ** 0.3   # 3 dB, linear


@dataclass(frozen=True)
class GeometryConfig:
    """Deployment geometry (2-D, metres).

    When explicit positions are absent they are generated: BS ``l`` at
    ``(l * cell_spacing, 0)``, RIS ``n`` at ``bs_ris_distance`` from the BS of
    cell ``n mod L`` facing it, and users drawn per trial on an annulus of
    outer radius ``user_radius`` around their cell's RIS. ``layout`` selects
    where on that annulus users land:

    * ``reflect``: everyone in the reflection half-space (regular RIS covers all)
    * ``half``: odd-indexed users in the transmission half-space
    * ``sectors``: user ``k`` in angular sector ``k mod layout_sectors``
    * ``disc``: uniform over the full annulus
    """

    layout: str = "reflect"
    layout_sectors: int = 4
    cell_spacing: float = 100.0
    bs_ris_distance: float = 20.0
    user_radius: float = 10.0
    user_min_radius: float = 2.0
    pathloss_exponent_los: float = 2.2
    pathloss_exponent_nlos: float = 3.75
    pathloss_ref_db: float = -30.0
    sector_gain: float | None = None   # amplitude; None -> sqrt(N_s) for N_s >= 3
    bs_positions: tuple | None = None
    ris_positions: tuple | None = None
    ris_orientation: tuple | None = None   # normal angle per RIS [rad]
    user_positions: tuple | None = None    # [L][K][2]


@dataclass(frozen=True)
class SystemConfig:
    L: int
    K: int
    N_B: int
    N_U: int
    N_R: int
    N_i: int
    N: int = -1                 # RIS count; -1 -> one per cell
    N_s: int = 1
    P: tuple = (10.0,)          # per-BS budget [W]; one entry broadcasts
    sigma2: float = 1e-10       # noise variance per receive antenna [W]
    feasibility_set: str = "T_I"
    op_mode: str = "ES"
    epsilon_ccp: float = 0.05
    power_model: PowerModel = field(default_factory=PowerModel)
    iqi: IqiConfig = field(default_factory=IqiConfig)
    fading: FadingConfig = field(default_factory=FadingConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)

    def __post_init__(self):
        if self.N == -1:
            object.__setattr__(self, "N", self.L)
        if isinstance(self.P, (int, float)):
            object.__setattr__(self, "P", (float(self.P),))
        if len(self.P) == 1 and self.L > 1:
            object.__setattr__(self, "P", tuple(self.P) * self.L)

    @property
    def budgets(self) -> np.ndarray:
        return np.asarray(self.P, dtype=float)


_MANDATORY = ("L", "K", "N_B", "N_U", "N_R", "N_i")
_SECTIONS = {"power_model": PowerModel, "iqi": IqiConfig,
             "fading": FadingConfig, "geometry": GeometryConfig}


def violations(config: SystemConfig) -> list[str]:
    """Every broken invariant of ``config`` as a readable message."""
    errs = []
    for name in ("L", "K", "N_B", "N_U", "N_R", "N_i", "N_s"):
        v = getattr(config, name)
        if not isinstance(v, (int, np.integer)) or v < 1:
            errs.append(f"{name} must be an integer >= 1 (got {v!r})")
    if not isinstance(config.N, (int, np.integer)) or config.N < 0:
        errs.append(f"N must be an integer >= 0 (got {config.N!r})")
    if config.feasibility_set not in FEASIBILITY_SETS:
        errs.append(f"feasibility_set must be one of {FEASIBILITY_SETS}")
    elif config.feasibility_set == "T_SN" and config.N_s != 2:
        errs.append("T_SN requires N_s=2")
    if config.op_mode not in OP_MODES:
        errs.append(f"op_mode must be one of {OP_MODES}")
    elif config.op_mode == "MS" and config.N_R < config.N_s:
        errs.append("MS mode requires N_R >= N_s")
    if len(config.P) != config.L:
        errs.append(f"P needs 1 or L={config.L} entries (got {len(config.P)})")
    if any(not p > 0 for p in config.P):
        errs.append("P_l > 0 required for every BS")
    if not config.sigma2 > 0:
        errs.append("sigma2 > 0 required")
    if not 0 < config.epsilon_ccp < 1:
        errs.append("epsilon_ccp must satisfy 0 < epsilon_ccp < 1")

    pm = config.power_model
    if not pm.p_c >= 0:
        errs.append("power_model.p_c >= 0 required")
    if not pm.eta >= 1:
        errs.append("power_model.eta >= 1 required")

    iqi = config.iqi
    for name in ("a_t", "psi_t", "a_r", "phi_r"):
        vals = getattr(iqi, name)
        if len(vals) not in (1, config.N_i):
            errs.append(f"iqi.{name} needs 1 or N_i={config.N_i} entries")
        if name.startswith("a_"):
            if any(not 0 < a <= 1 for a in vals):
                errs.append(f"iqi.{name} must lie in (0, 1]")
        elif any(not abs(p) < np.pi / 2 for p in vals):
            errs.append(f"iqi.{name} must satisfy |phase| < pi/2")

    if not config.fading.rician_kappa >= 0:
        errs.append("fading.rician_kappa >= 0 required")

    geo = config.geometry
    if geo.layout not in LAYOUTS:
        errs.append(f"geometry.layout must be one of {LAYOUTS}")
    if geo.layout_sectors < 1:
        errs.append("geometry.layout_sectors >= 1 required")
    if not 0 < geo.user_min_radius <= geo.user_radius:
        errs.append("geometry requires 0 < user_min_radius <= user_radius")
    if geo.sector_gain is not None and not geo.sector_gain > 0:
        errs.append("geometry.sector_gain > 0 required")
    for name, shape in (("bs_positions", (config.L, 2)),
                        ("ris_positions", (config.N, 2)),
                        ("ris_orientation", (config.N,)),
                        ("user_positions", (config.L, config.K, 2))):
        v = getattr(geo, name)
        if v is not None and np.shape(v) != shape:
            errs.append(f"geometry.{name} must have shape {shape}")
    return errs


def validate(config: SystemConfig) -> SystemConfig:
    """Return ``config`` unchanged if valid, else raise with all violations."""
    errs = violations(config)
    if errs:
        raise ConfigError(errs)
    return config


# --------------------------------------------------------------------------
# file format

def _parse_value(key: str, text: str) -> Any:
    text = text.strip()
    if not text:
        raise ConfigError(f"{key}: empty value")
    if text[0] == "[" or "," in text:
        src = text if text[0] == "[" else f"[{text}]"
        try:
            return _tuplify(ast.literal_eval(src))
        except (ValueError, SyntaxError):
            raise ConfigError(f"{key}: cannot parse list {text!r}") from None
    if text.lower() in ("none", "null"):
        return None
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text.strip("'\"")


def _tuplify(v):
    if isinstance(v, (list, tuple)):
        return tuple(_tuplify(x) for x in v)
    return v


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse the key-value format into a flat ``{dotted_key: value}`` dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        out[key] = _parse_value(key, value)
    return out


def _db_to_lin(v):
    if isinstance(v, tuple):
        return tuple(_db_to_lin(x) for x in v)
    return 10.0 ** (float(v) / 10.0)


def _coerce(key: str, value: Any, target) -> Any:
    """Coerce a parsed value to the declared field type, naming ``key`` on failure."""
    t = str(target)
    try:
        if t == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if t == "float":
            if isinstance(value, (bool, str, tuple)):
                raise TypeError
            return float(value)
        if t == "float | None":
            return None if value is None else _coerce(key, value, "float")
        if t == "str":
            if not isinstance(value, str):
                raise TypeError
            return value
        if t == "tuple":
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return (float(value),)
            if isinstance(value, tuple):
                return tuple(float(x) if not isinstance(x, tuple) else x for x in value)
            raise TypeError
        if t == "tuple | None":
            if value is None:
                return None
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return (float(value),)
            if not isinstance(value, tuple):
                raise TypeError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {t}, got {value!r}") from None
    raise ConfigError(f"{key}: unsupported field type {t}")


def _resolve_key(key: str) -> tuple[str | None, str, bool]:
    """Map a dotted key to (section, field, is_db). ``is_db`` asks for dB conversion."""
    parts = key.split(".")
    if len(parts) == 1:
        sec, name = None, parts[0]
        known = {f.name for f in fields(SystemConfig)} - set(_SECTIONS)
    elif len(parts) == 2 and parts[0] in _SECTIONS:
        sec, name = parts
        known = {f.name for f in fields(_SECTIONS[sec])}
    else:
        raise ConfigError(f"{key}: unknown key")
    if name in known:
        return sec, name, False
    if name.endswith("_db") and name[:-3] in known:
        return sec, name[:-3], True
    raise ConfigError(f"{key}: unknown key")


def config_from_dict(flat: dict[str, Any]) -> SystemConfig:
    """Build a config from flat dotted keys, applying defaults and dB conversions."""
    top: dict[str, Any] = {}
    sections: dict[str, dict[str, Any]] = {name: {} for name in _SECTIONS}
    errors = []
    for key, value in flat.items():
        try:
            sec, name, is_db = _resolve_key(key)
            cls = SystemConfig if sec is None else _SECTIONS[sec]
            ftype = {f.name: f.type for f in fields(cls)}[name]
            if is_db:
                if isinstance(value, str) or value is None:
                    raise ConfigError(f"{key}: expected a number in dB, got {value!r}")
                value = _db_to_lin(value)
            (top if sec is None else sections[sec])[name] = _coerce(key, value, ftype)
        except ConfigError as exc:
            errors.extend(exc.errors)
    errors.extend(f"{k}: missing mandatory key" for k in _MANDATORY if k not in top)
    if errors:
        raise ConfigError(errors)
    for sec, cls in _SECTIONS.items():
        top[sec] = cls(**sections[sec])
    return SystemConfig(**top)


def load_config(path) -> SystemConfig:
    """Read, parse and validate a config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return validate(config_from_dict(parse_config_text(text)))


def _format(value) -> str:
    if isinstance(value, tuple):
        return "[" + ", ".join(_format(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_dict(config: SystemConfig) -> dict[str, Any]:
    flat = {}
    for f in fields(config):
        v = getattr(config, f.name)
        if dataclasses.is_dataclass(v):
            for g in fields(v):
                flat[f"{f.name}.{g.name}"] = getattr(v, g.name)
        else:
            flat[f.name] = v
    return flat


def save_config(config: SystemConfig, path) -> None:
    lines = [f"{k} = {_format(v)}" for k, v in config_to_dict(config).items()]
    Path(path).write_text("\n".join(lines) + "\n")


def with_overrides(config: SystemConfig, **flat) -> SystemConfig:
    """Copy of ``config`` with dotted-key overrides applied and re-validated.

    Keys follow the file format, so ``P_db``/``sigma2_db`` are accepted. A
    broadcast budget and a one-RIS-per-cell default follow a change of ``L``.
    """
    merged = config_to_dict(config)
    for key in flat:
        sec, name, _ = _resolve_key(key)
        merged.pop(name if sec is None else f"{sec}.{name}", None)
    if "L" in flat:
        if not ({"P", "P_db"} & flat.keys()):
            merged["P"] = (config.P[0],)
        if "N" not in flat and config.N == config.L:
            merged["N"] = -1
    merged.update(flat)
    return validate(config_from_dict(merged))


def set_budget_db(config: SystemConfig, p_db: float) -> SystemConfig:
    return replace(config, P=(10 ** (p_db / 10),) * config.L)
