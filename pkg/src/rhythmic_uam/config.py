"""Intersection configuration and its flat key/value file format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Raised for invalid configuration values or unparsable config files."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


REQUIRED_KEYS = ("l_c", "n_c", "delta_t", "l_g", "l_v", "d_f_min", "rho_ent")


@dataclass(frozen=True)
class IntersectionConfig:
    """Physical and design scalars of one aerial intersection (SI units).

    ``l_e`` is derived from the cube length and lane count; pass it only to
    have it cross-checked. Kinematic caps left as ``None`` fall back to
    defaults scaled by ``l_e`` and ``delta_t`` (see :meth:`deriv_caps`).
    """

    l_c: float
    n_c: int
    delta_t: float
    l_g: float
    l_v: float
    d_f_min: float
    rho_ent: float
    v_max: float = 25.0
    drag_coeff: float = 0.05
    mass: float = 2.0
    K_s: int = 4
    K_c: int = 4
    l_e_min: float = 1.0
    x_acc_max: float | None = None
    x_jerk_max: float | None = None
    theta_acc_max: float | None = None
    theta_jerk_max: float | None = None
    l_e: float | None = field(default=None, compare=False)

    def __post_init__(self):
        n_c = self.n_c
        if isinstance(n_c, float) and n_c.is_integer():
            object.__setattr__(self, "n_c", int(n_c))
        for name in ("K_s", "K_c"):
            v = getattr(self, name)
            if isinstance(v, float) and v.is_integer():
                object.__setattr__(self, name, int(v))
        derived = self.l_c / (self.n_c + 1)
        if self.l_e is not None and not math.isclose(self.l_e, derived, rel_tol=1e-12):
            raise ConfigError(
                f"l_e={self.l_e} inconsistent with l_c/(n_c+1)={derived}", key="l_e")
        object.__setattr__(self, "l_e", derived)
        self.validate()

    def validate(self):
        if not isinstance(self.n_c, int) or self.n_c < 2 or self.n_c % 2:
            raise ConfigError(f"n_c must be an even integer >= 2, got {self.n_c}", key="n_c")
        for name in ("l_c", "delta_t", "rho_ent", "v_max", "l_e_min"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive", key=name)
        for name in ("drag_coeff", "mass", "l_v", "d_f_min"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative", key=name)
        if self.l_e < self.l_e_min:
            raise ConfigError(
                f"edge length {self.l_e:g} below minimum curvature radius {self.l_e_min:g}",
                key="l_e_min")
        n_max = math.floor(self.l_c / self.l_e_min + 1e-12) - 1
        if self.n_c > n_max:
            raise ConfigError(f"n_c={self.n_c} exceeds maximum lane count {n_max}", key="n_c")
        if not 0 <= self.l_g < self.l_e:
            raise ConfigError("guard band must satisfy 0 <= l_g < l_e", key="l_g")
        if not 0 < self.l_v + self.d_f_min <= self.l_e - self.l_g:
            raise ConfigError("need 0 < l_v + d_f_min <= l_e - l_g", key="d_f_min")
        if self.K_s < 3 or self.K_c < 3:
            raise ConfigError("polynomial degrees K_s, K_c must be >= 3", key="K_s")
        for name in ("x_acc_max", "x_jerk_max", "theta_acc_max", "theta_jerk_max"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive", key=name)

    @property
    def v_u(self) -> float:
        """Base speed: one edge per node beat."""
        return self.l_e / self.delta_t

    def deriv_caps(self) -> dict[str, dict[int, float]]:
        """Per-order caps for j = 2, 3 on straight (m/s^j) and curved (rad/s^j) motion."""
        dt = self.delta_t
        return {
            "straight": {
                2: self.x_acc_max if self.x_acc_max is not None else 0.5 * self.l_e / dt**2,
                3: self.x_jerk_max if self.x_jerk_max is not None else 3.0 * self.l_e / dt**3,
            },
            "curved": {
                2: self.theta_acc_max if self.theta_acc_max is not None else 4.0 / dt**2,
                3: self.theta_jerk_max if self.theta_jerk_max is not None else 12.0 / dt**3,
            },
        }

    def replace(self, **changes) -> IntersectionConfig:
        changes.setdefault("l_e", None)
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def reference_config(**overrides) -> IntersectionConfig:
    """The evaluation setting: six lanes, 10 m edges, one-second beats."""
    base = dict(l_c=70.0, n_c=6, delta_t=1.0, l_g=1.0, l_v=0.5, d_f_min=1.5, rho_ent=0.3)
    base.update(overrides)
    return IntersectionConfig(**base)


_INT_KEYS = {"n_c", "K_s", "K_c"}


def parse_config(text: str) -> IntersectionConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) into a config."""
    known = {f.name for f in fields(IntersectionConfig)}
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, val = line.partition("=")
        elif ":" in line:
            key, _, val = line.partition(":")
        else:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, val = key.strip(), val.strip()
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", line=lineno, key=key)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", line=lineno, key=key)
        try:
            num = float(val)
        except ValueError:
            raise ConfigError(f"value for {key!r} is not a number: {val!r}",
                              line=lineno, key=key) from None
        if key in _INT_KEYS:
            if not num.is_integer():
                raise ConfigError(f"{key} must be an integer", line=lineno, key=key)
            num = int(num)
        values[key] = num
        lines[key] = lineno
    for key in REQUIRED_KEYS:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}", key=key)
    try:
        return IntersectionConfig(**values)
    except ConfigError as exc:
        raise ConfigError(str(exc), line=lines.get(exc.key), key=exc.key) from None


def load_config(path: str | Path) -> IntersectionConfig:
    return parse_config(Path(path).read_text())


def format_config(config: IntersectionConfig) -> str:
    out = []
    for name, value in config.to_dict().items():
        if value is None or name == "l_e":
            continue
        out.append(f"{name} = {value!r}" if isinstance(value, int) else f"{name} = {value:.17g}")
    return "\n".join(out) + "\n"
