"""Line-oriented run configuration: one `key = value` pair per line,
`#` comments, unknown keys rejected."""

from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # required
    flow: str = ""
    geometry: str = ""
    degree: int = 0
    bdf_order: int = 0
    tau: float = 0.0
    final_time: float = 0.0
    # flow parameters
    alpha: float = 1.0
    h_shift: float = 10.0
    clamp_lo: float = 1e-3
    clamp_hi: float = 1e3
    # geometry parameters
    radius: float = 1.0
    semi_axis_a: float = 1.0
    semi_axis_b: float = 1.0
    semi_axis_c: float = 1.0
    refinement: int = 2
    mc_resolution: int = 48
    # numerics
    velocity_mode: str = "ritz"
    startup: str = "bootstrap"
    cg_tol: float = 1e-10
    cg_max_iter: int = 20000
    quad_degree: int = 0  # 0 means the 2k+2 default
    step_ratio_limit: float = 1.0
    deterministic: bool = True
    # output
    output_dir: str = "out"
    snapshot_every: int = 0  # 0 means every 10% of the run


_REQUIRED = ("flow", "geometry", "degree", "bdf_order", "tau", "final_time")
_CHOICES = {
    "flow": ("mcf", "imcf", "power_mcf", "power_imcf", "log_mcf"),
    "geometry": ("sphere", "ellipsoid", "dumbbell", "genus5"),
    "velocity_mode": ("ritz", "pointwise"),
    "startup": ("bootstrap", "exact"),
}


def _convert(key: str, text: str, target_type):
    try:
        if target_type is bool:
            low = text.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(text)
        return target_type(text)
    except ValueError:
        raise ConfigError(
            f"key '{key}': cannot parse '{text}' as {target_type.__name__}"
        ) from None


def parse_config(path) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    # dataclass field types arrive as strings under future annotations
    py = {"str": str, "int": int, "float": float, "bool": bool}
    seen = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = (t.strip() for t in line.partition("="))
            if key not in types:
                raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
            if key in seen:
                raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
            target = types[key]
            if isinstance(target, str):
                target = py[target]
            seen[key] = _convert(key, value, target)
    missing = [k for k in _REQUIRED if k not in seen]
    if missing:
        raise ConfigError(f"{path}: missing required keys: {', '.join(missing)}")
    cfg = RunConfig(**seen)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    for key, choices in _CHOICES.items():
        if getattr(cfg, key) not in choices:
            raise ConfigError(
                f"key '{key}' must be one of {', '.join(choices)}"
            )
    if cfg.degree < 1:
        raise ConfigError("degree must be >= 1")
    if not 1 <= cfg.bdf_order <= 5:
        raise ConfigError("bdf_order must be between 1 and 5")
    if cfg.tau <= 0 or cfg.final_time <= 0:
        raise ConfigError("tau and final_time must be positive")
    if cfg.startup == "exact" and cfg.geometry != "sphere":
        raise ConfigError("exact startup needs the sphere geometry")
