from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from rendezvous.geometry import DEFAULT_RESOLUTION, EPS_GEO


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Params:
    """Tunable thresholds shared by the pipeline (seconds, meters, m/s)."""

    theta_s: float = 1800.0
    ms: float = 30.0
    slices: int = 16
    tau: float = 0.25
    to_s: float = 1800.0
    trace_snap_m: float = 25.0
    anchor_snap_m: float = 50.0
    default_speed: float = 15.0
    resolution: int = DEFAULT_RESOLUTION
    eps_geo: float = EPS_GEO

    def __post_init__(self):
        if self.slices < 2:
            raise ConfigError(f"slice count K must be >= 2, got {self.slices}")
        for name in ("theta_s", "ms", "trace_snap_m", "anchor_snap_m", "default_speed"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.tau < 0 or self.to_s < 0:
            raise ConfigError("tau and to_s must be non-negative")
        if self.resolution < 8:
            raise ConfigError("polygon resolution must be >= 8")

    def with_(self, **changes) -> "Params":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Params":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})
