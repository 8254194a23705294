"""Server configuration: a flat key-value file plus CLI overrides.

File syntax: one ``key = value`` per line, ``#`` starts a comment. Keys:

    tcp_host, tcp_port        TCP endpoint (default 127.0.0.1:9750)
    ws_host, ws_port          WebSocket bridge (default 127.0.0.1:9751)
    source                    simulator:<scenario> | recording:<path> | tcp:<host>:<port>
    magnification             lateral-offset display magnification, >= 1
    on_track_radius_mm        guidance on-track lateral threshold
    on_track_angle_deg        guidance on-track angle threshold
    handedness_conversion     true/false: flip z between tracker and display frames
    staleness_lost_s          needle silence before guidance reports Lost
    rate_hz, seed             simulator source settings
    noise_sigma_mm            simulator position noise
    noise_angle_deg           simulator orientation noise
    body.<id> = <name>        rigid-body registry entries
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .simulator import DEFAULT_BODY_NAMES

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


@dataclass
class ServerConfig:
    tcp_host: str = "127.0.0.1"
    tcp_port: int = 9750
    ws_host: str = "127.0.0.1"
    ws_port: int = 9751
    source: str = "simulator:insertion"
    magnification: float = 5.0
    on_track_radius_mm: float = 3.0
    on_track_angle_deg: float = 5.0
    handedness_conversion: bool = True
    staleness_lost_s: float = 0.5
    rate_hz: float = 120.0
    seed: int = 0
    noise_sigma_mm: float = 0.0
    noise_angle_deg: float = 0.0
    replay_rate: float = 1.0          # recording source speed multiplier; 0 = unpaced
    sim_pace: float = 1.0             # simulator source speed multiplier; 0 = unpaced
    bodies: dict[int, str] = field(default_factory=lambda: dict(DEFAULT_BODY_NAMES))

    def validate(self) -> "ServerConfig":
        if self.tcp_port == self.ws_port and self.tcp_port != 0:
            raise ConfigError("tcp_port and ws_port must differ")
        if self.magnification < 1.0:
            raise ConfigError("magnification must be >= 1")
        kind = self.source.split(":", 1)[0]
        if kind not in ("simulator", "recording", "tcp"):
            raise ConfigError(f"unknown source kind {kind!r}")
        return self


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def load_config(path: str | Path) -> ServerConfig:
    cfg = ServerConfig()
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        try:
            _apply(cfg, key, raw)
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"{path}:{line_no}: {key}: {e}") from e
    return cfg.validate()


def _apply(cfg: ServerConfig, key: str, raw: str) -> None:
    if key.startswith("body."):
        cfg.bodies[int(key[5:])] = raw
        return
    if key in ("tcp_host", "ws_host", "source"):
        setattr(cfg, key, raw)
        return
    if key in ("tcp_port", "ws_port", "seed"):
        setattr(cfg, key, int(raw))
        return
    if key == "handedness_conversion":
        cfg.handedness_conversion = _parse_bool(key, raw)
        return
    if key in (
        "magnification", "on_track_radius_mm", "on_track_angle_deg",
        "staleness_lost_s", "rate_hz", "noise_sigma_mm", "noise_angle_deg",
        "replay_rate", "sim_pace",
    ):
        setattr(cfg, key, float(raw))
        return
    raise ConfigError(f"unknown config key {key!r}")
