"""Engine configuration: one JSON document holding every tunable constant."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .learn import LearnConfig
from .mcf import McfConfig, TemperatureConfig
from .mga import MgaConfig
from .simgen import ScenarioConfig
from .tcp import TcpConfig
from .tracker import TrackerConfig

ABLATIONS = ("full", "no_mcf", "no_mga", "no_tcp")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    mcf: McfConfig = McfConfig()
    mga: MgaConfig = MgaConfig()
    tcp: TcpConfig = TcpConfig()
    tracker: TrackerConfig = TrackerConfig()
    learn: LearnConfig = LearnConfig()
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __post_init__(self):
        if self.scenario.dim != self.mcf.d:
            raise ConfigError(f"scenario.dim ({self.scenario.dim}) must equal mcf.d ({self.mcf.d})")

    def to_dict(self) -> dict:
        mcf = {"d": self.mcf.d, "h": self.mcf.h, "delta": self.mcf.temperature.delta,
               "epsilon": self.mcf.temperature.epsilon, "fusion": self.mcf.fusion}
        out = {"mcf": mcf}
        for name in ("mga", "tcp", "tracker", "learn", "scenario"):
            out[name] = _plain(dataclasses.asdict(getattr(self, name)))
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - {"mcf", "mga", "tcp", "tracker", "learn", "scenario"}
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        try:
            mcf_raw = dict(data.get("mcf", {}))
            _reject_unknown("mcf", mcf_raw, {"d", "h", "delta", "epsilon", "fusion"})
            temp = TemperatureConfig(**{k: mcf_raw.pop(k) for k in ("delta", "epsilon") if k in mcf_raw})
            mcf = McfConfig(temperature=temp, **mcf_raw)
            sections = {"mcf": mcf}
            for name, klass in (("mga", MgaConfig), ("tcp", TcpConfig), ("tracker", TrackerConfig),
                                ("learn", LearnConfig)):
                raw = dict(data.get(name, {}))
                _reject_unknown(name, raw, {f.name for f in dataclasses.fields(klass)})
                sections[name] = klass(**raw)
            raw = dict(data.get("scenario", {}))
            _reject_unknown("scenario", raw, {f.name for f in dataclasses.fields(ScenarioConfig)})
            raw.setdefault("dim", mcf.d)
            sections["scenario"] = ScenarioConfig(**raw)
            return cls(**sections)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON form."""
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def with_seed(self, seed: int) -> "EngineConfig":
        return replace(self, learn=replace(self.learn, seed=seed), scenario=replace(self.scenario, seed=seed))

    def ablated(self, name: str) -> "EngineConfig":
        """Configuration point for one row of the module ablation."""
        if name == "full":
            return self
        if name == "no_mcf":
            return replace(self, mcf=replace(self.mcf, fusion="sum"))
        if name == "no_mga":
            return replace(self, mga=replace(self.mga, lam=0.0))
        if name == "no_tcp":
            return replace(self, tcp=replace(self.tcp, tiers=()))
        raise ConfigError(f"unknown ablation {name!r}; expected one of {ABLATIONS}")


def _reject_unknown(section: str, raw: dict, allowed: set[str]) -> None:
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in section {section!r}: {sorted(unknown)}")


def _plain(obj):
    if isinstance(obj, (tuple, list)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def load_config(path: str | Path | None) -> EngineConfig:
    if path is None:
        return EngineConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: invalid JSON: {exc.msg}") from exc
    return EngineConfig.from_dict(data)
