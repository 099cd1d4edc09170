"""Campaign configuration: TOML file schema and validation."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .energetics import RT_DEFAULT
from .funnel import FunnelConfig
from .placement import NodeSpec


class ConfigError(ValueError):
    pass


@dataclass
class ClusterConfig:
    nodes: list[NodeSpec]
    policy: str = "first_fit"


@dataclass
class StatsConfig:
    rt_kcal_mol: float = RT_DEFAULT
    bootstrap_n: int = 1000
    ci_level: float = 0.95
    lambda_windows: int = 13
    esmacs_replicas: int = 25
    ties_replicas: int = 5
    esmacs_frames: int = 50
    ties_samples: int = 20


@dataclass
class ClassifierConfig:
    window: int = 100
    horizon: int = 1500


@dataclass
class OracleConfig:
    kind: str = "synthetic"
    dock_noise_sd: float = 0.25
    replica_sd: float = 0.5
    frame_sd: float = 1.0
    ties_noise_sd: float = 0.5
    dock_csv: str | None = None
    esmacs_csv: str | None = None
    ties_csv: str | None = None


@dataclass
class CampaignConfig:
    seed: int
    output_dir: str = "out"
    cluster: ClusterConfig = field(
        default_factory=lambda: ClusterConfig([NodeSpec("node00", 8, 2)])
    )
    funnel: FunnelConfig = field(default_factory=FunnelConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    oracles: OracleConfig = field(default_factory=OracleConfig)
    pool_file: str | None = None


def _expand_nodes(raw_nodes) -> list[NodeSpec]:
    nodes: list[NodeSpec] = []
    for group in raw_nodes:
        count = int(group.get("count", 1))
        if count < 1:
            raise ConfigError("node group count must be >= 1")
        for _ in range(count):
            nid = f"node{len(nodes):02d}"
            try:
                nodes.append(NodeSpec(nid, int(group["cores"]), int(group.get("gpus", 0))))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"bad node group {group}: {exc}") from None
    if not nodes:
        raise ConfigError("cluster must define at least one node")
    return nodes


def _take(section: dict, cls, context: str):
    """Build a config dataclass from a TOML table, rejecting unknown keys."""
    known = set(cls.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{context}]: {sorted(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{context}] section: {exc}") from None


def load_config(path: str | Path, seed_override: int | None = None) -> CampaignConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error in {path}: {exc}") from None
    return config_from_dict(raw, seed_override)


def config_from_dict(raw: dict, seed_override: int | None = None) -> CampaignConfig:
    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise ConfigError("seed is mandatory (set 'seed' in the config or pass --seed)")

    cluster_raw = dict(raw.get("cluster", {}))
    nodes = _expand_nodes(cluster_raw.pop("nodes", [{"count": 1, "cores": 8, "gpus": 2}]))
    policy = cluster_raw.pop("policy", "first_fit")
    if cluster_raw:
        raise ConfigError(f"unknown keys in [cluster]: {sorted(cluster_raw)}")

    funnel_raw = dict(raw.get("funnel", {}))
    funnel_raw.setdefault("seed", int(seed))
    funnel_raw["seed"] = int(seed)  # funnel RNG always follows the campaign seed
    funnel = _take(funnel_raw, FunnelConfig, "funnel")

    stats = _take(dict(raw.get("stats", {})), StatsConfig, "stats")
    classifier = _take(dict(raw.get("classifier", {})), ClassifierConfig, "classifier")
    oracles = _take(dict(raw.get("oracles", {})), OracleConfig, "oracles")
    if oracles.kind not in ("synthetic", "file"):
        raise ConfigError(f"unknown oracle kind {oracles.kind!r}")

    known_top = {"seed", "output_dir", "pool_file", "cluster", "funnel", "stats", "classifier", "oracles"}
    unknown = set(raw) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    return CampaignConfig(
        seed=int(seed),
        output_dir=str(raw.get("output_dir", "out")),
        cluster=ClusterConfig(nodes, policy),
        funnel=funnel,
        stats=stats,
        classifier=classifier,
        oracles=oracles,
        pool_file=raw.get("pool_file"),
    )
