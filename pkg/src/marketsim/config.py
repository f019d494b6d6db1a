"""Episode configuration: declarative TOML files, validation, hashing.

One config file describes a whole episode family: market shape, catalog
and tribe tables, matching parameters, policy bindings, and the embedder
backend. The canonical JSON form of a config is hashed into every log
header so replays can prove they were computed from the same setup.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from marketsim.domain import ItemSpec
from marketsim.errors import ConfigError
from marketsim.persona import TribeSpec, check_tribe_weights, default_tribes

SCHEMA_VERSION = 1

SUPPLY_SCHEDULES = ("even", "front_loaded", "all_at_step0")
EMBEDDER_KINDS = ("keyword", "remote")
MMS_BASES = ("considered", "purchasers")

EMBED_ENDPOINT_ENV = "MARKETSIM_EMBED_ENDPOINT"


@dataclass
class EpisodeConfig:
    agents: int = 20
    steps: int = 6
    bidding_rounds: int = 2
    buyers_per_step: int = 200
    alpha: float = 1.5
    supply_demand_ratio: float = 0.95
    holding_rate: float = 0.0
    rho_default: float = 0.6
    tau: float = 1.0
    k_max: int = 20
    seed: int = 0
    supply_schedule: str = "even"
    cascade: bool = True
    mms_basis: str = "considered"
    history_window: int = 0  # 0 = full history
    embedder_kind: str = "keyword"
    embedder_endpoint: str = ""
    embedder_timeout: float = 30.0
    catalog: list[ItemSpec] = field(default_factory=list)
    tribes: list[TribeSpec] = field(default_factory=list)
    default_policy: str | dict[str, Any] = "greedy"
    agent_policies: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.catalog:
            self.catalog = default_catalog()
        if not self.tribes:
            self.tribes = default_tribes()

    def agent_ids(self) -> list[str]:
        width = max(2, len(str(max(self.agents - 1, 0))))
        return [f"A{i:0{width}d}" for i in range(self.agents)]

    def validate(self) -> None:
        checks = [
            (self.agents >= 1, f"agents must be >= 1, got {self.agents}"),
            (self.steps >= 1, f"steps must be >= 1, got {self.steps}"),
            (self.bidding_rounds >= 1, f"bidding_rounds must be >= 1, got {self.bidding_rounds}"),
            (self.buyers_per_step >= 0, f"buyers_per_step must be >= 0, got {self.buyers_per_step}"),
            (self.alpha >= 0, f"alpha must be >= 0, got {self.alpha}"),
            (self.supply_demand_ratio > 0, f"supply_demand_ratio must be > 0, got {self.supply_demand_ratio}"),
            (self.holding_rate >= 0, f"holding_rate must be >= 0, got {self.holding_rate}"),
            (0 <= self.rho_default <= 1, f"rho_default must be in [0, 1], got {self.rho_default}"),
            (self.tau > 0, f"tau must be > 0, got {self.tau}"),
            (self.k_max >= 1, f"k_max must be >= 1, got {self.k_max}"),
            (self.history_window >= 0, f"history_window must be >= 0, got {self.history_window}"),
            (self.supply_schedule in SUPPLY_SCHEDULES,
             f"supply.schedule must be one of {SUPPLY_SCHEDULES}, got {self.supply_schedule!r}"),
            (self.embedder_kind in EMBEDDER_KINDS,
             f"embedder.kind must be one of {EMBEDDER_KINDS}, got {self.embedder_kind!r}"),
            (self.mms_basis in MMS_BASES,
             f"purchase.mms_basis must be one of {MMS_BASES}, got {self.mms_basis!r}"),
            (bool(self.catalog), "catalog must not be empty"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        seen = set()
        for item in self.catalog:
            if item.item_id in seen:
                raise ConfigError(f"duplicate catalog item_id {item.item_id!r}")
            seen.add(item.item_id)
        check_tribe_weights(self.tribes)
        total_demand = round(self.supply_demand_ratio * sum(i.quantity for i in self.catalog))
        if total_demand > 0 and self.buyers_per_step == 0:
            raise ConfigError("buyers_per_step is 0 but demand target is positive")
        known = set(self.agent_ids())
        for agent_id in self.agent_policies:
            if agent_id not in known:
                raise ConfigError(f"policy binding for unknown agent {agent_id!r}")

    def embed_endpoint(self) -> str:
        return os.environ.get(EMBED_ENDPOINT_ENV, "") or self.embedder_endpoint

    def policy_binding(self, agent_id: str) -> str | dict[str, Any]:
        return self.agent_policies.get(agent_id, self.default_policy)

    def to_json(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "agents": self.agents,
            "steps": self.steps,
            "bidding_rounds": self.bidding_rounds,
            "buyers_per_step": self.buyers_per_step,
            "alpha": self.alpha,
            "supply_demand_ratio": self.supply_demand_ratio,
            "holding_rate": self.holding_rate,
            "rho_default": self.rho_default,
            "tau": self.tau,
            "k_max": self.k_max,
            "seed": self.seed,
            "supply_schedule": self.supply_schedule,
            "cascade": self.cascade,
            "mms_basis": self.mms_basis,
            "history_window": self.history_window,
            "embedder_kind": self.embedder_kind,
            "embedder_endpoint": self.embedder_endpoint,
            "embedder_timeout": self.embedder_timeout,
            "catalog": [item.to_json() for item in self.catalog],
            "tribes": [tribe.to_json() for tribe in self.tribes],
            "default_policy": self.default_policy,
            "agent_policies": self.agent_policies,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "EpisodeConfig":
        return cls(
            agents=data["agents"],
            steps=data["steps"],
            bidding_rounds=data["bidding_rounds"],
            buyers_per_step=data["buyers_per_step"],
            alpha=data["alpha"],
            supply_demand_ratio=data["supply_demand_ratio"],
            holding_rate=data["holding_rate"],
            rho_default=data["rho_default"],
            tau=data["tau"],
            k_max=data["k_max"],
            seed=data["seed"],
            supply_schedule=data["supply_schedule"],
            cascade=data["cascade"],
            mms_basis=data["mms_basis"],
            history_window=data["history_window"],
            embedder_kind=data["embedder_kind"],
            embedder_endpoint=data.get("embedder_endpoint", ""),
            embedder_timeout=data.get("embedder_timeout", 30.0),
            catalog=[ItemSpec.from_json(i) for i in data["catalog"]],
            tribes=[TribeSpec.from_json(t) for t in data["tribes"]],
            default_policy=data.get("default_policy", "greedy"),
            agent_policies=dict(data.get("agent_policies", {})),
        )

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def default_catalog() -> list[ItemSpec]:
    """Eight-item tiered catalog totalling 1,000 units / 300,000 value."""
    rows = [
        ("item1", "Commodity", 200, 50),
        ("item2", "Commodity", 200, 50),
        ("item3", "Standard", 133, 150),
        ("item4", "Standard", 133, 150),
        ("item5", "Standard", 134, 150),
        ("item6", "Luxury", 75, 800),
        ("item7", "Luxury", 75, 800),
        ("item8", "Veblen", 50, 2000),
    ]
    return [
        ItemSpec(item_id=i, category=c, quantity=q, base_price=p) for i, c, q, p in rows
    ]


def default_config(seed: int = 0) -> EpisodeConfig:
    return EpisodeConfig(seed=seed)


def _tribe_from_table(table: Mapping[str, Any]) -> TribeSpec:
    try:
        return TribeSpec(
            name=table["name"],
            weight=float(table["weight"]),
            lambda_=float(table["lambda"]),
            keywords=tuple(table.get("keywords", ())),
            persona_template=table.get("persona_template", ""),
            rho=float(table["rho"]) if "rho" in table else None,
        )
    except KeyError as exc:
        raise ConfigError(f"tribe table missing key {exc}") from None


def _item_from_table(table: Mapping[str, Any]) -> ItemSpec:
    try:
        return ItemSpec(
            item_id=table["item_id"],
            base_price=int(table["base_price"]),
            quantity=int(table["quantity"]),
            category=table.get("category", ""),
        )
    except KeyError as exc:
        raise ConfigError(f"catalog table missing key {exc}") from None


def config_from_tables(data: Mapping[str, Any]) -> EpisodeConfig:
    """Build an EpisodeConfig from parsed TOML tables."""
    episode = data.get("episode", {})
    supply = data.get("supply", {})
    purchase = data.get("purchase", {})
    embedder = data.get("embedder", {})
    policies = data.get("policies", {})
    config = EpisodeConfig(
        agents=int(episode.get("agents", 20)),
        steps=int(episode.get("steps", 6)),
        bidding_rounds=int(episode.get("bidding_rounds", 2)),
        buyers_per_step=int(episode.get("buyers_per_step", 200)),
        alpha=float(episode.get("alpha", 1.5)),
        supply_demand_ratio=float(episode.get("supply_demand_ratio", 0.95)),
        holding_rate=float(episode.get("holding_rate", 0.0)),
        rho_default=float(episode.get("rho_default", 0.6)),
        tau=float(episode.get("tau", 1.0)),
        k_max=int(episode.get("k_max", 20)),
        seed=int(episode.get("seed", 0)),
        history_window=int(episode.get("history_window", 0)),
        supply_schedule=supply.get("schedule", "even"),
        cascade=bool(purchase.get("cascade", True)),
        mms_basis=purchase.get("mms_basis", "considered"),
        embedder_kind=embedder.get("kind", "keyword"),
        embedder_endpoint=embedder.get("endpoint", ""),
        embedder_timeout=float(embedder.get("timeout", 30.0)),
        catalog=[_item_from_table(t) for t in data.get("catalog", [])],
        tribes=[_tribe_from_table(t) for t in data.get("tribes", [])],
        default_policy=policies.get("default", "greedy"),
        agent_policies=dict(policies.get("agents", {})),
    )
    return config


def load_config(path: str | Path) -> EpisodeConfig:
    """Load and validate a TOML config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    config = config_from_tables(data)
    config.validate()
    return config


def default_config_path() -> Path:
    """Filesystem path of the shipped default config."""
    return Path(str(resources.files("marketsim").joinpath("data/default.toml")))
