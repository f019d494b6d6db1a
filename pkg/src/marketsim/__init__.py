"""Deterministic multi-agent supply-chain market simulator.

Retailer agents compete in two stages each step: a budget-constrained,
multi-unit first-price procurement auction upstream, and downstream retail
where posted prices and marketing slogans determine which buyers even see
them. Every episode is seed-deterministic and logged as replayable JSONL.
"""

from marketsim.domain import (
    AgentState,
    Allocation,
    Bid,
    BuyerPersona,
    EmbeddingVector,
    ItemSpec,
    PurchaseEvent,
    RetailPosting,
    StepRecord,
    StockoutAttempt,
    catalog_total_value,
)
from marketsim.engine import EpisodeConfig, TrajectoryLog, initial_funds, rng_streams, run_episode

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "Allocation",
    "Bid",
    "BuyerPersona",
    "EmbeddingVector",
    "EpisodeConfig",
    "ItemSpec",
    "PurchaseEvent",
    "RetailPosting",
    "StepRecord",
    "StockoutAttempt",
    "TrajectoryLog",
    "catalog_total_value",
    "initial_funds",
    "rng_streams",
    "run_episode",
]
