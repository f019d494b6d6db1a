"""Per-agent performance metrics and market-level indices.

Everything here is a pure function of trajectory records, so the same code
path serves both the engine's inline report and offline recomputation from
JSONL logs; the two must agree bit-for-bit. Population (not sample)
standard deviations are used throughout: the series are short.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from marketsim.attention import similarity
from marketsim.domain import StepRecord
from marketsim.persona import Embedder, TribeSpec

EPSILON = 1e-9

METRIC_COLUMNS = [
    "npm",
    "pi",
    "rar",
    "iei",
    "stockout_rate",
    "bid_efficiency",
    "osi",
    "fill_rate",
    "mms",
]


@dataclass(frozen=True)
class AgentMetrics:
    agent_id: str
    npm: float
    pi: float
    rar: float
    iei: float
    stockout_rate: float
    bid_efficiency: float
    osi: float
    fill_rate: float
    mms: float
    mms_interactions: int  # 0 flags an agent no buyer ever considered

    def to_json(self) -> dict[str, Any]:
        return {
            "agent_id": self.agent_id,
            "npm": self.npm,
            "pi": self.pi,
            "rar": self.rar,
            "iei": self.iei,
            "stockout_rate": self.stockout_rate,
            "bid_efficiency": self.bid_efficiency,
            "osi": self.osi,
            "fill_rate": self.fill_rate,
            "mms": self.mms,
            "mms_interactions": self.mms_interactions,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "AgentMetrics":
        return cls(**{k: data[k] for k in ("agent_id", *METRIC_COLUMNS, "mms_interactions")})


@dataclass(frozen=True)
class StepIndices:
    """Market-level indices for one step; concentration is null until the
    market has seen any revenue."""

    step: int
    gini: float
    theil: float
    cv: float
    hhi: float | None
    cr4: float | None
    active_ratio: float

    def to_json(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "gini": self.gini,
            "theil": self.theil,
            "cv": self.cv,
            "hhi": self.hhi,
            "cr4": self.cr4,
            "active_ratio": self.active_ratio,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "StepIndices":
        return cls(
            step=data["step"],
            gini=data["gini"],
            theil=data["theil"],
            cv=data["cv"],
            hhi=data["hhi"],
            cr4=data["cr4"],
            active_ratio=data["active_ratio"],
        )


# ---------------------------------------------------------------------------
# metric primitives


def step_profit(revenue: int, cogs: Fraction, holding_cost: int) -> Fraction:
    """Per-step profit: revenue minus cost of goods sold minus holding."""
    return Fraction(revenue) - cogs - Fraction(holding_cost)


def npm(profits: Sequence[float], revenues: Sequence[float], eps: float = EPSILON) -> float:
    """Net profit margin: total profit over total revenue."""
    return float(sum(profits)) / (float(sum(revenues)) + eps)


def rar(profits: Sequence[float], eps: float = EPSILON) -> float:
    """Risk-adjusted return: mean per-step profit over its volatility."""
    if len(profits) == 0:
        return 0.0
    arr = np.asarray(profits, dtype=float)
    return float(arr.mean() / (arr.std() + eps))


def iei(units_sold_total: int, avg_inventory_units: float, eps: float = EPSILON) -> float:
    """Inventory efficiency: sold over sold-plus-average-inventory, in [0, 1]."""
    return units_sold_total / (units_sold_total + avg_inventory_units + eps)


def stockout_rate(units_stockout: int, units_directed: int, eps: float = EPSILON) -> float:
    return units_stockout / (units_directed + eps)


def fill_rate(units_sold: int, units_directed: int, eps: float = EPSILON) -> float:
    return units_sold / (units_directed + eps)


def bid_efficiency(
    qty_won: int, qty_bid: int, base_value_won: int, spend_won: int, eps: float = EPSILON
) -> float:
    """Procurement success times cost efficiency relative to reserve value."""
    return (qty_won / (qty_bid + eps)) * (base_value_won / (spend_won + eps))


def _cv(values: np.ndarray, eps: float) -> float:
    return float(values.std() / (values.mean() + eps))


def osi(orders: Sequence[float], sales: Sequence[float], eps: float = EPSILON) -> float:
    """Order stability: 1 / (1 + |CV_orders - CV_sales|), in (0, 1].

    With fewer than two points variability is undefined and the index
    defaults to 1.0.
    """
    if len(orders) < 2 or len(sales) < 2:
        return 1.0
    cv_orders = _cv(np.asarray(orders, dtype=float), eps)
    cv_sales = _cv(np.asarray(sales, dtype=float), eps)
    return 1.0 / (1.0 + abs(cv_orders - cv_sales))


def mms(similarities: Sequence[float]) -> tuple[float, int]:
    """Mean slogan-persona similarity over interacting buyers.

    Returns (score, interaction_count); zero interactions score 0.0 and are
    flagged by the count.
    """
    if not similarities:
        return 0.0, 0
    return float(sum(similarities)) / len(similarities), len(similarities)


# ---------------------------------------------------------------------------
# market indices


def gini(values: Sequence[float]) -> float:
    """Gini index via the sorted-rank formula; 0 for equal (or empty) wealth."""
    n = len(values)
    if n == 0:
        return 0.0
    total = float(sum(values))
    if total <= 0:
        return 0.0
    ordered = sorted(float(v) for v in values)
    weighted = sum((2 * i - n - 1) * x for i, x in enumerate(ordered, start=1))
    return weighted / (n * total)


def theil(values: Sequence[float]) -> float:
    """Theil T over the positive entries only (log is undefined elsewhere)."""
    positives = [float(v) for v in values if v > 0]
    if not positives:
        return 0.0
    mu = sum(positives) / len(positives)
    return sum((x / mu) * math.log(x / mu) for x in positives) / len(positives)


def coefficient_of_variation(values: Sequence[float], eps: float = EPSILON) -> float:
    if len(values) == 0:
        return 0.0
    return _cv(np.asarray(values, dtype=float), eps)


def concentration(revenues: Sequence[float], top_n: int = 4) -> tuple[float | None, float | None]:
    """(HHI, CR_top_n) over revenue shares; (None, None) when total is zero."""
    total = float(sum(revenues))
    if total <= 0:
        return None, None
    shares = sorted((float(r) / total for r in revenues), reverse=True)
    hhi = sum(s * s for s in shares)
    cr = sum(shares[:top_n])
    return hhi, cr


# ---------------------------------------------------------------------------
# trajectory aggregation


class _AgentSeries:
    def __init__(self) -> None:
        self.revenue: list[int] = []
        self.profit: list[float] = []
        self.units_sold: list[int] = []
        self.units_won: list[int] = []
        self.inventory_units: list[int] = []
        self.units_directed = 0
        self.units_stockout = 0
        self.qty_bid = 0
        self.qty_won = 0
        self.base_value_won = 0
        self.spend_won = 0
        self.similarities: list[float] = []


def per_step_financials(
    record: StepRecord,
) -> dict[str, tuple[int, Fraction, int]]:
    """Per agent: (revenue, cogs, holding_cost) for one step.

    COGS prices units sold at the seller's weighted unit cost at sale time,
    which equals the end-of-step cost basis because sales never move it.
    """
    result: dict[str, tuple[int, Fraction, int]] = {}
    for agent_id, state in record.snapshot.items():
        revenue = 0
        cogs = Fraction(0)
        for event in record.purchases:
            if event.seller_id != agent_id:
                continue
            revenue += event.qty * event.unit_price
            cogs += event.qty * state.unit_cost[event.item_id]
        result[agent_id] = (revenue, cogs, record.holding_costs.get(agent_id, 0))
    return result


def _collect(
    records: Sequence[StepRecord],
    tribes: Sequence[TribeSpec],
    embedder: Embedder | None,
    mms_basis: str,
) -> dict[str, _AgentSeries]:
    agents = {agent_id: _AgentSeries() for agent_id in records[0].snapshot}
    persona_vectors = (
        {tribe.name: embedder.embed(tribe.persona_text()) for tribe in tribes}
        if embedder is not None
        else {}
    )
    for record in records:
        base_prices = {item.item_id: item.base_price for item in record.offers}
        financials = per_step_financials(record)
        sold: dict[str, int] = {a: 0 for a in agents}
        for event in record.purchases:
            series = agents[event.seller_id]
            series.units_directed += event.qty
            sold[event.seller_id] += event.qty
        for attempt in record.stockouts:
            series = agents[attempt.seller_id]
            series.units_directed += attempt.units_unfilled
            series.units_stockout += attempt.units_unfilled
        if record.rounds:
            for agent_id, bid in record.rounds[-1].bids.items():
                agents[agent_id].qty_bid += bid.total_qty()
        for (agent_id, item_id), award in record.allocation.awards.items():
            series = agents[agent_id]
            series.qty_won += award.qty_won
            series.base_value_won += award.qty_won * base_prices[item_id]
            series.spend_won += award.qty_won * award.unit_price_paid
        won_per_agent = {a: 0 for a in agents}
        for (agent_id, _), award in record.allocation.awards.items():
            won_per_agent[agent_id] += award.qty_won
        if embedder is not None:
            slogan_vectors = {
                agent_id: embedder.embed(posting.slogan)
                for agent_id, posting in record.postings.items()
            }
            purchased_from: dict[str, set[str]] = {}
            if mms_basis == "purchasers":
                for event in record.purchases:
                    purchased_from.setdefault(event.buyer_id, set()).add(event.seller_id)
            for buyer in record.buyers:
                persona_vec = persona_vectors.get(buyer.tribe)
                if persona_vec is None:
                    raise ValueError(f"buyer tribe {buyer.tribe!r} not in tribe config")
                for agent_id in buyer.consideration_set:
                    if mms_basis == "purchasers" and agent_id not in purchased_from.get(
                        buyer.buyer_id, ()
                    ):
                        continue
                    vec = slogan_vectors.get(agent_id)
                    if vec is None:
                        continue
                    agents[agent_id].similarities.append(similarity(vec, persona_vec))
        for agent_id, series in agents.items():
            revenue, cogs, holding = financials[agent_id]
            series.revenue.append(revenue)
            series.profit.append(float(step_profit(revenue, cogs, holding)))
            series.units_sold.append(sold[agent_id])
            series.units_won.append(won_per_agent[agent_id])
            series.inventory_units.append(record.snapshot[agent_id].total_units())
    return agents


def compute_agent_metrics(
    records: Sequence[StepRecord],
    tribes: Sequence[TribeSpec] = (),
    embedder: Embedder | None = None,
    eps: float = EPSILON,
    mms_basis: str = "considered",
) -> dict[str, AgentMetrics]:
    """All nine per-agent metrics over a full trajectory.

    `mms_basis` selects which buyers count as interactions: everyone whose
    consideration set contained the agent ("considered", default) or only
    buyers that actually purchased from it ("purchasers").
    """
    if mms_basis not in ("considered", "purchasers"):
        raise ValueError(f"unknown mms_basis {mms_basis!r}")
    if not records:
        return {}
    collected = _collect(records, tribes, embedder, mms_basis)
    result = {}
    for agent_id in sorted(collected):
        series = collected[agent_id]
        sold_total = sum(series.units_sold)
        avg_inventory = float(np.mean(series.inventory_units))
        mms_score, mms_count = mms(series.similarities)
        result[agent_id] = AgentMetrics(
            agent_id=agent_id,
            npm=npm(series.profit, series.revenue, eps),
            pi=float(sum(series.profit)),
            rar=rar(series.profit, eps),
            iei=iei(sold_total, avg_inventory, eps),
            stockout_rate=stockout_rate(series.units_stockout, series.units_directed, eps),
            bid_efficiency=bid_efficiency(
                series.qty_won, series.qty_bid, series.base_value_won, series.spend_won, eps
            ),
            osi=osi(series.units_won, series.units_sold, eps),
            fill_rate=fill_rate(sold_total, series.units_directed, eps),
            mms=mms_score,
            mms_interactions=mms_count,
        )
    return result


def compute_market_indices(
    records: Sequence[StepRecord], eps: float = EPSILON
) -> list[StepIndices]:
    """Per-step inequality (over funds), concentration (over cumulative
    revenue shares), and participation indices."""
    agent_ids = sorted(records[0].snapshot) if records else []
    cumulative_revenue = {agent_id: 0 for agent_id in agent_ids}
    indices = []
    for record in records:
        step_revenue = {agent_id: 0 for agent_id in agent_ids}
        sellers_with_sales = set()
        for event in record.purchases:
            step_revenue[event.seller_id] += event.qty * event.unit_price
            sellers_with_sales.add(event.seller_id)
        for agent_id in agent_ids:
            cumulative_revenue[agent_id] += step_revenue[agent_id]
        funds = [record.snapshot[a].funds for a in agent_ids]
        hhi, cr4 = concentration([cumulative_revenue[a] for a in agent_ids])
        active = sum(
            1
            for a in agent_ids
            if a in sellers_with_sales and not record.snapshot[a].bankrupt
        )
        indices.append(
            StepIndices(
                step=record.step,
                gini=gini(funds),
                theil=theil(funds),
                cv=coefficient_of_variation(funds, eps),
                hhi=hhi,
                cr4=cr4,
                active_ratio=active / len(agent_ids) if agent_ids else 0.0,
            )
        )
    return indices


def mean_indices(runs: Sequence[Sequence[StepIndices]]) -> list[StepIndices]:
    """Average market indices across runs, step by step.

    Concentration stays null at a step unless every run defined it there.
    """
    if not runs:
        return []
    steps = len(runs[0])
    result = []
    for t in range(steps):
        entries = [run[t] for run in runs]
        hhi_values = [e.hhi for e in entries]
        cr4_values = [e.cr4 for e in entries]
        result.append(
            StepIndices(
                step=entries[0].step,
                gini=float(np.mean([e.gini for e in entries])),
                theil=float(np.mean([e.theil for e in entries])),
                cv=float(np.mean([e.cv for e in entries])),
                hhi=float(np.mean(hhi_values)) if all(v is not None for v in hhi_values) else None,
                cr4=float(np.mean(cr4_values)) if all(v is not None for v in cr4_values) else None,
                active_ratio=float(np.mean([e.active_ratio for e in entries])),
            )
        )
    return result


def mean_metrics(runs: Iterable[Mapping[str, AgentMetrics]]) -> dict[str, AgentMetrics]:
    """Average each agent's metrics across several runs (same agent set)."""
    runs = list(runs)
    if not runs:
        return {}
    agent_ids = sorted(runs[0])
    result = {}
    for agent_id in agent_ids:
        entries = [run[agent_id] for run in runs]
        result[agent_id] = AgentMetrics(
            agent_id=agent_id,
            npm=float(np.mean([e.npm for e in entries])),
            pi=float(np.mean([e.pi for e in entries])),
            rar=float(np.mean([e.rar for e in entries])),
            iei=float(np.mean([e.iei for e in entries])),
            stockout_rate=float(np.mean([e.stockout_rate for e in entries])),
            bid_efficiency=float(np.mean([e.bid_efficiency for e in entries])),
            osi=float(np.mean([e.osi for e in entries])),
            fill_rate=float(np.mean([e.fill_rate for e in entries])),
            mms=float(np.mean([e.mms for e in entries])),
            mms_interactions=int(round(float(np.mean([e.mms_interactions for e in entries])))),
        )
    return result
