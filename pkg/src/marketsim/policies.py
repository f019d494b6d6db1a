"""Agent policy abstraction and the scripted baseline policies.

Policies receive observation objects and return syntactically valid
actions; all semantic validation (budgets, reserve prices, held items)
belongs to the engine. Scripted baselines are deterministic given the
observation and their per-agent RNG stream, so whole episodes replay
byte-identically.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

from marketsim.auction import ItemFeedback
from marketsim.domain import Bid, BidLine, ItemSpec, RetailPosting, fraction_to_json


@dataclass(frozen=True)
class HistoryEntry:
    """One agent's public outcomes for one prior step."""

    agent_id: str
    prices: tuple[tuple[str, int], ...]
    slogan: str
    units_sold: int
    revenue: int

    def to_json(self) -> dict[str, Any]:
        return {
            "agent_id": self.agent_id,
            "prices": [[item_id, price] for item_id, price in self.prices],
            "slogan": self.slogan,
            "units_sold": self.units_sold,
            "revenue": self.revenue,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "HistoryEntry":
        return cls(
            agent_id=data["agent_id"],
            prices=tuple((p[0], p[1]) for p in data["prices"]),
            slogan=data["slogan"],
            units_sold=data["units_sold"],
            revenue=data["revenue"],
        )


@dataclass(frozen=True)
class HistoryStep:
    step: int
    entries: tuple[HistoryEntry, ...]

    def to_json(self) -> dict[str, Any]:
        return {"step": self.step, "entries": [e.to_json() for e in self.entries]}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "HistoryStep":
        return cls(
            step=data["step"],
            entries=tuple(HistoryEntry.from_json(e) for e in data["entries"]),
        )


@dataclass(frozen=True)
class ObservedFeedback:
    """Round feedback as one agent sees it: item summaries plus its own
    overspend flag and provisional wins, never other agents' results."""

    items: dict[str, ItemFeedback]
    overspent: bool
    provisional_wins: dict[str, bool]

    def to_json(self) -> dict[str, Any]:
        return {
            "items": {item_id: f.to_json() for item_id, f in self.items.items()},
            "overspent": self.overspent,
            "provisional_wins": dict(self.provisional_wins),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ObservedFeedback":
        return cls(
            items={k: ItemFeedback.from_json(v) for k, v in data["items"].items()},
            overspent=data["overspent"],
            provisional_wins=dict(data["provisional_wins"]),
        )


@dataclass(frozen=True)
class BidObservation:
    step: int
    round_index: int
    round_max: int
    funds: int
    overspent_last_bid: bool
    offers: tuple[ItemSpec, ...]
    inventory: dict[str, int]
    history: tuple[HistoryStep, ...]
    feedback: ObservedFeedback | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "round_index": self.round_index,
            "round_max": self.round_max,
            "funds": self.funds,
            "overspent_last_bid": self.overspent_last_bid,
            "offers": [item.to_json() for item in self.offers],
            "inventory": [
                {"item_id": item.item_id, "qty": self.inventory.get(item.item_id, 0)}
                for item in self.offers
            ],
            "history": [h.to_json() for h in self.history],
            "feedback": self.feedback.to_json() if self.feedback else None,
        }


@dataclass(frozen=True)
class RetailObservation:
    step: int
    funds: int
    inventory: dict[str, int]
    unit_cost: dict[str, Fraction]
    history: tuple[HistoryStep, ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "funds": self.funds,
            "inventory": [
                {"item_id": item_id, "qty": qty} for item_id, qty in self.inventory.items()
            ],
            "unit_cost": {
                item_id: fraction_to_json(cost) for item_id, cost in self.unit_cost.items()
            },
            "history": [h.to_json() for h in self.history],
        }


class Policy:
    """Decides bids and retail postings for one agent."""

    name = "base"

    def __init__(self) -> None:
        self.agent_id = ""
        self.rng: random.Random = random.Random(0)

    def bind(self, agent_id: str, rng: random.Random) -> None:
        self.agent_id = agent_id
        self.rng = rng

    def decide_bid(self, obs: BidObservation) -> Bid:
        raise NotImplementedError

    def decide_retail(self, obs: RetailObservation) -> RetailPosting:
        raise NotImplementedError

    def close(self) -> None:
        """Release external resources (subprocesses, sockets)."""


class ZeroPolicy(Policy):
    """Never bids, never posts; the inert baseline."""

    name = "zero"

    def decide_bid(self, obs: BidObservation) -> Bid:
        return Bid()

    def decide_retail(self, obs: RetailObservation) -> RetailPosting:
        return RetailPosting()


_SLOGAN_WORDS = (
    "fresh", "deals", "daily", "premium", "quality", "craft", "green", "eco",
    "fair", "exclusive", "limited", "budget", "value", "save", "big", "new",
    "top", "best", "everyday", "low", "prices",
)


class RandomValidPolicy(Policy):
    """Uniformly random actions that always satisfy the budget constraint."""

    name = "random"

    def __init__(self, max_markup: float = 2.0) -> None:
        super().__init__()
        self.max_markup = max_markup

    def decide_bid(self, obs: BidObservation) -> Bid:
        remaining = obs.funds
        lines: dict[str, BidLine] = {}
        for item in obs.offers:
            if item.quantity == 0 or self.rng.random() < 0.5:
                continue
            price = item.base_price + self.rng.randint(0, max(1, item.base_price))
            if price <= 0 or remaining < price:
                continue
            qty = self.rng.randint(1, item.quantity)
            qty = min(qty, remaining // price)
            if qty == 0:
                continue
            lines[item.item_id] = BidLine(qty, price)
            remaining -= qty * price
        return Bid(lines=lines)

    def decide_retail(self, obs: RetailObservation) -> RetailPosting:
        prices = {}
        for item_id, qty in obs.inventory.items():
            if qty <= 0:
                continue
            markup = 1.0 + self.rng.random() * (self.max_markup - 1.0)
            cost = float(obs.unit_cost.get(item_id, Fraction(1)))
            prices[item_id] = max(1, math.ceil(cost * markup))
        n_words = self.rng.randint(3, 8)
        slogan = " ".join(self.rng.choice(_SLOGAN_WORDS) for _ in range(n_words))
        return RetailPosting(prices=prices, slogan=slogan)


class GreedyValuePolicy(Policy):
    """Bids just over reserve on cheap items first until the budget is gone."""

    name = "greedy"

    def __init__(self, price_premium: int = 1, markup: float = 1.5) -> None:
        super().__init__()
        self.price_premium = price_premium
        self.markup = markup

    def decide_bid(self, obs: BidObservation) -> Bid:
        remaining = obs.funds
        lines: dict[str, BidLine] = {}
        ordered = sorted(obs.offers, key=lambda i: (i.base_price, i.item_id))
        for item in ordered:
            if item.quantity == 0:
                continue
            price = item.base_price + self.price_premium
            if price <= 0 or remaining < price:
                continue
            qty = min(item.quantity, remaining // price)
            if qty == 0:
                continue
            lines[item.item_id] = BidLine(qty, price)
            remaining -= qty * price
        return Bid(lines=lines)

    def decide_retail(self, obs: RetailObservation) -> RetailPosting:
        prices = {}
        for item_id, qty in obs.inventory.items():
            if qty <= 0:
                continue
            cost = float(obs.unit_cost.get(item_id, Fraction(1)))
            prices[item_id] = max(1, math.ceil(cost * self.markup))
        return RetailPosting(prices=prices, slogan="Great value on every item, every day.")


class MarginPricerPolicy(Policy):
    """Splits the budget evenly across items at reserve price, then prices
    held inventory at a fixed markup over unit cost."""

    name = "margin"

    def __init__(self, markup: float = 1.5, budget_fraction: float = 0.8) -> None:
        super().__init__()
        self.markup = markup
        self.budget_fraction = budget_fraction

    def decide_bid(self, obs: BidObservation) -> Bid:
        open_items = [i for i in obs.offers if i.quantity > 0 and i.base_price > 0]
        if not open_items:
            return Bid()
        budget = int(obs.funds * self.budget_fraction)
        share = budget // len(open_items)
        lines = {}
        for item in open_items:
            qty = min(item.quantity, share // item.base_price)
            if qty > 0:
                lines[item.item_id] = BidLine(qty, item.base_price)
        return Bid(lines=lines)

    def decide_retail(self, obs: RetailObservation) -> RetailPosting:
        prices = {}
        for item_id, qty in obs.inventory.items():
            if qty <= 0:
                continue
            cost = float(obs.unit_cost.get(item_id, Fraction(1)))
            prices[item_id] = max(1, math.ceil(cost * self.markup))
        return RetailPosting(prices=prices, slogan="Fair prices on goods you can trust.")


class MimicSloganPolicy(Policy):
    """Copies the previous step's top-revenue slogan; bids like the greedy
    baseline. Cold-starts (and revenue-less markets) fall back to a fixed
    default slogan."""

    name = "mimic"
    default_slogan = "Quality goods at honest prices."

    def __init__(self, markup: float = 1.5) -> None:
        super().__init__()
        self.markup = markup
        self._bidder = GreedyValuePolicy(markup=markup)

    def bind(self, agent_id: str, rng: random.Random) -> None:
        super().bind(agent_id, rng)
        self._bidder.bind(agent_id, rng)

    def decide_bid(self, obs: BidObservation) -> Bid:
        return self._bidder.decide_bid(obs)

    def decide_retail(self, obs: RetailObservation) -> RetailPosting:
        prices = {}
        for item_id, qty in obs.inventory.items():
            if qty <= 0:
                continue
            cost = float(obs.unit_cost.get(item_id, Fraction(1)))
            prices[item_id] = max(1, math.ceil(cost * self.markup))
        slogan = self.default_slogan
        if obs.history:
            last = obs.history[-1]
            best: HistoryEntry | None = None
            for entry in last.entries:
                if entry.revenue > 0 and (best is None or entry.revenue > best.revenue):
                    best = entry
            if best is not None:
                slogan = best.slogan
        return RetailPosting(prices=prices, slogan=slogan)


def scripted_policy(name: str, params: Mapping[str, Any] | None = None) -> Policy:
    """Instantiate a scripted baseline by registry name."""
    params = dict(params or {})
    registry = {
        ZeroPolicy.name: ZeroPolicy,
        RandomValidPolicy.name: RandomValidPolicy,
        GreedyValuePolicy.name: GreedyValuePolicy,
        MarginPricerPolicy.name: MarginPricerPolicy,
        MimicSloganPolicy.name: MimicSloganPolicy,
    }
    try:
        cls = registry[name]
    except KeyError:
        raise ValueError(
            f"unknown policy {name!r}; known: {', '.join(sorted(registry))}"
        ) from None
    return cls(**params)


SCRIPTED_POLICY_NAMES = ("zero", "random", "greedy", "margin", "mimic")
