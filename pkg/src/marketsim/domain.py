"""Core value types shared by every subsystem.

Money and units are integers end-to-end; the only non-integer quantity kept
on the books is the per-item weighted-average unit cost, stored as an exact
`Fraction` so cost-of-goods accounting never drifts. Every type serializes
to JSON with lower_snake_case field names; those names appear verbatim in
trajectory logs and in the external-agent wire protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, NamedTuple

SLOGAN_WORD_CAP = 25


def truncate_slogan(text: str, max_words: int = SLOGAN_WORD_CAP) -> str:
    """Cap a slogan at `max_words`, cutting at a word boundary.

    Text at or under the cap is returned unchanged (original spacing kept);
    over-long text is rebuilt from its first `max_words` tokens.
    """
    words = text.split()
    if len(words) <= max_words:
        return text
    return " ".join(words[:max_words])


def fraction_to_json(value: Fraction) -> str:
    return str(value)


def fraction_from_json(raw: str) -> Fraction:
    return Fraction(raw)


def _require_non_negative_int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return value


@dataclass(frozen=True)
class ItemSpec:
    """One supplier catalog entry: reserve price and available quantity."""

    item_id: str
    base_price: int
    quantity: int
    category: str = ""

    def __post_init__(self) -> None:
        _require_non_negative_int(self.base_price, "base_price")
        _require_non_negative_int(self.quantity, "quantity")

    def to_json(self) -> dict[str, Any]:
        return {
            "item_id": self.item_id,
            "base_price": self.base_price,
            "quantity": self.quantity,
            "category": self.category,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ItemSpec":
        return cls(
            item_id=data["item_id"],
            base_price=data["base_price"],
            quantity=data["quantity"],
            category=data.get("category", ""),
        )


def catalog_total_value(catalog: Iterable[ItemSpec]) -> int:
    """Total catalog value: sum of quantity * base_price over all items."""
    return sum(item.quantity * item.base_price for item in catalog)


class BidLine(NamedTuple):
    qty: int
    price: int


@dataclass(frozen=True)
class Bid:
    """Per-item (qty, price) requests; all values non-negative integers."""

    lines: dict[str, BidLine] = field(default_factory=dict)

    def __post_init__(self) -> None:
        normalized = {}
        for item_id, line in self.lines.items():
            qty, price = line
            normalized[item_id] = BidLine(
                _require_non_negative_int(qty, f"qty[{item_id}]"),
                _require_non_negative_int(price, f"price[{item_id}]"),
            )
        object.__setattr__(self, "lines", normalized)

    def total_cost(self) -> int:
        return sum(line.qty * line.price for line in self.lines.values())

    def total_qty(self) -> int:
        return sum(line.qty for line in self.lines.values())

    def is_empty(self) -> bool:
        return not self.lines

    def to_json(self) -> dict[str, Any]:
        return {
            "lines": {
                item_id: {"qty": line.qty, "price": line.price}
                for item_id, line in self.lines.items()
            }
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Bid":
        return cls(
            lines={
                item_id: BidLine(entry["qty"], entry["price"])
                for item_id, entry in data.get("lines", {}).items()
            }
        )


class Award(NamedTuple):
    qty_won: int
    unit_price_paid: int


@dataclass(frozen=True)
class Allocation:
    """Settled awards keyed by (agent_id, item_id); first-price rule."""

    awards: dict[tuple[str, str], Award] = field(default_factory=dict)

    def agent_cost(self, agent_id: str) -> int:
        return sum(
            award.qty_won * award.unit_price_paid
            for (winner, _), award in self.awards.items()
            if winner == agent_id
        )

    def agent_awards(self, agent_id: str) -> dict[str, Award]:
        return {
            item_id: award
            for (winner, item_id), award in self.awards.items()
            if winner == agent_id
        }

    def item_total(self, item_id: str) -> int:
        return sum(
            award.qty_won for (_, item), award in self.awards.items() if item == item_id
        )

    def is_empty(self) -> bool:
        return not self.awards

    def to_json(self) -> dict[str, Any]:
        nested: dict[str, dict[str, Any]] = {}
        for (agent_id, item_id), award in self.awards.items():
            nested.setdefault(agent_id, {})[item_id] = {
                "qty_won": award.qty_won,
                "unit_price_paid": award.unit_price_paid,
            }
        return {"awards": nested}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Allocation":
        awards = {}
        for agent_id, items in data.get("awards", {}).items():
            for item_id, entry in items.items():
                awards[(agent_id, item_id)] = Award(
                    entry["qty_won"], entry["unit_price_paid"]
                )
        return cls(awards=awards)


@dataclass(frozen=True)
class RetailPosting:
    """Posted retail prices plus a marketing slogan (capped at 25 words)."""

    prices: dict[str, int] = field(default_factory=dict)
    slogan: str = ""

    def __post_init__(self) -> None:
        for item_id, price in self.prices.items():
            _require_non_negative_int(price, f"price[{item_id}]")
        object.__setattr__(self, "slogan", truncate_slogan(self.slogan))

    def is_empty(self) -> bool:
        return not self.prices

    def to_json(self) -> dict[str, Any]:
        return {"prices": dict(self.prices), "slogan": self.slogan}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "RetailPosting":
        return cls(prices=dict(data.get("prices", {})), slogan=data.get("slogan", ""))


@dataclass
class AgentState:
    """Funds, inventory, and cost basis for one retailer agent.

    `unit_cost` is the quantity-weighted average price paid for the units
    currently held, tracked per item as an exact rational. `bankrupt` goes
    (and stays) true the first time funds dip below zero.
    """

    agent_id: str
    funds: int
    inventory: dict[str, int] = field(default_factory=dict)
    unit_cost: dict[str, Fraction] = field(default_factory=dict)
    bankrupt: bool = False

    def clone(self) -> "AgentState":
        return AgentState(
            agent_id=self.agent_id,
            funds=self.funds,
            inventory=dict(self.inventory),
            unit_cost=dict(self.unit_cost),
            bankrupt=self.bankrupt,
        )

    def held_items(self) -> list[str]:
        return [item_id for item_id, qty in self.inventory.items() if qty > 0]

    def total_units(self) -> int:
        return sum(self.inventory.values())

    def to_json(self) -> dict[str, Any]:
        return {
            "agent_id": self.agent_id,
            "funds": self.funds,
            "inventory": dict(self.inventory),
            "unit_cost": {
                item_id: fraction_to_json(cost)
                for item_id, cost in self.unit_cost.items()
            },
            "bankrupt": self.bankrupt,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "AgentState":
        return cls(
            agent_id=data["agent_id"],
            funds=data["funds"],
            inventory={k: v for k, v in data.get("inventory", {}).items()},
            unit_cost={
                k: fraction_from_json(v) for k, v in data.get("unit_cost", {}).items()
            },
            bankrupt=data.get("bankrupt", False),
        )


@dataclass(frozen=True)
class BuyerPersona:
    """One generated buyer: archetype, hidden persona text, and demand."""

    buyer_id: str
    tribe: str
    persona_text: str
    lambda_: float  # slogan sensitivity; serialized as "lambda"
    rho: float  # patience in [0, 1]
    item_id: str = ""
    qty: int = 0

    def __post_init__(self) -> None:
        if self.lambda_ < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lambda_}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")

    def with_demand(self, item_id: str, qty: int) -> "BuyerPersona":
        return BuyerPersona(
            buyer_id=self.buyer_id,
            tribe=self.tribe,
            persona_text=self.persona_text,
            lambda_=self.lambda_,
            rho=self.rho,
            item_id=item_id,
            qty=qty,
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "buyer_id": self.buyer_id,
            "tribe": self.tribe,
            "persona_text": self.persona_text,
            "lambda": self.lambda_,
            "rho": self.rho,
            "item_id": self.item_id,
            "qty": self.qty,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "BuyerPersona":
        return cls(
            buyer_id=data["buyer_id"],
            tribe=data["tribe"],
            persona_text=data.get("persona_text", ""),
            lambda_=data["lambda"],
            rho=data["rho"],
            item_id=data.get("item_id", ""),
            qty=data.get("qty", 0),
        )


@dataclass(frozen=True)
class PurchaseEvent:
    step: int
    buyer_id: str
    seller_id: str
    item_id: str
    qty: int
    unit_price: int

    def __post_init__(self) -> None:
        if self.qty < 1:
            raise ValueError(f"purchase qty must be >= 1, got {self.qty}")
        _require_non_negative_int(self.unit_price, "unit_price")

    def to_json(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "buyer_id": self.buyer_id,
            "seller_id": self.seller_id,
            "item_id": self.item_id,
            "qty": self.qty,
            "unit_price": self.unit_price,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "PurchaseEvent":
        return cls(
            step=data["step"],
            buyer_id=data["buyer_id"],
            seller_id=data["seller_id"],
            item_id=data["item_id"],
            qty=data["qty"],
            unit_price=data["unit_price"],
        )


@dataclass(frozen=True)
class StockoutAttempt:
    """Demand directed at a seller that its inventory could not cover."""

    step: int
    buyer_id: str
    seller_id: str
    item_id: str
    units_unfilled: int

    def __post_init__(self) -> None:
        if self.units_unfilled < 1:
            raise ValueError(
                f"units_unfilled must be >= 1, got {self.units_unfilled}"
            )

    def to_json(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "buyer_id": self.buyer_id,
            "seller_id": self.seller_id,
            "item_id": self.item_id,
            "units_unfilled": self.units_unfilled,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "StockoutAttempt":
        return cls(
            step=data["step"],
            buyer_id=data["buyer_id"],
            seller_id=data["seller_id"],
            item_id=data["item_id"],
            units_unfilled=data["units_unfilled"],
        )


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-length vector of finite reals; dim is constant per episode."""

    components: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.components:
            raise ValueError("embedding must have at least one component")
        for value in self.components:
            if not math.isfinite(value):
                raise ValueError(f"embedding component not finite: {value!r}")

    @property
    def dim(self) -> int:
        return len(self.components)

    def dot(self, other: "EmbeddingVector") -> float:
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return sum(a * b for a, b in zip(self.components, other.components))

    def norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.components))

    def to_json(self) -> dict[str, Any]:
        return {"components": list(self.components)}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "EmbeddingVector":
        return cls(components=tuple(data["components"]))


@dataclass(frozen=True)
class PolicyFault:
    """A policy call that failed and was replaced by the zero action."""

    agent_id: str
    stage: str  # "bid" | "retail"
    round_index: int
    reason: str

    def to_json(self) -> dict[str, Any]:
        return {
            "agent_id": self.agent_id,
            "stage": self.stage,
            "round_index": self.round_index,
            "reason": self.reason,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "PolicyFault":
        return cls(
            agent_id=data["agent_id"],
            stage=data["stage"],
            round_index=data["round_index"],
            reason=data["reason"],
        )


@dataclass(frozen=True)
class BuyerRecord:
    """Logged view of one buyer: persona parameters plus its sampled gate."""

    buyer_id: str
    tribe: str
    lambda_: float
    rho: float
    item_id: str
    qty: int
    consideration_set: tuple[str, ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "buyer_id": self.buyer_id,
            "tribe": self.tribe,
            "lambda": self.lambda_,
            "rho": self.rho,
            "item_id": self.item_id,
            "qty": self.qty,
            "consideration_set": list(self.consideration_set),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "BuyerRecord":
        return cls(
            buyer_id=data["buyer_id"],
            tribe=data["tribe"],
            lambda_=data["lambda"],
            rho=data["rho"],
            item_id=data["item_id"],
            qty=data["qty"],
            consideration_set=tuple(data["consideration_set"]),
        )


@dataclass
class BidRoundRecord:
    """Bids of one auction round; feedback is set on non-final rounds only."""

    round_index: int
    bids: dict[str, Bid]
    overspent: dict[str, bool]
    feedback: Any | None = None  # auction.RoundFeedback

    def to_json(self) -> dict[str, Any]:
        return {
            "round_index": self.round_index,
            "bids": {agent: bid.to_json() for agent, bid in self.bids.items()},
            "overspent": dict(self.overspent),
            "feedback": self.feedback.to_json() if self.feedback is not None else None,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "BidRoundRecord":
        from marketsim.auction import RoundFeedback

        feedback = data.get("feedback")
        return cls(
            round_index=data["round_index"],
            bids={agent: Bid.from_json(b) for agent, b in data.get("bids", {}).items()},
            overspent=dict(data.get("overspent", {})),
            feedback=RoundFeedback.from_json(feedback) if feedback is not None else None,
        )


@dataclass
class StepRecord:
    """Everything that happened in one step, replayable from the previous
    snapshot: bids (all rounds), settlement, postings, buyers, purchase and
    stockout events, holding charges, and the end-of-step balance sheet."""

    step: int
    offers: list[ItemSpec]
    rounds: list[BidRoundRecord]
    allocation: Allocation
    supplier_revenue: int
    postings: dict[str, RetailPosting]
    buyers: list[BuyerRecord]
    purchases: list[PurchaseEvent]
    stockouts: list[StockoutAttempt]
    policy_faults: list[PolicyFault]
    holding_costs: dict[str, int]
    snapshot: dict[str, AgentState]

    def to_json(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "offers": [item.to_json() for item in self.offers],
            "rounds": [r.to_json() for r in self.rounds],
            "allocation": self.allocation.to_json(),
            "supplier_revenue": self.supplier_revenue,
            "postings": {a: p.to_json() for a, p in self.postings.items()},
            "buyers": [b.to_json() for b in self.buyers],
            "purchases": [p.to_json() for p in self.purchases],
            "stockouts": [s.to_json() for s in self.stockouts],
            "policy_faults": [f.to_json() for f in self.policy_faults],
            "holding_costs": dict(self.holding_costs),
            "snapshot": {a: s.to_json() for a, s in self.snapshot.items()},
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "StepRecord":
        return cls(
            step=data["step"],
            offers=[ItemSpec.from_json(i) for i in data["offers"]],
            rounds=[BidRoundRecord.from_json(r) for r in data["rounds"]],
            allocation=Allocation.from_json(data["allocation"]),
            supplier_revenue=data["supplier_revenue"],
            postings={
                a: RetailPosting.from_json(p) for a, p in data["postings"].items()
            },
            buyers=[BuyerRecord.from_json(b) for b in data["buyers"]],
            purchases=[PurchaseEvent.from_json(p) for p in data["purchases"]],
            stockouts=[StockoutAttempt.from_json(s) for s in data["stockouts"]],
            policy_faults=[PolicyFault.from_json(f) for f in data["policy_faults"]],
            holding_costs=dict(data["holding_costs"]),
            snapshot={a: AgentState.from_json(s) for a, s in data["snapshot"].items()},
        )
