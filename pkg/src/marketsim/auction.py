"""Per-item, multi-unit, first-price sealed-bid settlement.

Bids are validated against a hard budget first (an overspending bid is
voided in full), then each item clears independently: lines at or above the
reserve price are sorted by price descending, ties are broken by a seeded
shuffle, and the available quantity is granted greedily. Winners pay their
own bid price. Intermediate bidding rounds never touch state; they only
produce a deterministic feedback summary for the next round.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping

from marketsim.domain import AgentState, Allocation, Award, Bid, ItemSpec


class SettlementInvariantError(RuntimeError):
    """Raised when applying allocations would break budget safety.

    This signals a validation bug upstream; the episode must abort.
    """


@dataclass(frozen=True)
class BudgetViolation:
    """Outcome of a bid whose total cost exceeds the agent's funds.

    Not an exception: the whole bid is voided (zero allocation) and the
    agent learns about it through next-round feedback. The (trimmed) bid
    is kept so logs record what was attempted.
    """

    overspend: int
    cost: int
    funds: int
    bid: Bid


@dataclass(frozen=True)
class ItemFeedback:
    highest_bid_price: int | None
    total_qty_demanded: int
    reserve_price: int

    def to_json(self) -> dict[str, Any]:
        return {
            "highest_bid_price": self.highest_bid_price,
            "total_qty_demanded": self.total_qty_demanded,
            "reserve_price": self.reserve_price,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ItemFeedback":
        return cls(
            highest_bid_price=data["highest_bid_price"],
            total_qty_demanded=data["total_qty_demanded"],
            reserve_price=data["reserve_price"],
        )


@dataclass(frozen=True)
class AgentFeedback:
    overspent: bool
    provisional_wins: dict[str, bool] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "overspent": self.overspent,
            "provisional_wins": dict(self.provisional_wins),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "AgentFeedback":
        return cls(
            overspent=data["overspent"],
            provisional_wins=dict(data.get("provisional_wins", {})),
        )


@dataclass(frozen=True)
class RoundFeedback:
    """Public summary of one completed (non-final) bidding round.

    Derived purely from that round's bids: per item the highest price seen
    and total quantity demanded; per agent its own overspend flag and
    per-item provisional-win indicators. No identities or full bid vectors
    of other agents are revealed.
    """

    items: dict[str, ItemFeedback]
    agents: dict[str, AgentFeedback]

    def to_json(self) -> dict[str, Any]:
        return {
            "items": {item_id: f.to_json() for item_id, f in self.items.items()},
            "agents": {agent_id: f.to_json() for agent_id, f in self.agents.items()},
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "RoundFeedback":
        return cls(
            items={k: ItemFeedback.from_json(v) for k, v in data["items"].items()},
            agents={k: AgentFeedback.from_json(v) for k, v in data["agents"].items()},
        )


def validate_bid(
    bid: Bid, funds: int, catalog: list[ItemSpec]
) -> Bid | BudgetViolation:
    """Check a bid against the hard budget constraint.

    Lines naming items outside the catalog are dropped silently. If the
    remaining total cost exceeds `funds`, the entire bid is voided and a
    `BudgetViolation` is returned; otherwise the (possibly trimmed) bid
    comes back unchanged.
    """
    known = {item.item_id for item in catalog}
    lines = {item_id: line for item_id, line in bid.lines.items() if item_id in known}
    trimmed = bid if len(lines) == len(bid.lines) else Bid(lines=lines)
    cost = trimmed.total_cost()
    if cost > funds:
        return BudgetViolation(overspend=cost - funds, cost=cost, funds=funds, bid=trimmed)
    return trimmed


def settle(
    catalog: list[ItemSpec],
    valid_bids: Mapping[str, Bid],
    rng: random.Random,
) -> Allocation:
    """Clear every item independently against already-validated bids.

    For each item, lines with price >= base_price are ranked by price
    descending; equal-price groups are shuffled with `rng` so ties break
    deterministically per seed. Quantity is granted greedily as
    min(requested, remaining) and winners pay their own bid price.
    """
    awards: dict[tuple[str, str], Award] = {}
    agent_order = sorted(valid_bids)
    for item in sorted(catalog, key=lambda i: i.item_id):
        lines = []
        for agent_id in agent_order:
            line = valid_bids[agent_id].lines.get(item.item_id)
            if line is None or line.qty == 0:
                continue
            if line.price >= item.base_price:
                lines.append((agent_id, line.qty, line.price))
        if not lines:
            continue
        by_price: dict[int, list[tuple[str, int, int]]] = {}
        for entry in lines:
            by_price.setdefault(entry[2], []).append(entry)
        remaining = item.quantity
        for price in sorted(by_price, reverse=True):
            group = by_price[price]
            if len(group) > 1:
                rng.shuffle(group)
            for agent_id, qty, bid_price in group:
                if remaining <= 0:
                    break
                granted = min(qty, remaining)
                remaining -= granted
                awards[(agent_id, item.item_id)] = Award(granted, bid_price)
            if remaining <= 0:
                break
    return Allocation(awards=awards)


def apply_allocations(
    states: Mapping[str, AgentState], alloc: Allocation
) -> tuple[dict[str, AgentState], int]:
    """Debit winners, credit inventory, and update weighted unit costs.

    Returns the updated states plus total supplier revenue. Unit cost is
    the quantity-weighted average of the existing basis (over units held)
    and the new purchase price. A post-settlement negative balance means
    validation was bypassed; that aborts via `SettlementInvariantError`.
    """
    updated = {agent_id: state.clone() for agent_id, state in states.items()}
    supplier_revenue = 0
    for (agent_id, item_id), award in alloc.awards.items():
        if award.qty_won == 0:
            continue
        state = updated[agent_id]
        cost = award.qty_won * award.unit_price_paid
        state.funds -= cost
        supplier_revenue += cost
        held = state.inventory.get(item_id, 0)
        old_cost = state.unit_cost.get(item_id, Fraction(0))
        state.unit_cost[item_id] = (
            old_cost * held + Fraction(award.unit_price_paid) * award.qty_won
        ) / (held + award.qty_won)
        state.inventory[item_id] = held + award.qty_won
        if state.funds < 0:
            raise SettlementInvariantError(
                f"agent {agent_id} funds went negative ({state.funds}) applying "
                f"allocation {award} on {item_id}; bid validation was bypassed"
            )
    return updated, supplier_revenue


def make_round_feedback(
    catalog: list[ItemSpec],
    bids: Mapping[str, Bid],
    overspent: Mapping[str, bool],
    rng: random.Random,
) -> RoundFeedback:
    """Summarize one completed non-final round.

    A provisional settlement (same rule, dedicated RNG stream) marks which
    lines would currently win; nothing is applied to state.
    """
    provisional = settle(catalog, bids, rng)
    items: dict[str, ItemFeedback] = {}
    for item in catalog:
        prices = []
        demanded = 0
        for bid in bids.values():
            line = bid.lines.get(item.item_id)
            if line is None or line.qty == 0:
                continue
            prices.append(line.price)
            demanded += line.qty
        items[item.item_id] = ItemFeedback(
            highest_bid_price=max(prices) if prices else None,
            total_qty_demanded=demanded,
            reserve_price=item.base_price,
        )
    agents: dict[str, AgentFeedback] = {}
    all_agents = set(bids) | set(overspent)
    for agent_id in sorted(all_agents):
        wins = {
            item_id: award.qty_won > 0
            for item_id, award in provisional.agent_awards(agent_id).items()
        }
        agents[agent_id] = AgentFeedback(
            overspent=bool(overspent.get(agent_id, False)),
            provisional_wins=wins,
        )
    return RoundFeedback(items=items, agents=agents)
