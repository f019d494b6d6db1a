"""Buyer-to-seller matching: similarity-weighted gates, then price competition.

A buyer only ever purchases from sellers inside its sampled consideration
set; within that gate the rule is strictly lowest-price-first, cascading to
the next-cheapest seller whenever inventory runs dry. Matching output is a
pure function of (buyers, postings, states, seed).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from marketsim.domain import (
    AgentState,
    BuyerPersona,
    EmbeddingVector,
    PurchaseEvent,
    RetailPosting,
    StockoutAttempt,
)


@dataclass(frozen=True)
class AttentionParams:
    tau: float  # semantic temperature
    k_max: int  # consideration-set cap

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")


def similarity(slogan_vec: EmbeddingVector, persona_vec: EmbeddingVector) -> float:
    """Cosine similarity of two equal-dimension vectors."""
    denom = slogan_vec.norm() * persona_vec.norm()
    dot = slogan_vec.dot(persona_vec)  # raises on dimension mismatch
    if denom == 0.0:
        return 0.0
    return dot / denom


def attention_weight(sim: float, lambda_: float, tau: float) -> float:
    """exp(lambda * sim / tau): a slogan-blind buyer (lambda=0) weighs 1."""
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if lambda_ < 0:
        raise ValueError(f"lambda must be >= 0, got {lambda_}")
    return math.exp(lambda_ * sim / tau)


def consideration_set_size(rho: float, k_max: int, n_sellers: int) -> int:
    # round before ceil: products like 0.05*20 carry binary noise (1.0000...2)
    # that would otherwise bump the ceiling.
    return min(n_sellers, max(1, math.ceil(round(rho * k_max, 9))))


def consideration_set(
    weights: Mapping[str, float],
    rho: float,
    k_max: int,
    n_sellers: int,
    rng: random.Random,
) -> list[str]:
    """Sample sellers without replacement, proportional to their weights.

    Returns min(n_sellers, max(1, ceil(rho * k_max))) sellers; an empty
    weight map yields an empty set (the buyer sees no one).
    """
    if not weights:
        return []
    size = consideration_set_size(rho, k_max, n_sellers)
    pool = sorted(weights.items())
    selected: list[str] = []
    for _ in range(size):
        total = sum(w for _, w in pool)
        pick = rng.random() * total
        acc = 0.0
        idx = len(pool) - 1
        for i, (_, w) in enumerate(pool):
            acc += w
            if pick < acc:
                idx = i
                break
        selected.append(pool[idx][0])
        pool.pop(idx)
    return selected


def _ranked_sellers(
    sellers: Sequence[str],
    postings: Mapping[str, RetailPosting],
    item_id: str,
    rng: random.Random,
) -> list[tuple[str, int]]:
    """Sellers that posted a price for the item, cheapest first; equal-price
    groups are shuffled so ties break by seeded random choice."""
    by_price: dict[int, list[str]] = {}
    for seller_id in sellers:
        posting = postings.get(seller_id)
        if posting is None:
            continue
        price = posting.prices.get(item_id)
        if price is None:
            continue
        by_price.setdefault(price, []).append(seller_id)
    ranked = []
    for price in sorted(by_price):
        group = by_price[price]
        if len(group) > 1:
            rng.shuffle(group)
        ranked.extend((seller_id, price) for seller_id in group)
    return ranked


def execute_purchases(
    step: int,
    gated_buyers: Sequence[tuple[BuyerPersona, Sequence[str]]],
    postings: Mapping[str, RetailPosting],
    states: Mapping[str, AgentState],
    rng: random.Random,
    cascade: bool = True,
) -> tuple[list[PurchaseEvent], list[StockoutAttempt], dict[str, AgentState]]:
    """Run the lowest-price purchasing rule for every buyer in order.

    Each buyer walks its consideration set cheapest-first for its demanded
    item, buying min(remaining, inventory) at the posted price. A seller
    whose inventory cannot cover the then-remaining demand is charged a
    stockout attempt for the unfilled units; with `cascade` the buyer moves
    on to the next-cheapest seller, otherwise it gives up there. Inventory
    contention between buyers is sequential and therefore seed-deterministic.
    """
    updated = {agent_id: state.clone() for agent_id, state in states.items()}
    purchases: list[PurchaseEvent] = []
    stockouts: list[StockoutAttempt] = []
    for buyer, gate in gated_buyers:
        remaining = buyer.qty
        if remaining <= 0 or not gate:
            continue
        for seller_id, price in _ranked_sellers(gate, postings, buyer.item_id, rng):
            if remaining <= 0:
                break
            seller = updated[seller_id]
            available = seller.inventory.get(buyer.item_id, 0)
            bought = min(remaining, available)
            if bought > 0:
                seller.inventory[buyer.item_id] = available - bought
                seller.funds += bought * price
                purchases.append(
                    PurchaseEvent(
                        step=step,
                        buyer_id=buyer.buyer_id,
                        seller_id=seller_id,
                        item_id=buyer.item_id,
                        qty=bought,
                        unit_price=price,
                    )
                )
                remaining -= bought
            if remaining > 0:
                # demand left means this seller is now (or already was) empty
                stockouts.append(
                    StockoutAttempt(
                        step=step,
                        buyer_id=buyer.buyer_id,
                        seller_id=seller_id,
                        item_id=buyer.item_id,
                        units_unfilled=remaining,
                    )
                )
                if not cascade:
                    break
    return purchases, stockouts, updated
