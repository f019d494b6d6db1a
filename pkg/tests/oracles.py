"""Independent reference implementations used to check the real ones.

These stay deliberately naive (enumeration, direct formula application) and
must not import the code paths they verify beyond plain data types.
"""

from __future__ import annotations

import itertools
from typing import Mapping

from marketsim.domain import Bid, ItemSpec


def brute_force_item_outcomes(
    item: ItemSpec, bids: Mapping[str, Bid]
) -> set[frozenset[tuple[str, int, int]]]:
    """Every allocation of one item reachable under some tie order.

    Returns a set of frozensets of (agent_id, qty_won, unit_price) awards.
    """
    candidates = []
    for agent_id in sorted(bids):
        line = bids[agent_id].lines.get(item.item_id)
        if line is None or line.qty == 0 or line.price < item.base_price:
            continue
        candidates.append((agent_id, line.qty, line.price))
    groups: dict[int, list[tuple[str, int, int]]] = {}
    for entry in candidates:
        groups.setdefault(entry[2], []).append(entry)
    prices_desc = sorted(groups, reverse=True)
    per_group_orders = [list(itertools.permutations(groups[p])) for p in prices_desc]
    outcomes = set()
    for combo in itertools.product(*per_group_orders) if per_group_orders else [()]:
        remaining = item.quantity
        awards = []
        for group in combo:
            for agent_id, qty, price in group:
                if remaining <= 0:
                    break
                granted = min(qty, remaining)
                remaining -= granted
                if granted > 0:
                    awards.append((agent_id, granted, price))
        outcomes.add(frozenset(awards))
    return outcomes


def allocation_item_awards(allocation, item_id: str) -> frozenset[tuple[str, int, int]]:
    return frozenset(
        (agent_id, award.qty_won, award.unit_price_paid)
        for (agent_id, item), award in allocation.awards.items()
        if item == item_id and award.qty_won > 0
    )
