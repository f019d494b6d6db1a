"""Prompt rendering for external (LLM-backed) agents.

The templates are frozen: golden tests pin them byte-for-byte, and the
reference adapter renders the identical text on its side of the wire.
Observation fields are substituted into fixed positions; nothing here may
depend on dict iteration order.
"""

from __future__ import annotations

from marketsim.policies import BidObservation, RetailObservation

BID_SYSTEM_PROMPT = """You are a retail agent participating in a multi-round sealed-bid auction for supplier inventory. Output ONLY valid, parseable JSON. No prose.

Output schema (strict):
{
 "bids": {
  "<item_id>": {"qty":<int>,"price":<int>}
 }
}

Rules:
1. Only bid on items in the supplier offers.
2. qty and price must be non-negative integers.
3. Do NOT overspend: total spend must not exceed Funds.
4. Do NOT bid below base_price.
5. JSON must be strict (no trailing commas)."""

RETAIL_SYSTEM_PROMPT = """You are setting retail prices and a marketing slogan for your current catalog. Output ONLY valid, parseable JSON.

Output schema (strict):
{
  "prices": { "<item_id>": <int>, ... },
  "slogan": "<string>"
}

Rules:
1. You do NOT know buyer personas; infer from market_history.
2. price must be a non-negative integer.
3. Slogan should resonate with inferred personas.
4. Keep slogan short (<= 25 words)."""


def _history_block(obs_step: int, history) -> str:
    if obs_step == 0:
        return "Historical sales: (empty at step 0)"
    lines = ["Historical sales:", "step,agent_id,units_sold,revenue,posted_prices,slogan"]
    for step_entry in history:
        for entry in step_entry.entries:
            prices = "|".join(
                f"{item_id}={price}" for item_id, price in entry.prices
            )
            lines.append(
                f"{step_entry.step},{entry.agent_id},{entry.units_sold},"
                f"{entry.revenue},{prices},{entry.slogan}"
            )
    return "\n".join(lines)


def render_bid_user_prompt(obs: BidObservation) -> str:
    lines = [
        f"Step: {obs.step}",
        f"Round: {obs.round_index} of {obs.round_max}",
        f"Funds: {obs.funds}",
        f"Overspent on most recent bid: {obs.overspent_last_bid}",
    ]
    if obs.feedback is not None:
        lines.append("Previous round feedback:")
        lines.append(
            "item_id,highest_bid_price,total_qty_demanded,reserve_price,provisional_win"
        )
        for item_id, info in obs.feedback.items.items():
            highest = "" if info.highest_bid_price is None else str(info.highest_bid_price)
            win = obs.feedback.provisional_wins.get(item_id, False)
            lines.append(
                f"{item_id},{highest},{info.total_qty_demanded},{info.reserve_price},{win}"
            )
    lines.append("Supplier offers:")
    lines.append("item_id,qty,base_price")
    for item in obs.offers:
        lines.append(f"{item.item_id},{item.quantity},{item.base_price}")
    inventory = "; ".join(f"{item.item_id},{obs.inventory.get(item.item_id, 0)}" for item in obs.offers)
    lines.append(f"Current inventory: {inventory}")
    lines.append(_history_block(obs.step, obs.history))
    return "\n".join(lines)


def render_retail_user_prompt(obs: RetailObservation) -> str:
    lines = [
        f"Step: {obs.step}",
        f"Funds: {obs.funds}",
        "Current inventory:",
    ]
    held = [(item_id, qty) for item_id, qty in obs.inventory.items() if qty > 0]
    if held:
        lines.append(", ".join(f"{item_id}: {qty}" for item_id, qty in held))
    else:
        lines.append("(none)")
    lines.append(_history_block(obs.step, obs.history))
    return "\n".join(lines)


def render_bid_prompt(obs: BidObservation) -> str:
    return BID_SYSTEM_PROMPT + "\n\n" + render_bid_user_prompt(obs)


def render_retail_prompt(obs: RetailObservation) -> str:
    return RETAIL_SYSTEM_PROMPT + "\n\n" + render_retail_user_prompt(obs)
