"""JSONL trajectory logs: writing, reading, and replay verification.

A log is one header object (config identity and versions), one object per
step record, and one footer object (final metrics and market indices).
Serialization is canonical (sorted keys, fixed separators), so identical
episodes produce byte-identical files. `replay_check` re-derives every
snapshot from the recorded events and recomputes the metrics, proving a
log is self-consistent without trusting the engine that wrote it.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable

from marketsim.config import EpisodeConfig
from marketsim.domain import AgentState, StepRecord
from marketsim.engine import TrajectoryLog, initial_funds, make_embedder
from marketsim.metrics import AgentMetrics, StepIndices, compute_agent_metrics, compute_market_indices


class LogCorruption(ValueError):
    """A trajectory log that cannot be parsed into a TrajectoryLog."""


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def log_lines(log: TrajectoryLog) -> Iterable[str]:
    yield _dumps(
        {
            "kind": "header",
            "protocol_version": log.protocol_version,
            "schema_version": log.schema_version,
            "seed": log.seed,
            "config_hash": log.config_hash,
            "config": log.config.to_json(),
        }
    )
    for record in log.records:
        yield _dumps({"kind": "step", **record.to_json()})
    yield _dumps(
        {
            "kind": "footer",
            "agent_metrics": {a: m.to_json() for a, m in log.agent_metrics.items()},
            "market_indices": [i.to_json() for i in log.market_indices],
        }
    )


def write_log(log: TrajectoryLog, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for line in log_lines(log):
            fh.write(line + "\n")
    return path


def read_log(path: str | Path) -> TrajectoryLog:
    path = Path(path)
    header: dict[str, Any] | None = None
    footer: dict[str, Any] | None = None
    records: list[StepRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogCorruption(f"{path}:{line_no}: not JSON: {exc}") from exc
            kind = obj.get("kind")
            try:
                if kind == "header":
                    header = obj
                elif kind == "step":
                    records.append(StepRecord.from_json(obj))
                elif kind == "footer":
                    footer = obj
                else:
                    raise LogCorruption(f"{path}:{line_no}: unknown kind {kind!r}")
            except LogCorruption:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise LogCorruption(f"{path}:{line_no}: malformed {kind} object: {exc}") from exc
    if header is None:
        raise LogCorruption(f"{path}: missing header")
    if footer is None:
        raise LogCorruption(f"{path}: missing footer")
    config = EpisodeConfig.from_json(header["config"])
    return TrajectoryLog(
        config=config,
        records=records,
        agent_metrics={
            a: AgentMetrics.from_json(m) for a, m in footer["agent_metrics"].items()
        },
        market_indices=[StepIndices.from_json(i) for i in footer["market_indices"]],
        protocol_version=header.get("protocol_version", 1),
        schema_version=header.get("schema_version", 1),
        config_hash=header.get("config_hash", ""),
    )


def _replay_step(
    prev: dict[str, AgentState], record: StepRecord, base_prices: dict[str, int]
) -> tuple[dict[str, AgentState], list[str]]:
    problems: list[str] = []
    states = {a: s.clone() for a, s in prev.items()}

    for (agent_id, item_id), award in record.allocation.awards.items():
        state = states[agent_id]
        held = state.inventory.get(item_id, 0)
        old_cost = state.unit_cost.get(item_id, Fraction(0))
        if award.qty_won > 0:
            state.unit_cost[item_id] = (
                old_cost * held + Fraction(award.unit_price_paid) * award.qty_won
            ) / (held + award.qty_won)
            state.inventory[item_id] = held + award.qty_won
            state.funds -= award.qty_won * award.unit_price_paid
        spec = next((i for i in record.offers if i.item_id == item_id), None)
        if spec is None:
            problems.append(f"step {record.step}: award on unknown item {item_id}")
        elif award.unit_price_paid < spec.base_price:
            problems.append(
                f"step {record.step}: agent {agent_id} paid {award.unit_price_paid} "
                f"below reserve {spec.base_price} on {item_id}"
            )
        final_bids = record.rounds[-1].bids if record.rounds else {}
        line = final_bids.get(agent_id)
        bid_line = line.lines.get(item_id) if line else None
        if bid_line is None or bid_line.price != award.unit_price_paid:
            problems.append(
                f"step {record.step}: agent {agent_id} award price on {item_id} "
                f"does not match its own bid (first-price rule)"
            )

    for item in record.offers:
        if record.allocation.item_total(item.item_id) > item.quantity:
            problems.append(
                f"step {record.step}: item {item.item_id} over-allocated"
            )

    gates = {b.buyer_id: set(b.consideration_set) for b in record.buyers}
    for event in record.purchases:
        state = states[event.seller_id]
        state.inventory[event.item_id] = state.inventory.get(event.item_id, 0) - event.qty
        state.funds += event.qty * event.unit_price
        if event.seller_id not in gates.get(event.buyer_id, set()):
            problems.append(
                f"step {record.step}: buyer {event.buyer_id} bought from "
                f"{event.seller_id} outside its consideration set"
            )
        posting = record.postings.get(event.seller_id)
        posted = posting.prices.get(event.item_id) if posting else None
        if posted != event.unit_price:
            problems.append(
                f"step {record.step}: purchase price {event.unit_price} from "
                f"{event.seller_id} does not match posted price {posted}"
            )

    for agent_id, charge in record.holding_costs.items():
        states[agent_id].funds -= charge
        if states[agent_id].funds < 0:
            states[agent_id].bankrupt = True

    for agent_id, expected in record.snapshot.items():
        actual = states.get(agent_id)
        if actual is None:
            problems.append(f"step {record.step}: agent {agent_id} missing in replay")
            continue
        if actual.funds != expected.funds:
            problems.append(
                f"step {record.step}: agent {agent_id} funds mismatch "
                f"(replayed {actual.funds}, logged {expected.funds})"
            )
        replay_inv = {k: v for k, v in actual.inventory.items() if v != 0}
        logged_inv = {k: v for k, v in expected.inventory.items() if v != 0}
        if replay_inv != logged_inv:
            problems.append(
                f"step {record.step}: agent {agent_id} inventory mismatch "
                f"(replayed {replay_inv}, logged {logged_inv})"
            )
        for item_id, qty in expected.inventory.items():
            if qty < 0:
                problems.append(
                    f"step {record.step}: agent {agent_id} negative inventory on {item_id}"
                )
        for item_id, cost in expected.unit_cost.items():
            if actual.unit_cost.get(item_id) != cost:
                problems.append(
                    f"step {record.step}: agent {agent_id} unit_cost mismatch on {item_id}"
                )
        if actual.bankrupt != expected.bankrupt:
            problems.append(
                f"step {record.step}: agent {agent_id} bankrupt flag mismatch"
            )
    return states, problems


def replay_check(log: TrajectoryLog) -> list[str]:
    """Verify a log end-to-end; returns a list of problems (empty = clean).

    Snapshots are re-derived from recorded events, conservation and auction
    rules are re-checked, and the footer metrics are recomputed from the
    records; any single-field tamper shows up as at least one problem.
    """
    problems: list[str] = []
    if log.config_hash != log.config.config_hash():
        problems.append("header config_hash does not match embedded config")
    k_init = initial_funds(log.config.catalog, log.config.agents, log.config.alpha)
    states = {a: AgentState(agent_id=a, funds=k_init) for a in log.config.agent_ids()}
    base_prices = {item.item_id: item.base_price for item in log.config.catalog}
    funds_before = sum(s.funds for s in states.values())
    for record in log.records:
        states, step_problems = _replay_step(states, record, base_prices)
        problems.extend(step_problems)
        buyer_spend = sum(e.qty * e.unit_price for e in record.purchases)
        funds_after = sum(s.funds for s in record.snapshot.values())
        holding = sum(record.holding_costs.values())
        if funds_after - funds_before != buyer_spend - record.supplier_revenue - holding:
            problems.append(f"step {record.step}: money conservation mismatch")
        funds_before = funds_after
        states = {a: s.clone() for a, s in record.snapshot.items()}

    try:
        embedder = make_embedder(log.config)
        recomputed = compute_agent_metrics(
            log.records, log.config.tribes, embedder, mms_basis=log.config.mms_basis
        )
        if {a: m.to_json() for a, m in recomputed.items()} != {
            a: m.to_json() for a, m in log.agent_metrics.items()
        }:
            diff = [
                a
                for a in recomputed
                if recomputed[a].to_json() != log.agent_metrics.get(a, recomputed[a]).to_json()
            ]
            problems.append(f"footer agent_metrics do not match recomputation: {diff}")
        indices = compute_market_indices(log.records)
        if [i.to_json() for i in indices] != [i.to_json() for i in log.market_indices]:
            problems.append("footer market_indices do not match recomputation")
    except Exception as exc:  # embedder unavailable, malformed config, ...
        problems.append(f"metrics recomputation failed: {type(exc).__name__}: {exc}")
    return problems
