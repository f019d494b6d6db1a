"""Episode orchestration: the staged simulation loop.

Each step runs procurement (multi-round bidding, final-round settlement),
then retail (postings, buyer generation, gated purchases), then holding
costs and bankruptcy checks, and finally records a self-consistent
StepRecord. Closed-loop accounting is asserted every step; a breach aborts
the episode with a diagnostic dump rather than logging corrupt state.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

from marketsim.attention import attention_weight, consideration_set, execute_purchases, similarity
from marketsim.auction import (
    BudgetViolation,
    RoundFeedback,
    apply_allocations,
    make_round_feedback,
    settle,
    validate_bid,
)
from marketsim.bridge import PROTOCOL_VERSION, build_policy
from marketsim.config import SCHEMA_VERSION, EpisodeConfig
from marketsim.domain import (
    AgentState,
    Bid,
    BidRoundRecord,
    BuyerRecord,
    ItemSpec,
    PolicyFault,
    RetailPosting,
    StepRecord,
    catalog_total_value,
)
from marketsim.errors import ConfigError, InvariantViolation
from marketsim.metrics import AgentMetrics, StepIndices, compute_agent_metrics, compute_market_indices
from marketsim.persona import Embedder, keyword_embedder, remote_embedder, sample_buyers, allocate_units
from marketsim.policies import (
    BidObservation,
    HistoryEntry,
    HistoryStep,
    ObservedFeedback,
    Policy,
    RetailObservation,
)


def initial_funds(catalog: Sequence[ItemSpec], m: int, alpha: float) -> int:
    """Starting balance per agent: floor(alpha * catalog value / m)."""
    if m < 1:
        raise ConfigError(f"agent count must be >= 1, got {m}")
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    return math.floor(alpha * catalog_total_value(catalog) / m)


class RngStreams:
    """Named, independent deterministic substreams derived from one seed.

    Streams are keyed by name (hash-split), so consuming draws on one
    stream can never perturb another; adding an agent only touches its own
    policy/<agent_id> stream.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, random.Random] = {}

    def stream(self, name: str) -> random.Random:
        rng = self._streams.get(name)
        if rng is None:
            digest = hashlib.sha256(f"{self.seed}:{name}".encode("utf-8")).digest()
            rng = random.Random(int.from_bytes(digest, "big"))
            self._streams[name] = rng
        return rng


def rng_streams(seed: int) -> RngStreams:
    return RngStreams(seed)


def schedule_quantities(total: int, steps: int, schedule: str) -> list[int]:
    """Split an episode-total quantity into per-step offer quantities."""
    if schedule == "even":
        base, rem = divmod(total, steps)
        return [base + (1 if t < rem else 0) for t in range(steps)]
    if schedule == "front_loaded":
        per = math.ceil(total / steps) if total else 0
        out = []
        remaining = total
        for _ in range(steps):
            take = min(per, remaining)
            out.append(take)
            remaining -= take
        return out
    if schedule == "all_at_step0":
        return [total] + [0] * (steps - 1)
    raise ConfigError(f"unknown supply schedule {schedule!r}")


def offers_for_step(config: EpisodeConfig, step: int) -> list[ItemSpec]:
    offers = []
    for item in config.catalog:
        per_step = schedule_quantities(item.quantity, config.steps, config.supply_schedule)
        offers.append(
            ItemSpec(
                item_id=item.item_id,
                base_price=item.base_price,
                quantity=per_step[step],
                category=item.category,
            )
        )
    return offers


def demand_targets(config: EpisodeConfig) -> list[int]:
    """Per-step demand totals: round(ratio * supply) split evenly over steps."""
    supply = sum(item.quantity for item in config.catalog)
    total = math.floor(config.supply_demand_ratio * supply + 0.5)
    base, rem = divmod(total, config.steps)
    return [base + (1 if t < rem else 0) for t in range(config.steps)]


def make_embedder(config: EpisodeConfig) -> Embedder:
    if config.embedder_kind == "keyword":
        return keyword_embedder(config.tribes)
    endpoint = config.embed_endpoint()
    if not endpoint:
        raise ConfigError(
            "embedder.kind is 'remote' but no endpoint configured "
            "(set embedder.endpoint or MARKETSIM_EMBED_ENDPOINT)"
        )
    return remote_embedder(endpoint, timeout=config.embedder_timeout)


@dataclass
class TrajectoryLog:
    """A full episode: config identity, per-step records, final metrics."""

    config: EpisodeConfig
    records: list[StepRecord]
    agent_metrics: dict[str, AgentMetrics]
    market_indices: list[StepIndices]
    protocol_version: int = PROTOCOL_VERSION
    schema_version: int = SCHEMA_VERSION
    config_hash: str = ""

    def __post_init__(self) -> None:
        if not self.config_hash:
            self.config_hash = self.config.config_hash()

    @property
    def seed(self) -> int:
        return self.config.seed


def _holding_charge(state: AgentState, base_prices: Mapping[str, int], rate: Fraction) -> int:
    if rate == 0:
        return 0
    value = sum(qty * base_prices[item_id] for item_id, qty in state.inventory.items())
    return math.floor(rate * value)


def _observed_feedback(feedback: RoundFeedback | None, agent_id: str) -> ObservedFeedback | None:
    if feedback is None:
        return None
    own = feedback.agents.get(agent_id)
    return ObservedFeedback(
        items=feedback.items,
        overspent=own.overspent if own else False,
        provisional_wins=dict(own.provisional_wins) if own else {},
    )


class _EpisodeRunner:
    def __init__(self, config: EpisodeConfig, policies: Mapping[str, Policy], embedder: Embedder):
        self.config = config
        self.policies = policies
        self.embedder = embedder
        self.streams = rng_streams(config.seed)
        self.agent_ids = config.agent_ids()
        k_init = initial_funds(config.catalog, config.agents, config.alpha)
        self.states = {a: AgentState(agent_id=a, funds=k_init) for a in self.agent_ids}
        self.history: list[HistoryStep] = []
        self.records: list[StepRecord] = []
        self.last_overspent = {a: False for a in self.agent_ids}
        self.cum_procured: dict[str, dict[str, int]] = {a: {} for a in self.agent_ids}
        self.cum_sold: dict[str, dict[str, int]] = {a: {} for a in self.agent_ids}
        self.demand_plan = demand_targets(config)
        self.persona_vectors = {
            tribe.name: self.embedder.embed(tribe.persona_text()) for tribe in config.tribes
        }
        self.catalog_order = {item.item_id: i for i, item in enumerate(config.catalog)}
        self.base_prices = {item.item_id: item.base_price for item in config.catalog}
        for agent_id in self.agent_ids:
            policies[agent_id].bind(agent_id, self.streams.stream(f"policy/{agent_id}"))

    # -- observation plumbing -------------------------------------------------

    def _history_window(self) -> tuple[HistoryStep, ...]:
        window = self.config.history_window
        if window > 0:
            return tuple(self.history[-window:])
        return tuple(self.history)

    def _inventory_view(self, state: AgentState) -> dict[str, int]:
        return {
            item.item_id: state.inventory.get(item.item_id, 0)
            for item in self.config.catalog
        }

    def _call(self, agent_id: str, stage: str, round_index: int, obs: Any,
              faults: list[PolicyFault]) -> Bid | RetailPosting:
        policy = self.policies[agent_id]
        try:
            if stage == "bid":
                action = policy.decide_bid(obs)
            else:
                action = policy.decide_retail(obs)
            if action is None:
                raise ValueError("policy returned None")
            return action
        except Exception as exc:  # any policy failure degrades to the zero action
            faults.append(
                PolicyFault(
                    agent_id=agent_id,
                    stage=stage,
                    round_index=round_index,
                    reason=f"{type(exc).__name__}: {exc}",
                )
            )
            return Bid() if stage == "bid" else RetailPosting()

    # -- stage A ---------------------------------------------------------------

    def _stage_procurement(
        self, step: int, offers: list[ItemSpec], faults: list[PolicyFault]
    ) -> tuple[list[BidRoundRecord], dict[str, Bid]]:
        rounds: list[BidRoundRecord] = []
        feedback: RoundFeedback | None = None
        final_valid: dict[str, Bid] = {}
        for round_index in range(1, self.config.bidding_rounds + 1):
            round_bids: dict[str, Bid] = {}
            overspent: dict[str, bool] = {}
            for agent_id in self.agent_ids:
                state = self.states[agent_id]
                if state.bankrupt:
                    continue
                obs = BidObservation(
                    step=step,
                    round_index=round_index,
                    round_max=self.config.bidding_rounds,
                    funds=state.funds,
                    overspent_last_bid=self.last_overspent[agent_id],
                    offers=tuple(offers),
                    inventory=self._inventory_view(state),
                    history=self._history_window(),
                    feedback=_observed_feedback(feedback, agent_id),
                )
                raw = self._call(agent_id, "bid", round_index, obs, faults)
                outcome = validate_bid(raw, state.funds, offers)
                if isinstance(outcome, BudgetViolation):
                    round_bids[agent_id] = outcome.bid
                    overspent[agent_id] = True
                    self.last_overspent[agent_id] = True
                else:
                    round_bids[agent_id] = outcome
                    overspent[agent_id] = False
                    self.last_overspent[agent_id] = False
            valid = {a: b for a, b in round_bids.items() if not overspent[a]}
            if round_index < self.config.bidding_rounds:
                feedback = make_round_feedback(
                    offers, valid, overspent, self.streams.stream("provisional_tie")
                )
                rounds.append(BidRoundRecord(round_index, round_bids, overspent, feedback))
            else:
                rounds.append(BidRoundRecord(round_index, round_bids, overspent, None))
                final_valid = valid
        return rounds, final_valid

    # -- stage B ---------------------------------------------------------------

    def _stage_retail(self, step: int, faults: list[PolicyFault]) -> dict[str, RetailPosting]:
        postings: dict[str, RetailPosting] = {}
        for agent_id in self.agent_ids:
            state = self.states[agent_id]
            if state.bankrupt:
                continue
            obs = RetailObservation(
                step=step,
                funds=state.funds,
                inventory=self._inventory_view(state),
                unit_cost=dict(state.unit_cost),
                history=self._history_window(),
            )
            posting = self._call(agent_id, "retail", 0, obs, faults)
            sellable = {
                item_id: price
                for item_id, price in posting.prices.items()
                if item_id in self.catalog_order and state.inventory.get(item_id, 0) > 0
            }
            if not sellable:
                continue  # nothing priced: invisible this step
            ordered = dict(
                sorted(sellable.items(), key=lambda kv: self.catalog_order[kv[0]])
            )
            postings[agent_id] = RetailPosting(prices=ordered, slogan=posting.slogan)
        return postings

    def _match_buyers(
        self, step: int, postings: Mapping[str, RetailPosting]
    ) -> list[tuple[Any, list[str]]]:
        buyers = sample_buyers(
            self.config.buyers_per_step,
            self.config.tribes,
            self.config.rho_default,
            self.streams.stream("buyer_gen"),
            id_prefix=f"s{step}b",
        )
        weights = {item.item_id: item.quantity for item in self.config.catalog}
        buyers = allocate_units(
            buyers, weights, self.demand_plan[step], self.streams.stream("demand_alloc")
        )
        slogan_vectors = {
            agent_id: self.embedder.embed(posting.slogan)
            for agent_id, posting in postings.items()
        }
        gated = []
        consideration_rng = self.streams.stream("consideration")
        for buyer in buyers:
            eligible = {}
            persona_vec = self.persona_vectors[buyer.tribe]
            for agent_id, posting in postings.items():
                if buyer.item_id not in posting.prices:
                    continue
                sim = similarity(slogan_vectors[agent_id], persona_vec)
                eligible[agent_id] = attention_weight(sim, buyer.lambda_, self.config.tau)
            gate = consideration_set(
                eligible, buyer.rho, self.config.k_max, len(eligible), consideration_rng
            )
            gated.append((buyer, gate))
        return gated

    # -- invariants --------------------------------------------------------------

    def _check_step(self, record: StepRecord, funds_before: int, buyer_spend: int) -> None:
        problems: list[str] = []
        funds_after = sum(s.funds for s in record.snapshot.values())
        holding_total = sum(record.holding_costs.values())
        if funds_after - funds_before != buyer_spend - record.supplier_revenue - holding_total:
            problems.append(
                f"money conservation broke: delta_funds={funds_after - funds_before} "
                f"buyer_spend={buyer_spend} supplier_revenue={record.supplier_revenue} "
                f"holding={holding_total}"
            )
        for item in record.offers:
            awarded = record.allocation.item_total(item.item_id)
            if awarded > item.quantity:
                problems.append(
                    f"supply cap broke on {item.item_id}: awarded {awarded} > {item.quantity}"
                )
        for agent_id, state in record.snapshot.items():
            for item_id, qty in state.inventory.items():
                if qty < 0:
                    problems.append(f"negative inventory: {agent_id}/{item_id}={qty}")
                procured = self.cum_procured[agent_id].get(item_id, 0)
                sold = self.cum_sold[agent_id].get(item_id, 0)
                if procured != qty + sold:
                    problems.append(
                        f"unit conservation broke for {agent_id}/{item_id}: "
                        f"procured={procured} inventory={qty} sold={sold}"
                    )
        if problems:
            dump = json.dumps(record.to_json(), sort_keys=True)
            raise InvariantViolation(
                f"step {record.step}: " + "; ".join(problems) + f"\nrecord: {dump}"
            )

    # -- main loop ---------------------------------------------------------------

    def run(self) -> list[StepRecord]:
        holding_rate = Fraction(str(self.config.holding_rate))
        for step in range(self.config.steps):
            faults: list[PolicyFault] = []
            offers = offers_for_step(self.config, step)
            funds_before = sum(s.funds for s in self.states.values())

            rounds, final_valid = self._stage_procurement(step, offers, faults)
            allocation = settle(offers, final_valid, self.streams.stream("tie_break"))
            self.states, supplier_revenue = apply_allocations(self.states, allocation)
            for (agent_id, item_id), award in allocation.awards.items():
                bucket = self.cum_procured[agent_id]
                bucket[item_id] = bucket.get(item_id, 0) + award.qty_won

            postings = self._stage_retail(step, faults)
            gated = self._match_buyers(step, postings)
            purchases, stockouts, self.states = execute_purchases(
                step,
                gated,
                postings,
                self.states,
                self.streams.stream("purchase_tie"),
                cascade=self.config.cascade,
            )
            buyer_spend = 0
            for event in purchases:
                buyer_spend += event.qty * event.unit_price
                bucket = self.cum_sold[event.seller_id]
                bucket[event.item_id] = bucket.get(event.item_id, 0) + event.qty

            holding_costs = {}
            for agent_id in self.agent_ids:
                state = self.states[agent_id]
                charge = _holding_charge(state, self.base_prices, holding_rate)
                state.funds -= charge
                holding_costs[agent_id] = charge
                if state.funds < 0:
                    state.bankrupt = True

            record = StepRecord(
                step=step,
                offers=offers,
                rounds=rounds,
                allocation=allocation,
                supplier_revenue=supplier_revenue,
                postings=postings,
                buyers=[
                    BuyerRecord(
                        buyer_id=buyer.buyer_id,
                        tribe=buyer.tribe,
                        lambda_=buyer.lambda_,
                        rho=buyer.rho,
                        item_id=buyer.item_id,
                        qty=buyer.qty,
                        consideration_set=tuple(gate),
                    )
                    for buyer, gate in gated
                ],
                purchases=purchases,
                stockouts=stockouts,
                policy_faults=faults,
                holding_costs=holding_costs,
                snapshot={a: self.states[a].clone() for a in self.agent_ids},
            )
            self._check_step(record, funds_before, buyer_spend)
            self.records.append(record)

            sold_units = {a: 0 for a in self.agent_ids}
            revenue = {a: 0 for a in self.agent_ids}
            for event in purchases:
                sold_units[event.seller_id] += event.qty
                revenue[event.seller_id] += event.qty * event.unit_price
            entries = tuple(
                HistoryEntry(
                    agent_id=agent_id,
                    prices=tuple(postings[agent_id].prices.items()),
                    slogan=postings[agent_id].slogan,
                    units_sold=sold_units[agent_id],
                    revenue=revenue[agent_id],
                )
                for agent_id in sorted(postings)
            )
            self.history.append(HistoryStep(step=step, entries=entries))
        return self.records


def run_episode(
    config: EpisodeConfig, policies: Mapping[str, Policy] | None = None
) -> TrajectoryLog:
    """Run one full episode and return its trajectory with inline metrics.

    Policies default to the config's bindings; pass a mapping to override.
    The result is byte-reproducible for a fixed (config, seed).
    """
    config.validate()
    own_policies = policies is None
    if policies is None:
        policies = {a: build_policy(config.policy_binding(a)) for a in config.agent_ids()}
    missing = [a for a in config.agent_ids() if a not in policies]
    if missing:
        raise ConfigError(f"no policy bound for agents: {missing}")
    embedder = make_embedder(config)
    try:
        runner = _EpisodeRunner(config, policies, embedder)
        records = runner.run()
    finally:
        if own_policies:
            for policy in policies.values():
                policy.close()
    agent_metrics = compute_agent_metrics(
        records, config.tribes, embedder, mms_basis=config.mms_basis
    )
    market_indices = compute_market_indices(records)
    return TrajectoryLog(
        config=config,
        records=records,
        agent_metrics=agent_metrics,
        market_indices=market_indices,
    )
