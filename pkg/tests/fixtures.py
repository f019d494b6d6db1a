"""Hand-built 3-agent, 3-step trajectory with fully hand-derived oracle
values for every per-agent metric and market index.

The trace (funds start at 1000, no holding costs):

  step 0: A wins 10 g1 @12, sells 6 @15           -> profit 18, inv 4
          B wins  3 g2 @20 (bid 5), sells 3 @40,
            2 units unfilled                      -> profit 60, inv 0
          C wins 20 g1 @11, sells 10 @13          -> profit 20, inv 10
  step 1: A wins  5 g1 @13 (basis 113/9), sells 9 @14,
            3 unfilled                            -> profit 13, inv 0
          B wins  4 g2 @22, sells 2 @30           -> profit 16, inv 2
          C idle                                  -> profit 0,  inv 10
  step 2: A wins  2 g2 @25, sells 1 @30           -> profit 5,  inv 1
          B sells 2 @35, 2 unfilled               -> profit 26, inv 0
          C sells 10 @16, 2 unfilled              -> profit 50, inv 0
"""

from __future__ import annotations

from fractions import Fraction

from marketsim.domain import (
    AgentState,
    Allocation,
    Award,
    Bid,
    BidLine,
    BidRoundRecord,
    BuyerRecord,
    EmbeddingVector,
    ItemSpec,
    PurchaseEvent,
    RetailPosting,
    StepRecord,
    StockoutAttempt,
)
from marketsim.persona import Embedder, TribeSpec

_SQ75 = 0.75 ** 0.5
_SQ51 = 0.51 ** 0.5
_SQ19 = 0.19 ** 0.5

_VECTORS = {
    "SA": (1.0, 0.0, 0.0, 0.0),
    "SB": (0.0, 1.0, 0.0, 0.0),
    "SC": (0.0, 0.0, 1.0, 0.0),
    "P1": (1.0, 0.0, 0.0, 0.0),   # cos SA = 1.0
    "P2": (0.6, 0.8, 0.0, 0.0),   # cos SA = 0.6, cos SB = 0.8
    "P3": (0.0, _SQ75, 0.5, 0.0),  # cos SA = 0.0, cos SC = 0.5
    "P5": (_SQ51, 0.7, 0.0, 0.0),  # cos SB = 0.7
    "P6": (0.8, 0.6, 0.0, 0.0),   # cos SA = 0.8, cos SB = 0.6
    "P7": (_SQ19, 0.0, 0.9, 0.0),  # cos SC = 0.9
}


class FixtureEmbedder(Embedder):
    @property
    def dim(self) -> int:
        return 4

    def embed(self, text: str) -> EmbeddingVector:
        return EmbeddingVector(components=_VECTORS[text])


def fixture_tribes() -> list[TribeSpec]:
    names = ["T1", "T2", "T3", "T5", "T6", "T7"]
    return [
        TribeSpec(name=n, weight=1 / 6, lambda_=0.5, persona_template=f"P{n[1]}")
        for n in names
    ]


def _buyer(buyer_id, tribe, item_id, qty, gate):
    return BuyerRecord(
        buyer_id=buyer_id,
        tribe=tribe,
        lambda_=0.5,
        rho=0.6,
        item_id=item_id,
        qty=qty,
        consideration_set=tuple(gate),
    )


def _snapshot(agent_id, funds, inventory, unit_cost):
    return AgentState(
        agent_id=agent_id,
        funds=funds,
        inventory=dict(inventory),
        unit_cost={k: Fraction(*v) if isinstance(v, tuple) else Fraction(v) for k, v in unit_cost.items()},
    )


def build_fixture_records() -> list[StepRecord]:
    steps = []

    offers0 = [ItemSpec("g1", base_price=10, quantity=30), ItemSpec("g2", base_price=20, quantity=3)]
    bids0 = {
        "A": Bid(lines={"g1": BidLine(10, 12)}),
        "B": Bid(lines={"g2": BidLine(5, 20)}),
        "C": Bid(lines={"g1": BidLine(20, 11)}),
    }
    steps.append(
        StepRecord(
            step=0,
            offers=offers0,
            rounds=[BidRoundRecord(1, bids0, {a: False for a in "ABC"})],
            allocation=Allocation(
                awards={
                    ("A", "g1"): Award(10, 12),
                    ("C", "g1"): Award(20, 11),
                    ("B", "g2"): Award(3, 20),
                }
            ),
            supplier_revenue=400,
            postings={
                "A": RetailPosting(prices={"g1": 15}, slogan="SA"),
                "B": RetailPosting(prices={"g2": 40}, slogan="SB"),
                "C": RetailPosting(prices={"g1": 13}, slogan="SC"),
            },
            buyers=[
                _buyer("u0", "T1", "g1", 6, ("A",)),
                _buyer("u1", "T2", "g2", 5, ("B",)),
                _buyer("u2", "T3", "g1", 10, ("A", "C")),
            ],
            purchases=[
                PurchaseEvent(0, "u0", "A", "g1", 6, 15),
                PurchaseEvent(0, "u1", "B", "g2", 3, 40),
                PurchaseEvent(0, "u2", "C", "g1", 10, 13),
            ],
            stockouts=[StockoutAttempt(0, "u1", "B", "g2", 2)],
            policy_faults=[],
            holding_costs={"A": 0, "B": 0, "C": 0},
            snapshot={
                "A": _snapshot("A", 970, {"g1": 4}, {"g1": 12}),
                "B": _snapshot("B", 1060, {"g2": 0}, {"g2": 20}),
                "C": _snapshot("C", 910, {"g1": 10}, {"g1": 11}),
            },
        )
    )

    offers1 = [ItemSpec("g1", base_price=10, quantity=5), ItemSpec("g2", base_price=20, quantity=4)]
    bids1 = {
        "A": Bid(lines={"g1": BidLine(5, 13)}),
        "B": Bid(lines={"g2": BidLine(4, 22)}),
        "C": Bid(),
    }
    steps.append(
        StepRecord(
            step=1,
            offers=offers1,
            rounds=[BidRoundRecord(1, bids1, {a: False for a in "ABC"})],
            allocation=Allocation(
                awards={("A", "g1"): Award(5, 13), ("B", "g2"): Award(4, 22)}
            ),
            supplier_revenue=153,
            postings={
                "A": RetailPosting(prices={"g1": 14}, slogan="SA"),
                "B": RetailPosting(prices={"g2": 30}, slogan="SB"),
            },
            buyers=[
                _buyer("v0", "T2", "g1", 12, ("A",)),
                _buyer("v1", "T5", "g2", 2, ("B",)),
            ],
            purchases=[
                PurchaseEvent(1, "v0", "A", "g1", 9, 14),
                PurchaseEvent(1, "v1", "B", "g2", 2, 30),
            ],
            stockouts=[StockoutAttempt(1, "v0", "A", "g1", 3)],
            policy_faults=[],
            holding_costs={"A": 0, "B": 0, "C": 0},
            snapshot={
                "A": _snapshot("A", 1031, {"g1": 0}, {"g1": (113, 9)}),
                "B": _snapshot("B", 1032, {"g2": 2}, {"g2": 22}),
                "C": _snapshot("C", 910, {"g1": 10}, {"g1": 11}),
            },
        )
    )

    offers2 = [ItemSpec("g1", base_price=10, quantity=0), ItemSpec("g2", base_price=20, quantity=2)]
    bids2 = {
        "A": Bid(lines={"g2": BidLine(2, 25)}),
        "B": Bid(),
        "C": Bid(),
    }
    steps.append(
        StepRecord(
            step=2,
            offers=offers2,
            rounds=[BidRoundRecord(1, bids2, {a: False for a in "ABC"})],
            allocation=Allocation(awards={("A", "g2"): Award(2, 25)}),
            supplier_revenue=50,
            postings={
                "A": RetailPosting(prices={"g2": 30}, slogan="SA"),
                "B": RetailPosting(prices={"g2": 35}, slogan="SB"),
                "C": RetailPosting(prices={"g1": 16}, slogan="SC"),
            },
            buyers=[
                _buyer("w0", "T6", "g2", 4, ("B",)),
                _buyer("w1", "T7", "g1", 12, ("C",)),
                _buyer("w2", "T6", "g2", 1, ("A",)),
            ],
            purchases=[
                PurchaseEvent(2, "w0", "B", "g2", 2, 35),
                PurchaseEvent(2, "w1", "C", "g1", 10, 16),
                PurchaseEvent(2, "w2", "A", "g2", 1, 30),
            ],
            stockouts=[
                StockoutAttempt(2, "w0", "B", "g2", 2),
                StockoutAttempt(2, "w1", "C", "g1", 2),
            ],
            policy_faults=[],
            holding_costs={"A": 0, "B": 0, "C": 0},
            snapshot={
                "A": _snapshot("A", 1011, {"g1": 0, "g2": 1}, {"g1": (113, 9), "g2": 25}),
                "B": _snapshot("B", 1102, {"g2": 0}, {"g2": 22}),
                "C": _snapshot("C", 1070, {"g1": 0}, {"g1": 11}),
            },
        )
    )
    return steps


# Hand-derived expectations (eps = 1e-9 everywhere it appears in a formula).
FIXTURE_AGENT_EXPECTATIONS = {
    "A": {
        "npm": 0.14634146341403928,
        "pi": 36.0,
        "rar": 2.2412621024942805,
        "iei": 0.9056603773072267,
        "stockout_rate": 0.157894736833795,
        "bid_efficiency": 0.8085106382468725,
        "osi": 0.9648828922685333,
        "fill_rate": 0.8421052631135734,
        "mms": 0.6,
        "mms_interactions": 4,
    },
    "B": {
        "npm": 0.407999999998368,
        "pi": 102.0,
        "rar": 1.8053804296863465,
        "iei": 0.9130434781417769,
        "stockout_rate": 0.36363636360330576,
        "bid_efficiency": 0.7357357356490162,
        "osi": 0.6551359035430615,
        "fill_rate": 0.6363636363057851,
        "mms": 0.7,
        "mms_interactions": 3,
    },
    "C": {
        "npm": 0.24137931034399526,
        "pi": 70.0,
        "rar": 1.1355499478600746,
        "iei": 0.7499999999718749,
        "stockout_rate": 0.09090909090495868,
        "bid_efficiency": 0.9090909090413224,
        "osi": 0.5857864376633012,
        "fill_rate": 0.9090909090495868,
        "mms": 0.7,
        "mms_interactions": 2,
    },
}

FIXTURE_INDEX_EXPECTATIONS = [
    {
        "gini": 0.034013605442176874,
        "theil": 0.0019703580088179288,
        "cv": 0.06290218370370088,
        "hhi": 0.3408304498269896,
        "cr4": 1.0,
        "active_ratio": 1.0,
    },
    {
        "gini": 0.027357327054602535,
        "theil": 0.0016944669788708094,
        "cv": 0.05779727972734397,
        "hhi": 0.34681721580476804,
        "cr4": 1.0,
        "active_ratio": 2 / 3,
    },
    {
        "gini": 0.01905958739134988,
        "theil": 0.0006337792217493773,
        "cv": 0.03552472391424651,
        "hhi": 0.33524982356635524,
        "cr4": 1.0,
        "active_ratio": 1.0,
    },
]
