"""Buyer generation: tribe sampling, demand allocation, and embedders.

Buyers are drawn i.i.d. from a weighted mixture of persona tribes; each
buyer then receives a single-item demand so that total demanded units hit
the supply-demand target exactly. The embedding function is abstracted
behind `Embedder`: a deterministic keyword-count embedder ships as the
reference backend, and any HTTP service speaking the simple
{"texts": [...]} -> {"vectors": [[...]]} contract can replace it.
"""

from __future__ import annotations

import hashlib
import math
import random
import re
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import requests

from marketsim.domain import BuyerPersona, EmbeddingVector, ItemSpec
from marketsim.errors import ConfigError, EmbeddingUnavailable

WEIGHT_TOLERANCE = 1e-9
HASH_BUCKETS = 32

_TOKEN_RE = re.compile(r"[a-z0-9']+")


@dataclass(frozen=True)
class TribeSpec:
    """One buyer archetype: mixture weight, slogan sensitivity, keywords."""

    name: str
    weight: float
    lambda_: float
    keywords: tuple[str, ...] = ()
    persona_template: str = ""
    rho: float | None = None  # per-tribe patience override

    def persona_text(self) -> str:
        template = self.persona_template or "A {name} shopper."
        text = template.replace("{keywords}", " ".join(self.keywords))
        return text.replace("{name}", self.name.lower())

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "weight": self.weight,
            "lambda": self.lambda_,
            "keywords": list(self.keywords),
            "persona_template": self.persona_template,
            "rho": self.rho,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "TribeSpec":
        return cls(
            name=data["name"],
            weight=data["weight"],
            lambda_=data["lambda"],
            keywords=tuple(data.get("keywords", ())),
            persona_template=data.get("persona_template", ""),
            rho=data.get("rho"),
        )


def default_tribes() -> list[TribeSpec]:
    """The built-in four-tribe mixture used by the shipped default config."""
    return [
        TribeSpec(
            name="Thrifty",
            weight=0.4,
            lambda_=0.2,
            keywords=("cheap", "budget", "value", "save", "deal"),
            persona_template="Budget-conscious shopper always hunting for {keywords} offers.",
        ),
        TribeSpec(
            name="Ethical",
            weight=0.3,
            lambda_=0.8,
            keywords=("green", "fair", "eco"),
            persona_template="Mindful consumer who chooses {keywords} products whenever possible.",
        ),
        TribeSpec(
            name="Hype",
            weight=0.2,
            lambda_=0.9,
            keywords=("exclusive", "limited"),
            persona_template="Trend-driven shopper chasing {keywords} drops before they sell out.",
        ),
        TribeSpec(
            name="Quality",
            weight=0.1,
            lambda_=0.5,
            keywords=("quality", "craft"),
            persona_template="Discerning buyer who pays for {keywords} goods that last.",
        ),
    ]


def check_tribe_weights(tribes: Sequence[TribeSpec]) -> None:
    total = sum(t.weight for t in tribes)
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        raise ConfigError(f"tribe weights must sum to 1, got {total!r}")


def sample_buyers(
    k: int,
    tribes: Sequence[TribeSpec],
    rho_default: float,
    rng: random.Random,
    id_prefix: str = "b",
) -> list[BuyerPersona]:
    """Draw `k` buyers i.i.d. from the tribe mixture (no demand yet)."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    check_tribe_weights(tribes)
    cumulative: list[float] = []
    acc = 0.0
    for tribe in tribes:
        acc += tribe.weight
        cumulative.append(acc)
    buyers = []
    for i in range(k):
        idx = bisect_right(cumulative, rng.random() * acc)
        tribe = tribes[min(idx, len(tribes) - 1)]
        rho = tribe.rho if tribe.rho is not None else rho_default
        buyers.append(
            BuyerPersona(
                buyer_id=f"{id_prefix}{i:04d}",
                tribe=tribe.name,
                persona_text=tribe.persona_text(),
                lambda_=tribe.lambda_,
                rho=rho,
            )
        )
    return buyers


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def allocate_units(
    buyers: Sequence[BuyerPersona],
    item_weights: Mapping[str, int],
    total_units: int,
    rng: random.Random,
) -> list[BuyerPersona]:
    """Assign single-item demands summing to exactly `total_units`.

    Each buyer first picks its item in proportion to `item_weights`; the
    units are then split over buyers multinomially. When units outnumber
    buyers, zero-quantity buyers are topped up to one unit taken from the
    largest holder so every buyer stays a live participant; otherwise the
    zero-quantity buyers are dropped. The total is preserved exactly.
    """
    if total_units <= 0 or not buyers:
        return []
    items = [item_id for item_id, weight in item_weights.items() if weight > 0]
    if not items:
        return []
    cumulative: list[int] = []
    acc = 0
    for item_id in items:
        acc += item_weights[item_id]
        cumulative.append(acc)
    chosen = []
    for _ in buyers:
        pick = rng.random() * acc
        chosen.append(items[min(bisect_right(cumulative, pick), len(items) - 1)])

    counts = [0] * len(buyers)
    for _ in range(total_units):
        counts[rng.randrange(len(buyers))] += 1

    if total_units >= len(buyers):
        for i, count in enumerate(counts):
            if count > 0:
                continue
            donor = max(range(len(buyers)), key=lambda j: counts[j])
            counts[donor] -= 1
            counts[i] = 1
    return [
        buyer.with_demand(chosen[i], counts[i])
        for i, buyer in enumerate(buyers)
        if counts[i] >= 1
    ]


def allocate_demand(
    buyers: Sequence[BuyerPersona],
    catalog: Sequence[ItemSpec],
    ratio: float,
    rng: random.Random,
) -> list[BuyerPersona]:
    """Fill buyer demands so total units equal round(ratio * supply).

    Item choice is proportional to catalog supply; see `allocate_units`
    for the exact split and repair rules.
    """
    if ratio <= 0:
        raise ValueError(f"ratio must be > 0, got {ratio}")
    supply = sum(item.quantity for item in catalog)
    target = round_half_up(ratio * supply)
    weights = {item.item_id: item.quantity for item in catalog}
    return allocate_units(buyers, weights, target, rng)


class Embedder:
    """Maps text to a fixed-dimension vector, deterministically per episode."""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def embed(self, text: str) -> EmbeddingVector:
        raise NotImplementedError

    def embed_many(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self.embed(t) for t in texts]


def _stable_bucket(token: str, buckets: int) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % buckets


class KeywordEmbedder(Embedder):
    """Reference embedder: tribe-keyword counts plus hashed token buckets.

    Component t counts occurrences of tribe t's keywords (case-insensitive);
    every other token lands in one of `buckets` hash components. Vectors are
    L2-normalized, so cosine similarity reduces to a dot product. The zero
    vector maps to the first basis vector.
    """

    def __init__(self, tribes: Sequence[TribeSpec], buckets: int = HASH_BUCKETS):
        self._keyword_sets = [
            frozenset(kw.lower() for kw in tribe.keywords) for tribe in tribes
        ]
        self._buckets = buckets
        self._dim = len(self._keyword_sets) + buckets
        self._cache: dict[str, EmbeddingVector] = {}

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, text: str) -> EmbeddingVector:
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        counts = [0.0] * self._dim
        n_tribes = len(self._keyword_sets)
        for token in _TOKEN_RE.findall(text.lower()):
            matched = False
            for t, keywords in enumerate(self._keyword_sets):
                if token in keywords:
                    counts[t] += 1.0
                    matched = True
            if not matched:
                counts[n_tribes + _stable_bucket(token, self._buckets)] += 1.0
        norm = math.sqrt(sum(c * c for c in counts))
        if norm == 0.0:
            counts[0] = 1.0
        else:
            counts = [c / norm for c in counts]
        vector = EmbeddingVector(components=tuple(counts))
        self._cache[text] = vector
        return vector


def keyword_embedder(
    tribes: Sequence[TribeSpec], buckets: int = HASH_BUCKETS
) -> KeywordEmbedder:
    return KeywordEmbedder(tribes, buckets=buckets)


@dataclass
class RemoteEmbedderConfig:
    endpoint: str
    timeout: float = 30.0
    batch_size: int = 64


class RemoteEmbedder(Embedder):
    """HTTP-backed embedder with an exact-text cache.

    POSTs {"texts": [...]} and expects {"vectors": [[...], ...]} with one
    vector per input, all the same dimension. Any transport failure or
    contract violation raises `EmbeddingUnavailable`; there is no silent
    fallback.
    """

    def __init__(self, config: RemoteEmbedderConfig):
        self._config = config
        self._cache: dict[str, EmbeddingVector] = {}
        self._dim: int | None = None

    @property
    def dim(self) -> int:
        if self._dim is None:
            raise EmbeddingUnavailable("remote embedder dimension unknown before first call")
        return self._dim

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        for start in range(0, len(missing), self._config.batch_size):
            batch = missing[start : start + self._config.batch_size]
            self._fetch(batch)
        return [self._cache[t] for t in texts]

    def _fetch(self, batch: list[str]) -> None:
        if not batch:
            return
        try:
            response = requests.post(
                self._config.endpoint,
                json={"texts": batch},
                timeout=self._config.timeout,
            )
            response.raise_for_status()
            payload = response.json()
        except requests.RequestException as exc:
            raise EmbeddingUnavailable(f"embedding request failed: {exc}") from exc
        except ValueError as exc:
            raise EmbeddingUnavailable(f"embedding response not JSON: {exc}") from exc
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(batch):
            raise EmbeddingUnavailable(
                f"embedding service returned {len(vectors) if isinstance(vectors, list) else 'no'} "
                f"vectors for {len(batch)} texts"
            )
        for text, raw in zip(batch, vectors):
            try:
                vector = EmbeddingVector(components=tuple(float(x) for x in raw))
            except (TypeError, ValueError) as exc:
                raise EmbeddingUnavailable(f"malformed embedding vector: {exc}") from exc
            if self._dim is None:
                self._dim = vector.dim
            elif vector.dim != self._dim:
                raise EmbeddingUnavailable(
                    f"embedding dimension changed: {vector.dim} != {self._dim}"
                )
            self._cache[text] = vector


def remote_embedder(
    endpoint: str, timeout: float = 30.0, batch_size: int = 64
) -> RemoteEmbedder:
    return RemoteEmbedder(RemoteEmbedderConfig(endpoint, timeout, batch_size))
