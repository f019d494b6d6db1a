import http.server
import json
import math
import random
import threading
from collections import Counter

import pytest

from marketsim.domain import ItemSpec
from marketsim.errors import ConfigError, EmbeddingUnavailable
from marketsim.persona import (
    TribeSpec,
    allocate_demand,
    allocate_units,
    default_tribes,
    keyword_embedder,
    remote_embedder,
    sample_buyers,
)


class TestSampleBuyers:
    def test_k_zero_empty(self):
        assert sample_buyers(0, default_tribes(), 0.6, random.Random(0)) == []

    def test_single_tribe_all_buyers(self):
        tribes = [TribeSpec(name="Solo", weight=1.0, lambda_=0.3, keywords=("one",))]
        buyers = sample_buyers(50, tribes, 0.6, random.Random(1))
        assert {b.tribe for b in buyers} == {"Solo"}
        assert all(b.rho == 0.6 and b.lambda_ == 0.3 for b in buyers)

    def test_default_weights_frequencies(self):
        buyers = sample_buyers(100_000, default_tribes(), 0.6, random.Random(7))
        counts = Counter(b.tribe for b in buyers)
        expected = {"Thrifty": 0.4, "Ethical": 0.3, "Hype": 0.2, "Quality": 0.1}
        for tribe, share in expected.items():
            assert abs(counts[tribe] / 100_000 - share) < 0.01

    def test_unnormalized_weights_rejected(self):
        tribes = [TribeSpec(name="X", weight=0.5, lambda_=0.1)]
        with pytest.raises(ConfigError):
            sample_buyers(1, tribes, 0.6, random.Random(0))

    def test_seed_determinism(self):
        first = sample_buyers(200, default_tribes(), 0.6, random.Random(42))
        second = sample_buyers(200, default_tribes(), 0.6, random.Random(42))
        assert first == second

    def test_per_tribe_rho_override(self):
        tribes = [TribeSpec(name="Patient", weight=1.0, lambda_=0.1, rho=0.9)]
        buyers = sample_buyers(5, tribes, 0.6, random.Random(0))
        assert all(b.rho == 0.9 for b in buyers)


class TestAllocateDemand:
    def test_total_exact_for_default_scale(self):
        catalog = [
            ItemSpec("a", base_price=1, quantity=600),
            ItemSpec("b", base_price=1, quantity=400),
        ]
        for seed in range(20):
            buyers = sample_buyers(200, default_tribes(), 0.6, random.Random(seed))
            filled = allocate_demand(buyers, catalog, 0.95, random.Random(seed))
            assert sum(b.qty for b in filled) == 950
            assert all(b.qty >= 1 for b in filled)

    def test_zero_demand_drops_everyone(self):
        catalog = [ItemSpec("a", base_price=1, quantity=0)]
        buyers = sample_buyers(10, default_tribes(), 0.6, random.Random(0))
        assert allocate_demand(buyers, catalog, 0.95, random.Random(0)) == []

    def test_item_share_tracks_supply(self):
        catalog = [
            ItemSpec("big", base_price=1, quantity=900),
            ItemSpec("small", base_price=1, quantity=100),
        ]
        rng = random.Random(314)
        share_sum = 0.0
        trials = 400
        for _ in range(trials):
            buyers = sample_buyers(100, default_tribes(), 0.6, rng)
            filled = allocate_demand(buyers, catalog, 1.0, rng)
            units_big = sum(b.qty for b in filled if b.item_id == "big")
            share_sum += units_big / 1000
        assert abs(share_sum / trials - 0.9) < 0.01

    def test_units_exceed_buyers_everyone_gets_at_least_one(self):
        buyers = sample_buyers(7, default_tribes(), 0.6, random.Random(3))
        filled = allocate_units(buyers, {"a": 10}, 30, random.Random(3))
        assert len(filled) == 7
        assert sum(b.qty for b in filled) == 30
        assert min(b.qty for b in filled) >= 1

    def test_fewer_units_than_buyers_drops_zeros(self):
        buyers = sample_buyers(50, default_tribes(), 0.6, random.Random(4))
        filled = allocate_units(buyers, {"a": 10}, 8, random.Random(4))
        assert sum(b.qty for b in filled) == 8
        assert all(b.qty >= 1 for b in filled)
        assert len(filled) <= 8


class TestKeywordEmbedder:
    def test_matching_tribe_component_largest(self):
        tribes = default_tribes()
        emb = keyword_embedder(tribes)
        vec = emb.embed("green fair eco")
        ethical_index = [t.name for t in tribes].index("Ethical")
        assert vec.components[ethical_index] == max(vec.components)

    def test_deterministic(self):
        emb = keyword_embedder(default_tribes())
        assert emb.embed("some slogan here") == emb.embed("some slogan here")

    def test_keyword_overlap_orders_cosine(self):
        emb = keyword_embedder(default_tribes())
        hype = emb.embed("exclusive limited drop")
        thrift = emb.embed("budget value cheap")
        hype_like = emb.embed("exclusive limited edition")
        assert hype.dot(thrift) < hype.dot(hype_like)

    def test_unit_norm_and_zero_fallback(self):
        emb = keyword_embedder(default_tribes())
        vec = emb.embed("completely unrelated words")
        assert math.isclose(vec.norm(), 1.0, rel_tol=1e-12)
        empty = emb.embed("")
        assert empty.components[0] == 1.0
        assert math.isclose(empty.norm(), 1.0, rel_tol=1e-12)

    def test_dim_constant(self):
        emb = keyword_embedder(default_tribes(), buckets=32)
        assert emb.dim == 4 + 32
        assert emb.embed("x").dim == emb.dim


class _EmbedHandler(http.server.BaseHTTPRequestHandler):
    calls = 0
    dim = 3

    def do_POST(self):
        type(self).calls += 1
        n = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(n))
        vectors = [[float(len(t)), 1.0, 0.0][: self.dim] for t in payload["texts"]]
        body = json.dumps({"vectors": vectors}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def embed_server():
    _EmbedHandler.calls = 0
    _EmbedHandler.dim = 3
    server = http.server.HTTPServer(("127.0.0.1", 0), _EmbedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/embed"
    server.shutdown()


class TestRemoteEmbedder:
    def test_batch_is_single_request_and_cache_hits(self, embed_server):
        emb = remote_embedder(embed_server)
        emb.embed_many(["alpha", "beta", "gamma"])
        assert _EmbedHandler.calls == 1
        emb.embed("alpha")
        emb.embed_many(["beta", "gamma"])
        assert _EmbedHandler.calls == 1  # all cached

    def test_wrong_dim_raises(self, embed_server):
        emb = remote_embedder(embed_server)
        emb.embed("ab")
        _EmbedHandler.dim = 2
        with pytest.raises(EmbeddingUnavailable):
            emb.embed("much longer text")

    def test_unreachable_endpoint_raises(self):
        emb = remote_embedder("http://127.0.0.1:1/none", timeout=0.2)
        with pytest.raises(EmbeddingUnavailable):
            emb.embed("hello")
