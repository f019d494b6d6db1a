"""External agent bridge: JSON wire protocol over stdio or HTTP.

Every engine request is one JSON object carrying the observation payload,
the name of the expected reply schema, and a rendered prompt for LLM-backed
agents. Replies must be strict JSON actions. Any parse failure, schema
violation, or timeout yields the zero action and a recorded policy fault;
a broken transport can never corrupt engine state or crash the episode.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from typing import Any, Mapping, Sequence

import requests

from marketsim.domain import Bid, BidLine, RetailPosting
from marketsim.policies import BidObservation, Policy, RetailObservation
from marketsim.prompts import render_bid_prompt, render_retail_prompt

PROTOCOL_VERSION = 1

BID_SCHEMA = {"name": "bid_action", "version": 1}
RETAIL_SCHEMA = {"name": "retail_action", "version": 1}


class ProtocolError(RuntimeError):
    """Malformed, mis-typed, or missing reply from an external agent."""


def _as_int(value: Any, context: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProtocolError(f"{context} must be an integer, got {value!r}")
    if value < 0:
        raise ProtocolError(f"{context} must be >= 0, got {value}")
    return value


def parse_bid_action(data: Any) -> Bid:
    """Validate a bid_action reply: {"bids": {item: {"qty": n, "price": n}}}."""
    if not isinstance(data, dict):
        raise ProtocolError(f"bid reply must be a JSON object, got {type(data).__name__}")
    bids = data.get("bids")
    if not isinstance(bids, dict):
        raise ProtocolError("bid reply missing 'bids' object")
    lines = {}
    for item_id, entry in bids.items():
        if not isinstance(entry, dict):
            raise ProtocolError(f"bids[{item_id!r}] must be an object")
        unknown = set(entry) - {"qty", "price"}
        if unknown:
            raise ProtocolError(f"bids[{item_id!r}] has unknown keys {sorted(unknown)}")
        lines[item_id] = BidLine(
            _as_int(entry.get("qty"), f"bids[{item_id!r}].qty"),
            _as_int(entry.get("price"), f"bids[{item_id!r}].price"),
        )
    return Bid(lines=lines)


def parse_retail_action(data: Any) -> RetailPosting:
    """Validate a retail_action reply: {"prices": {item: n}, "slogan": str}."""
    if not isinstance(data, dict):
        raise ProtocolError(f"retail reply must be a JSON object, got {type(data).__name__}")
    prices = data.get("prices")
    if not isinstance(prices, dict):
        raise ProtocolError("retail reply missing 'prices' object")
    parsed = {
        item_id: _as_int(price, f"prices[{item_id!r}]") for item_id, price in prices.items()
    }
    slogan = data.get("slogan", "")
    if not isinstance(slogan, str):
        raise ProtocolError(f"slogan must be a string, got {slogan!r}")
    return RetailPosting(prices=parsed, slogan=slogan)


class Transport:
    def request(self, message: dict[str, Any], timeout: float) -> Any:
        raise NotImplementedError

    def close(self) -> None:
        pass


class SubprocessTransport(Transport):
    """Newline-delimited JSON over a child process's stdio."""

    def __init__(self, cmd: Sequence[str]):
        self._cmd = list(cmd)
        self._proc: subprocess.Popen[str] | None = None
        self._replies: queue.Queue[str | None] = queue.Queue()

    def _ensure_started(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        self._proc = subprocess.Popen(
            self._cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._replies = queue.Queue()
        thread = threading.Thread(target=self._pump, args=(self._proc,), daemon=True)
        thread.start()

    def _pump(self, proc: subprocess.Popen[str]) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            self._replies.put(line)
        self._replies.put(None)  # EOF marker

    def request(self, message: dict[str, Any], timeout: float) -> Any:
        self._ensure_started()
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write(json.dumps(message) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"agent process pipe broken: {exc}") from exc
        try:
            line = self._replies.get(timeout=timeout)
        except queue.Empty:
            raise ProtocolError(f"agent reply timed out after {timeout}s") from None
        if line is None:
            raise ProtocolError("agent process closed stdout")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"agent reply is not strict JSON: {exc}") from exc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            try:
                if self._proc.stdin is not None:
                    self._proc.stdin.close()
                self._proc.terminate()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
        self._proc = None


class HttpTransport(Transport):
    """One POST per request; the response body is the action JSON."""

    def __init__(self, url: str):
        self._url = url

    def request(self, message: dict[str, Any], timeout: float) -> Any:
        try:
            response = requests.post(self._url, json=message, timeout=timeout)
            response.raise_for_status()
        except requests.RequestException as exc:
            raise ProtocolError(f"agent endpoint failed: {exc}") from exc
        try:
            return json.loads(response.text)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"agent reply is not strict JSON: {exc}") from exc


class ExternalPolicy(Policy):
    """Policy backed by an external process or endpoint.

    Malformed replies are retried (`retries` extra attempts, default 1);
    exhausted retries surface as an exception that the engine converts into
    a zero action plus a policy_fault record.
    """

    name = "external"

    def __init__(self, transport: Transport, timeout: float = 60.0, retries: int = 1):
        super().__init__()
        self._transport = transport
        self._timeout = timeout
        self._retries = retries

    def _call(self, request_type: str, payload: dict[str, Any], schema: dict[str, Any],
              prompt: str, parse) -> Any:
        message = {
            "protocol_version": PROTOCOL_VERSION,
            "type": request_type,
            "agent_id": self.agent_id,
            "payload": payload,
            "schema": schema,
            "prompt": prompt,
        }
        last_error: Exception | None = None
        for _ in range(1 + self._retries):
            try:
                return parse(self._transport.request(message, self._timeout))
            except (ProtocolError, ValueError) as exc:
                last_error = exc
        raise ProtocolError(f"external agent failed after retries: {last_error}")

    def decide_bid(self, obs: BidObservation) -> Bid:
        return self._call(
            "bid_request", obs.to_json(), BID_SCHEMA, render_bid_prompt(obs), parse_bid_action
        )

    def decide_retail(self, obs: RetailObservation) -> RetailPosting:
        return self._call(
            "retail_request",
            obs.to_json(),
            RETAIL_SCHEMA,
            render_retail_prompt(obs),
            parse_retail_action,
        )

    def close(self) -> None:
        self._transport.close()


def build_policy(spec: str | Mapping[str, Any]) -> Policy:
    """Build a policy from a config binding.

    A bare string names a scripted baseline; a table selects a kind:
    scripted (name + params), subprocess (cmd), or http (url).
    """
    from marketsim.policies import scripted_policy

    if isinstance(spec, str):
        return scripted_policy(spec)
    kind = spec.get("kind")
    if kind == "scripted":
        return scripted_policy(spec["name"], spec.get("params"))
    if kind == "subprocess":
        return ExternalPolicy(
            SubprocessTransport(spec["cmd"]),
            timeout=float(spec.get("timeout", 60.0)),
            retries=int(spec.get("retries", 1)),
        )
    if kind == "http":
        return ExternalPolicy(
            HttpTransport(spec["url"]),
            timeout=float(spec.get("timeout", 60.0)),
            retries=int(spec.get("retries", 1)),
        )
    raise ValueError(f"unknown policy binding {spec!r}")
