"""Pluggable model backend with per-tier routing and cost metering.

Two providers share one interface: a live HTTP provider speaking the common
JSON chat-completions shape, and a deterministic scripted provider used for
offline, reproducible runs.  Scripted usage is counted with the reference
whitespace tokenizer (`str.split`); live usage is taken from the provider
verbatim.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from threading import Lock

import requests

from .errors import (
    BackendError,
    BackendTimeoutError,
    EmptyLedgerError,
    HttpError,
    SchemaError,
    UnpricedModelError,
)

TIERS = ("recon", "trace", "verdict")

_USD_Q = Decimal("0.000001")
_MILLION = Decimal(1_000_000)


def count_tokens(text: str) -> int:
    """Reference tokenizer: whitespace-delimited chunks."""
    return len(text.split())


@dataclass(frozen=True)
class Exchange:
    tier: str
    messages: tuple[tuple[str, str], ...]  # (role, text)
    response: str
    input_tokens: int
    output_tokens: int
    model_id: str
    latency_s: float

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("usage counts must be >= 0")

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens


@dataclass
class PricingTable:
    """USD per million input/output tokens, by model id."""

    rates: dict[str, tuple[Decimal, Decimal]] = field(default_factory=dict)

    def set(self, model_id: str, usd_in: str | Decimal, usd_out: str | Decimal) -> None:
        p_in, p_out = Decimal(str(usd_in)), Decimal(str(usd_out))
        if p_in < 0 or p_out < 0:
            raise ValueError("prices must be >= 0")
        self.rates[model_id] = (p_in, p_out)

    def rate(self, model_id: str) -> tuple[Decimal, Decimal]:
        try:
            return self.rates[model_id]
        except KeyError:
            raise UnpricedModelError(model_id) from None


class CostLedger:
    """Append-only exchange log with per-tier running totals.

    Appends are atomic; totals can always be recomputed from the exchange
    list and must match the running figures exactly.
    """

    def __init__(self) -> None:
        self._lock = Lock()
        self.exchanges: list[Exchange] = []
        self.totals: dict[str, list[int]] = {t: [0, 0] for t in TIERS}

    def append(self, exchange: Exchange) -> None:
        if exchange.tier not in TIERS:
            raise ValueError(f"unknown tier {exchange.tier!r}")
        with self._lock:
            self.exchanges.append(exchange)
            self.totals[exchange.tier][0] += exchange.input_tokens
            self.totals[exchange.tier][1] += exchange.output_tokens

    def recomputed_totals(self) -> dict[str, list[int]]:
        fresh = {t: [0, 0] for t in TIERS}
        for ex in self.exchanges:
            fresh[ex.tier][0] += ex.input_tokens
            fresh[ex.tier][1] += ex.output_tokens
        return fresh

    def tier_tokens(self, tier: str) -> int:
        a, b = self.totals[tier]
        return a + b

    @property
    def total_tokens(self) -> int:
        return sum(self.tier_tokens(t) for t in TIERS)


def cost_of(ledger: CostLedger, pricing: PricingTable) -> dict:
    """Per-tier and total USD as exact decimals.

    Token counts are integers and prices decimal literals, so every figure
    is exact (and doubling usage doubles cost exactly); `format_usd` rounds
    to six places for presentation only.
    """
    per_tier_in = {t: Decimal(0) for t in TIERS}
    per_tier_out = {t: Decimal(0) for t in TIERS}
    for ex in ledger.exchanges:
        p_in, p_out = pricing.rate(ex.model_id)
        per_tier_in[ex.tier] += Decimal(ex.input_tokens) * p_in / _MILLION
        per_tier_out[ex.tier] += Decimal(ex.output_tokens) * p_out / _MILLION
    input_usd = sum(per_tier_in.values(), Decimal(0))
    output_usd = sum(per_tier_out.values(), Decimal(0))
    return {
        "per_tier": {t: per_tier_in[t] + per_tier_out[t] for t in TIERS},
        "input": input_usd,
        "output": output_usd,
        "total": input_usd + output_usd,
    }


def format_usd(x: Decimal) -> str:
    return str(x.quantize(_USD_Q, rounding=ROUND_HALF_EVEN))


def tier_shares(ledger: CostLedger) -> dict[str, float]:
    total = ledger.total_tokens
    if total <= 0:
        raise EmptyLedgerError("no tokens metered")
    return {t: ledger.tier_tokens(t) / total for t in TIERS}


# ---------------------------------------------------------------------------
# providers
# ---------------------------------------------------------------------------


@dataclass
class RetryPolicy:
    count: int = 2
    backoff_s: float = 0.5
    timeout_s: float = 30.0


@dataclass
class ModelConfig:
    model_id: str
    kind: str  # "scripted" | "http"
    base_url: str = ""
    api_key_env: str = ""


@dataclass
class RouterConfig:
    tier_models: dict[str, str]
    models: dict[str, ModelConfig]
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def validate(self) -> None:
        missing = [t for t in TIERS if t not in self.tier_models]
        if missing:
            raise BackendError(f"tiers without a model: {missing}")
        for tier, model_id in self.tier_models.items():
            if model_id not in self.models:
                raise BackendError(f"tier {tier} routed to unconfigured model {model_id}")


class HttpProvider:
    """Chat-completions client.

    Transient failures (timeouts, connection errors, 429/5xx, malformed
    success bodies) are retried per the policy and surface as
    Timeout/HttpError/SchemaError once retries are exhausted; non-transient
    HTTP statuses fail immediately.
    """

    TRANSIENT_STATUSES = (429, 500, 502, 503, 504)

    def __init__(self, config: ModelConfig, retry: RetryPolicy):
        self.config = config
        self.retry = retry

    def chat(self, model_id: str, tier: str, messages: list[tuple[str, str]]):
        body = {
            "model": model_id,
            "messages": [{"role": role, "content": text} for role, text in messages],
        }
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env) if self.config.api_key_env else None
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        last_exc: BackendError | None = None
        for attempt in range(self.retry.count + 1):
            try:
                resp = requests.post(
                    url, json=body, headers=headers, timeout=self.retry.timeout_s
                )
            except requests.Timeout:
                last_exc = BackendTimeoutError(f"timeout after {self.retry.timeout_s}s")
            except requests.RequestException as exc:
                last_exc = HttpError(None, str(exc))
            else:
                if resp.status_code in self.TRANSIENT_STATUSES:
                    last_exc = HttpError(resp.status_code, "transient provider failure")
                elif resp.status_code != 200:
                    raise HttpError(resp.status_code, resp.text[:200])
                else:
                    try:
                        return self._parse(resp)
                    except SchemaError as exc:
                        last_exc = exc
            if attempt < self.retry.count:
                time.sleep(self.retry.backoff_s * (attempt + 1))
        assert last_exc is not None
        raise last_exc

    @staticmethod
    def _parse(resp) -> tuple[str, int, int]:
        try:
            payload = resp.json()
            content = payload["choices"][0]["message"]["content"]
            usage = payload.get("usage", {})
            return (
                content,
                int(usage.get("prompt_tokens", 0)),
                int(usage.get("completion_tokens", 0)),
            )
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed chat-completions response: {exc}") from None


class ModelRouter:
    """Resolves a tier to a model and provider, and stamps exchanges."""

    def __init__(self, config: RouterConfig, providers: dict[str, object]):
        config.validate()
        self.config = config
        self.providers = providers

    def complete(self, tier: str, messages: list[tuple[str, str]]) -> Exchange:
        if tier not in TIERS:
            raise BackendError(f"unknown tier {tier!r}")
        if not messages:
            raise BackendError("messages must be nonempty")
        model_id = self.config.tier_models[tier]
        provider = self.providers[model_id]
        start = time.monotonic()
        response, in_tok, out_tok = provider.chat(model_id, tier, list(messages))
        latency = time.monotonic() - start
        if getattr(provider, "deterministic", False):
            latency = 0.0
        return Exchange(
            tier=tier,
            messages=tuple(messages),
            response=response,
            input_tokens=in_tok,
            output_tokens=out_tok,
            model_id=model_id,
            latency_s=latency,
        )


def complete(router: ModelRouter, tier: str, messages: list[tuple[str, str]]) -> Exchange:
    return router.complete(tier, messages)
