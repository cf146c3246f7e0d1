"""Provider-agnostic completion gateway with budgeting, retry, and cost.

Everything provider-specific hides behind the Backend protocol: OpenAI
and Gemini chat endpoints for live runs, a script-driven mock for tests
and offline replay. The gateway wraps a backend with a pre-send context
check, bounded retry on transport-level failures, and per-call cost
recording.

Output budgets are allocated dynamically rather than fixed: text-phase
budgets scale with prompt size, table-phase budgets with row count,
both clamped to a floor and to the model's remaining context.
"""

from __future__ import annotations

import json
import math
import os
import random
import threading
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import requests

from .bpe import count_tokens, load_registry
from .errors import (
    BudgetInfeasible,
    ContextOverflow,
    MissingCredentials,
    MockScriptMiss,
    ProviderError,
    RateLimited,
    TransportError,
)

ENV_KEY_TEMPLATE = "THERMO_{provider}_API_KEY"


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    system: str
    user: str
    max_tokens: int
    temperature: float = 0.001
    metadata: dict = field(default_factory=dict)  # agent / doi / material

    def prompt_text(self) -> str:
        return self.system + "\n" + self.user


@dataclass(frozen=True)
class CompletionResult:
    text: str
    input_tokens: int
    output_tokens: int
    model: str
    attempts: int = 1


# ---------------------------------------------------------------------------
# Output budget allocation

@dataclass(frozen=True)
class BudgetConfig:
    base_tokens: int = 256
    alpha: float = 0.5    # text phase: tokens granted per prompt token
    beta: int = 48        # table phase: tokens granted per table row
    min_output: int = 256


def allocate_tokens(
    input_tokens: int,
    context_limit: int,
    phase: str = "text",
    table_rows: int = 0,
    config: BudgetConfig = BudgetConfig(),
) -> int:
    """Output-token budget for one call.

    text phase:  base + ceil(alpha * input_tokens)
    table phase: base + beta * table_rows
    clamped to [min_output, context_limit - input_tokens]. When even the
    floor does not fit the request is infeasible and the caller must
    shrink the prompt.
    """
    headroom = context_limit - input_tokens
    if headroom < config.min_output:
        raise BudgetInfeasible(
            f"{input_tokens} prompt tokens leave {headroom} of {context_limit}; "
            f"need at least {config.min_output}"
        )
    if phase == "text":
        want = config.base_tokens + math.ceil(config.alpha * input_tokens)
    elif phase == "table":
        want = config.base_tokens + config.beta * table_rows
    else:
        raise ValueError(f"unknown phase: {phase!r}")
    return max(config.min_output, min(want, headroom))


# ---------------------------------------------------------------------------
# Pricing and cost ledger

@dataclass(frozen=True)
class ModelPricing:
    input_per_mtok: float
    output_per_mtok: float


class PricingTable:
    def __init__(self, models: dict[str, ModelPricing], currency: str = "USD"):
        self.models = models
        self.currency = currency

    def pricing_for(self, model: str) -> ModelPricing:
        try:
            return self.models[model]
        except KeyError:
            raise KeyError(f"no pricing for model {model!r}") from None


def load_pricing(path: str | Path | None = None) -> PricingTable:
    if path is None:
        text = resources.files("thermoharvest").joinpath("data/pricing.json").read_text(
            encoding="utf-8"
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    payload = json.loads(text)
    models = {
        name: ModelPricing(
            input_per_mtok=float(spec["input"]), output_per_mtok=float(spec["output"])
        )
        for name, spec in payload["models"].items()
    }
    return PricingTable(models, currency=payload.get("currency", "USD"))


def call_cost(
    input_tokens: int, output_tokens: int, pricing: ModelPricing
) -> float:
    """USD for one call, rounded half-even to 6 decimals.

    Token counts divide by 1e6 before multiplying by the per-MTok price
    so that exactly one million tokens costs exactly the listed price.
    """
    usd = (
        input_tokens / 1_000_000 * pricing.input_per_mtok
        + output_tokens / 1_000_000 * pricing.output_per_mtok
    )
    return round(usd, 6)


@dataclass(frozen=True)
class CallRecord:
    model: str
    agent: str
    doi: str
    input_tokens: int
    output_tokens: int
    usd: float

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "agent": self.agent,
            "doi": self.doi,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "usd": self.usd,
        }


class CostLedger:
    """Append-only record of every completion call and its cost."""

    def __init__(self, pricing: PricingTable):
        self.pricing = pricing
        self._records: list[CallRecord] = []
        self._lock = threading.Lock()

    def record(
        self,
        model: str,
        agent: str,
        doi: str,
        input_tokens: int,
        output_tokens: int,
    ) -> CallRecord:
        usd = call_cost(input_tokens, output_tokens, self.pricing.pricing_for(model))
        rec = CallRecord(
            model=model,
            agent=agent,
            doi=doi,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
            usd=usd,
        )
        with self._lock:
            self._records.append(rec)
        return rec

    @property
    def records(self) -> tuple[CallRecord, ...]:
        with self._lock:
            return tuple(self._records)

    def total_usd(self) -> float:
        return sum(r.usd for r in self.records)

    def totals_by_model(self) -> dict[str, dict]:
        return self._totals(lambda r: r.model)

    def totals_by_agent(self) -> dict[str, dict]:
        return self._totals(lambda r: r.agent)

    def _totals(self, key) -> dict[str, dict]:
        out: dict[str, dict] = {}
        for rec in self.records:
            cell = out.setdefault(
                key(rec), {"calls": 0, "input_tokens": 0, "output_tokens": 0, "usd": 0.0}
            )
            cell["calls"] += 1
            cell["input_tokens"] += rec.input_tokens
            cell["output_tokens"] += rec.output_tokens
            cell["usd"] += rec.usd
        return {k: out[k] for k in sorted(out)}

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path, pricing: PricingTable) -> "CostLedger":
        ledger = cls(pricing)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                ledger._records.append(
                    CallRecord(
                        model=rec["model"],
                        agent=rec["agent"],
                        doi=rec["doi"],
                        input_tokens=int(rec["input_tokens"]),
                        output_tokens=int(rec["output_tokens"]),
                        usd=float(rec["usd"]),
                    )
                )
        return ledger


def estimate_cost(
    n_documents: int,
    avg_input_tokens: float,
    avg_output_tokens: float,
    model: str,
    pricing: PricingTable,
    calls_per_document: float = 1.0,
) -> float:
    """Linear pre-run estimate; excludes retries, so treat as a floor of
    the real spend and budget headroom on top."""
    p = pricing.pricing_for(model)
    per_call = (
        avg_input_tokens / 1_000_000 * p.input_per_mtok
        + avg_output_tokens / 1_000_000 * p.output_per_mtok
    )
    return round(n_documents * calls_per_document * per_call, 6)


# ---------------------------------------------------------------------------
# Backends

class OpenAIBackend:
    """Chat-completions endpoint; expects THERMO_OPENAI_API_KEY."""

    provider = "OPENAI"
    url = "https://api.openai.com/v1/chat/completions"

    def __init__(self, session: requests.Session | None = None, timeout: float = 120.0):
        self.session = session or requests.Session()
        self.timeout = timeout

    def _key(self) -> str:
        key = os.environ.get(ENV_KEY_TEMPLATE.format(provider=self.provider), "")
        if not key:
            raise MissingCredentials(
                f"set {ENV_KEY_TEMPLATE.format(provider=self.provider)}"
            )
        return key

    def complete(self, request: CompletionRequest) -> CompletionResult:
        payload = {
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        try:
            resp = self.session.post(
                self.url,
                json=payload,
                headers={"Authorization": f"Bearer {self._key()}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code == 429:
            raise RateLimited(f"429 from provider: {resp.text[:200]}")
        if resp.status_code >= 500:
            raise TransportError(f"{resp.status_code} from provider")
        if resp.status_code >= 400:
            raise ProviderError(f"{resp.status_code} from provider: {resp.text[:200]}")
        body = resp.json()
        text = body["choices"][0]["message"]["content"]
        usage = body.get("usage", {})
        return CompletionResult(
            text=text,
            input_tokens=int(usage.get("prompt_tokens")
                             or count_tokens(request.prompt_text(), request.model)),
            output_tokens=int(usage.get("completion_tokens")
                              or count_tokens(text, request.model)),
            model=request.model,
        )


class GeminiBackend:
    """generateContent endpoint; expects THERMO_GEMINI_API_KEY."""

    provider = "GEMINI"
    url_template = (
        "https://generativelanguage.googleapis.com/v1beta/models/"
        "{model}:generateContent"
    )

    def __init__(self, session: requests.Session | None = None, timeout: float = 120.0):
        self.session = session or requests.Session()
        self.timeout = timeout

    def _key(self) -> str:
        key = os.environ.get(ENV_KEY_TEMPLATE.format(provider=self.provider), "")
        if not key:
            raise MissingCredentials(
                f"set {ENV_KEY_TEMPLATE.format(provider=self.provider)}"
            )
        return key

    def complete(self, request: CompletionRequest) -> CompletionResult:
        payload = {
            "system_instruction": {"parts": [{"text": request.system}]},
            "contents": [{"role": "user", "parts": [{"text": request.user}]}],
            "generationConfig": {
                "maxOutputTokens": request.max_tokens,
                "temperature": request.temperature,
            },
        }
        try:
            resp = self.session.post(
                self.url_template.format(model=request.model),
                json=payload,
                params={"key": self._key()},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code == 429:
            raise RateLimited(f"429 from provider: {resp.text[:200]}")
        if resp.status_code >= 500:
            raise TransportError(f"{resp.status_code} from provider")
        if resp.status_code >= 400:
            raise ProviderError(f"{resp.status_code} from provider: {resp.text[:200]}")
        body = resp.json()
        parts = body["candidates"][0]["content"]["parts"]
        text = "".join(p.get("text", "") for p in parts)
        usage = body.get("usageMetadata", {})
        return CompletionResult(
            text=text,
            input_tokens=int(usage.get("promptTokenCount")
                             or count_tokens(request.prompt_text(), request.model)),
            output_tokens=int(usage.get("candidatesTokenCount")
                              or count_tokens(text, request.model)),
            model=request.model,
        )


_MOCK_ERRORS = {
    "rate_limit": RateLimited,
    "transport": TransportError,
    "provider": ProviderError,
}


class MockBackend:
    """Scripted backend keyed on (agent, doi, material) request metadata.

    Scripts are JSON: a "responses" list mapping keys to reply text, and
    an optional "failures" list that injects transport-level errors a
    fixed number of times before the real response is served. Entirely
    offline; every call is logged for assertions.
    """

    def __init__(self, script: dict | str | Path):
        if not isinstance(script, dict):
            script = json.loads(Path(script).read_text(encoding="utf-8"))
        self._responses: dict[tuple, str] = {}
        for item in script.get("responses", ()):
            key = (item["agent"], item["doi"], item.get("material"))
            self._responses[key] = item["text"]
        self._failures: list[dict] = [dict(item) for item in script.get("failures", ())]
        self.calls: list[dict] = []
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> CompletionResult:
        agent = request.metadata.get("agent", "")
        doi = request.metadata.get("doi", "")
        material = request.metadata.get("material")
        input_tokens = count_tokens(request.prompt_text(), request.model)
        with self._lock:
            self.calls.append(
                {
                    "agent": agent,
                    "doi": doi,
                    "material": material,
                    "model": request.model,
                    "max_tokens": request.max_tokens,
                    "input_tokens": input_tokens,
                }
            )
            for failure in self._failures:
                if failure.get("times", 0) <= 0:
                    continue
                if failure["agent"] != agent or failure["doi"] != doi:
                    continue
                if failure.get("material") not in (None, material):
                    continue
                failure["times"] -= 1
                exc = _MOCK_ERRORS[failure.get("error", "transport")]
                raise exc(f"scripted {failure.get('error', 'transport')} failure")
        text = self._responses.get((agent, doi, material))
        if text is None:
            text = self._responses.get((agent, doi, None))
        if text is None:
            raise MockScriptMiss(f"no scripted response for {(agent, doi, material)}")
        return CompletionResult(
            text=text,
            input_tokens=input_tokens,
            output_tokens=count_tokens(text, request.model),
            model=request.model,
        )

    def calls_by_agent(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for call in self.calls:
            counts[call["agent"]] = counts.get(call["agent"], 0) + 1
        return counts


# ---------------------------------------------------------------------------
# Gateway

@dataclass(frozen=True)
class RetryConfig:
    max_attempts: int = 5
    base_delay: float = 0.5
    max_delay: float = 8.0
    jitter: float = 0.25


class Gateway:
    """Backend wrapper adding context checks, retry, and cost recording."""

    def __init__(
        self,
        backend,
        ledger: CostLedger | None = None,
        retry: RetryConfig = RetryConfig(),
        sleeper=time.sleep,
        rng: random.Random | None = None,
    ):
        self.backend = backend
        self.ledger = ledger
        self.retry = retry
        self.sleeper = sleeper
        self.rng = rng or random.Random()
        self.registry = load_registry()

    def context_limit(self, model: str) -> int:
        return self.registry.model_info(model).context_limit

    def complete(self, request: CompletionRequest) -> CompletionResult:
        limit = self.context_limit(request.model)
        prompt_tokens = count_tokens(request.prompt_text(), request.model)
        if prompt_tokens + request.max_tokens > limit:
            raise ContextOverflow(
                f"{prompt_tokens} prompt + {request.max_tokens} output tokens "
                f"exceed {limit} for {request.model}"
            )
        attempts = 0
        while True:
            attempts += 1
            try:
                result = self.backend.complete(request)
            except (RateLimited, TransportError):
                if attempts >= self.retry.max_attempts:
                    raise
                delay = min(
                    self.retry.max_delay,
                    self.retry.base_delay * 2 ** (attempts - 1),
                )
                delay *= 1.0 + self.retry.jitter * self.rng.random()
                self.sleeper(delay)
                continue
            break
        if self.ledger is not None:
            self.ledger.record(
                model=request.model,
                agent=request.metadata.get("agent", ""),
                doi=request.metadata.get("doi", ""),
                input_tokens=result.input_tokens,
                output_tokens=result.output_tokens,
            )
        if attempts != result.attempts:
            result = replace(result, attempts=attempts)
        return result


def make_backend(name: str, mock_script: str | Path | dict | None = None):
    if name == "openai":
        return OpenAIBackend()
    if name == "gemini":
        return GeminiBackend()
    if name == "mock":
        if mock_script is None:
            raise ValueError("mock backend needs a script")
        return MockBackend(mock_script)
    raise ValueError(f"unknown backend: {name!r}")
