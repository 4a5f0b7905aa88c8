"""LLM-baseline harness: prompt construction, chat-completion transport,
response parsing, and evaluation through the shared metrics and threshold.

The transport is injected (a callable taking the request payload and
returning the response JSON), so everything here is testable offline with a
mock; live HTTP runs use ``LiveTransport``.
"""

from __future__ import annotations

import json
import math
import os
import re
import time
from dataclasses import dataclass, field

from .data import UtteranceRecord, binarize
from .metrics import ClassificationReport, RegressionReport, classification_report, regression_report

PROMPT_VERSION = "v1"

_PROMPT_TEMPLATE = """\
You will see an utterance spoken with the emotion "{emotion}".
For each word, rate how strongly an iconic (meaning-depicting) hand gesture
should accompany it, as a number between 0 and 1 (0 = no gesture).

Words ({count} total):
{word_lines}

Reply with ONLY a JSON array of exactly {count} numbers in [0, 1], one per
word, in the same order. No other text.
"""


class BaselineError(RuntimeError):
    pass


class TransportError(BaselineError):
    """The endpoint could not be reached or returned an unusable payload."""


class ResponseParseError(BaselineError):
    pass


class NoArrayFoundError(ResponseParseError):
    """The response text contains no JSON array."""


class ArrayLengthError(ResponseParseError):
    """The first JSON array has the wrong number of elements."""


class NonNumericError(ResponseParseError):
    """The first JSON array contains non-numeric elements."""


class ValueRangeError(ResponseParseError):
    """An intensity lies outside [0, 1] (values are not clamped)."""


@dataclass
class BaselineConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 30.0
    max_retries: int = 2
    temperature: float = 0.0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass
class BaselineResponse:
    intensities: list[float]
    raw_text: str


@dataclass
class RecordResult:
    record_id: str
    prompt_version: str = PROMPT_VERSION
    raw: str | None = None
    parsed: list[float] | None = None
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "record_id": self.record_id,
                "prompt_version": self.prompt_version,
                "raw": self.raw,
                "parsed": self.parsed,
                "error": self.error,
            }
        )


@dataclass
class BaselineEvalResult:
    classification: ClassificationReport
    regression: RegressionReport
    records_evaluated: int
    records_failed: int
    results: list[RecordResult] = field(default_factory=list)


def build_prompt(record: UtteranceRecord) -> str:
    """Deterministic prompt naming the emotion and listing the words in order."""
    word_lines = "\n".join(f"{i + 1}. {w.text}" for i, w in enumerate(record.words))
    return _PROMPT_TEMPLATE.format(
        emotion=record.emotion, count=len(record.words), word_lines=word_lines
    )


_ARRAY_RE = re.compile(r"\[[^\[\]]*\]", re.DOTALL)


def parse_response(text: str, expected_count: int) -> BaselineResponse:
    """Extract the first JSON array from ``text`` and validate it.

    The first syntactically valid array is authoritative: wrong length,
    non-numeric elements, or out-of-range values are errors, not reasons to
    keep scanning. Out-of-range values are never clamped.
    """
    if expected_count < 1:
        raise ValueError("expected_count must be >= 1")
    array = None
    for m in _ARRAY_RE.finditer(text):
        try:
            array = json.loads(m.group(0))
        except json.JSONDecodeError:
            continue
        break
    if array is None:
        raise NoArrayFoundError("no JSON array found in response")
    if len(array) != expected_count:
        raise ArrayLengthError(
            f"expected {expected_count} values, response array has {len(array)}"
        )
    values = []
    for i, v in enumerate(array):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise NonNumericError(f"element {i} is not a number: {v!r}")
        v = float(v)
        if not math.isfinite(v) or not 0.0 <= v <= 1.0:
            raise ValueRangeError(f"element {i} = {v} outside [0, 1]")
        values.append(v)
    return BaselineResponse(intensities=values, raw_text=text)


def chat_payload(prompt: str, config: BaselineConfig) -> dict:
    return {
        "model": config.model,
        "temperature": config.temperature,
        "messages": [{"role": "user", "content": prompt}],
    }


def extract_content(response: dict) -> str:
    try:
        return response["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"response JSON missing choices/message/content: {exc}") from exc


class LiveTransport:
    """HTTP chat-completion transport with simple retry."""

    def __init__(self, config: BaselineConfig):
        self.config = config
        self.api_key = os.environ.get(config.api_key_env)
        if not self.api_key:
            raise TransportError(
                f"environment variable {config.api_key_env!r} is not set"
            )

    def __call__(self, payload: dict) -> dict:
        import requests

        last_exc = None
        for attempt in range(self.config.max_retries + 1):
            try:
                resp = requests.post(
                    self.config.endpoint,
                    json=payload,
                    headers={"Authorization": f"Bearer {self.api_key}"},
                    timeout=self.config.timeout,
                )
                resp.raise_for_status()
                return resp.json()
            except Exception as exc:  # noqa: BLE001 - retried, then re-raised
                last_exc = exc
                if attempt < self.config.max_retries:
                    time.sleep(min(2.0**attempt, 8.0))
        raise TransportError(f"request failed after retries: {last_exc}") from last_exc


def evaluate_baseline(
    records: list[UtteranceRecord], config: BaselineConfig, transport
) -> BaselineEvalResult:
    """Prompt -> parse -> binarize -> metrics for every record.

    Records whose transport or parse fails are excluded from the metrics and
    counted; the run continues. Results are reduced in record order.
    """
    pred_intensities: list[float] = []
    true_intensities: list[float] = []
    results: list[RecordResult] = []
    failed = 0
    for rec in records:
        prompt = build_prompt(rec)
        res = RecordResult(record_id=rec.id)
        try:
            response = transport(chat_payload(prompt, config))
            text = extract_content(response)
            res.raw = text
            parsed = parse_response(text, expected_count=len(rec.words))
            res.parsed = parsed.intensities
        except (TransportError, ResponseParseError) as exc:
            res.error = f"{type(exc).__name__}: {exc}"
            failed += 1
            results.append(res)
            continue
        results.append(res)
        pred_intensities.extend(parsed.intensities)
        true_intensities.extend(w.intensity for w in rec.words)

    if not pred_intensities:
        raise BaselineError("no records could be evaluated")
    pred_labels = [binarize(v) for v in pred_intensities]
    true_labels = [binarize(v) for v in true_intensities]
    return BaselineEvalResult(
        classification=classification_report(pred_labels, true_labels, mode="macro"),
        regression=regression_report(pred_intensities, true_intensities),
        records_evaluated=len(records) - failed,
        records_failed=failed,
        results=results,
    )
