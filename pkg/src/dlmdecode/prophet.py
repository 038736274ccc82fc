"""Early-commit decoding: confidence gaps, staged thresholds, and the commit rule.

The stopping signal is the confidence gap — top-1 minus top-2 logit at a
position. When the gap averaged over the still-masked answer positions
clears a progress-dependent threshold, refinement stops and every masked
position sequence-wide is filled with the current argmax in one parallel
operation.

The threshold schedule encodes time-varying risk aversion: demanding early
(tau_high while progress < p1), relaxed late (tau_low once progress >= p2).
With all thresholds at +inf the check never fires for a live answer region
and decoding is bit-identical to the plain loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import (
    AnswerRegion,
    DecodeConfig,
    DecodeTrace,
    DegenerateVocabularyError,
    InvalidConfigError,
    ModelMismatchError,
    TokenSequence,
)
from .models import LogitMatrix

__all__ = [
    "ThresholdParams",
    "CommitDecision",
    "confidence_gap",
    "mean_gap",
    "threshold",
    "should_commit",
    "commit",
    "decode_prophet",
]


@dataclass(frozen=True)
class ThresholdParams:
    """Staged threshold: tau_high below p1, tau_mid in [p1, p2), tau_low from p2."""

    tau_high: float = 8.0
    tau_mid: float = 5.0
    tau_low: float = 3.0
    p1: float = 0.33
    p2: float = 0.67

    def __post_init__(self):
        if not (self.tau_high >= self.tau_mid >= self.tau_low >= 0.0):
            raise InvalidConfigError("tau", "must satisfy tau_high >= tau_mid >= tau_low >= 0")
        if not 0.0 < self.p1 < self.p2 < 1.0:
            raise InvalidConfigError("breakpoints", "must satisfy 0 < p1 < p2 < 1")

    @classmethod
    def from_config(cls, cfg: DecodeConfig) -> "ThresholdParams":
        return cls(cfg.tau_high, cfg.tau_mid, cfg.tau_low, cfg.breakpoints[0], cfg.breakpoints[1])


@dataclass(frozen=True)
class CommitDecision:
    """Outcome of one commit check; committed implies mean_gap >= threshold."""

    committed: bool
    mean_gap: float
    threshold: float
    progress: float
    step: int | None = None


def confidence_gap(row: Iterable[float]) -> float:
    """Top-1 minus top-2 logit of one vocabulary row; always >= 0."""
    arr = np.asarray(row, dtype=np.float64).ravel()
    if arr.size < 2:
        raise DegenerateVocabularyError("confidence gap needs at least two vocabulary entries")
    part = np.partition(arr, arr.size - 2)
    return float(part[-1] - part[-2])


def mean_gap(
    logits: LogitMatrix,
    region: AnswerRegion,
    masked: Iterable[int] | np.ndarray,
) -> float:
    """Mean confidence gap over region positions that are still masked.

    Returns +inf when no region position is masked: the answer is fully
    decoded, so the commit condition is vacuously satisfied.
    """
    masked_arr = np.asarray(list(masked) if not isinstance(masked, np.ndarray) else masked)
    in_region = masked_arr[(masked_arr >= region.start) & (masked_arr < region.end)]
    if in_region.size == 0:
        return math.inf
    return float(np.mean(logits.confidence_gaps(in_region)))


def threshold(p: float, params: ThresholdParams) -> float:
    """Staged threshold at progress p (lower bound inclusive, upper exclusive)."""
    if p < params.p1:
        return params.tau_high
    if p < params.p2:
        return params.tau_mid
    return params.tau_low


def should_commit(
    mean_gap_value: float,
    p: float,
    params: ThresholdParams,
    *,
    step: int | None = None,
) -> CommitDecision:
    """Commit iff the mean gap meets the staged threshold (inclusive >=).

    An infinite threshold disables the check outright: it is the
    conservative-limit switch, and must not fire even on the +inf sentinel
    of a fully decoded answer region. Every finite threshold is met by the
    sentinel, so a finished answer always commits in practical settings.
    """
    tau = threshold(p, params)
    return CommitDecision(
        committed=not math.isinf(tau) and mean_gap_value >= tau,
        mean_gap=mean_gap_value,
        threshold=tau,
        progress=p,
        step=step,
    )


def commit(seq: TokenSequence, logits: LogitMatrix) -> TokenSequence:
    """Fill every masked position sequence-wide with its row argmax, in one shot."""
    if logits.n_positions != seq.n_total:
        raise ModelMismatchError(
            f"logits cover {logits.n_positions} positions for a {seq.n_total}-token sequence"
        )
    out = seq.tokens.copy()
    still_masked = out == seq.mask_id
    if still_masked.any():
        out[still_masked] = logits.argmax_tokens()[still_masked]
    return seq.with_tokens(out)


def decode_prophet(
    model,
    seq0: TokenSequence,
    cfg: DecodeConfig,
    rng: np.random.Generator | None = None,
) -> tuple[TokenSequence, DecodeTrace, CommitDecision]:
    """Standard decoding with the early-commit check ahead of each refinement.

    Each step consumes one model call; the check runs on that step's logits
    before any unmasking, so a commit at step t performs the commit fill and
    nothing else at t. If the check never fires, the run is bit-identical to
    :func:`dlmdecode.decoder.decode_full` under the same seed and the
    returned decision is the final step's (non-committed) one.
    """
    # Deferred: decoder imports this module's primitives at module level.
    from .decoder import _decode

    if not cfg.prophet_enabled:
        raise InvalidConfigError("prophet_enabled", "decode_prophet requires prophet_enabled=True")
    seq, trace, decision = _decode(model, seq0, cfg, rng, early_commit=True)
    assert decision is not None
    return seq, trace, decision
