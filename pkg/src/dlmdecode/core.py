"""Shared value types for masked-diffusion sequence decoding.

Vocabularies, token sequences with a distinguished [MASK] id, decoding
configuration, and the per-step trace records emitted by the decoding
loops. Every type here is an immutable value object: safe to share across
threads, and operations return new instances instead of mutating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DlmDecodeError",
    "InvalidPromptError",
    "InvalidConfigError",
    "ModelMismatchError",
    "ScheduleExhaustedError",
    "EmptyCorpusError",
    "InvalidTransitionError",
    "InvalidUnmaskCountError",
    "DegenerateVocabularyError",
    "MissingTop1Error",
    "NotApplicableError",
    "EmptyInputError",
    "InvalidInputError",
    "Vocabulary",
    "TokenSequence",
    "AnswerRegion",
    "RemaskStrategy",
    "DecodeConfig",
    "StepRecord",
    "DecodeTrace",
    "new_sequence",
    "masked_positions",
    "validate_config",
    "resolve_answer_region",
]


class DlmDecodeError(Exception):
    """Base class for every error raised by this package."""


class InvalidPromptError(DlmDecodeError):
    """Prompt tokens contain the mask id or fall outside the vocabulary."""


class InvalidConfigError(DlmDecodeError):
    """A configuration invariant is violated.

    ``field`` names the first violated field so callers (and the CLI exit
    path) can report it precisely.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ModelMismatchError(DlmDecodeError):
    """Model output shape or vocabulary does not match the sequence."""


class ScheduleExhaustedError(DlmDecodeError):
    """A scripted oracle was queried outside its step schedule."""


class EmptyCorpusError(DlmDecodeError):
    pass


class InvalidTransitionError(DlmDecodeError):
    pass


class InvalidUnmaskCountError(DlmDecodeError):
    pass


class DegenerateVocabularyError(DlmDecodeError):
    pass


class MissingTop1Error(DlmDecodeError):
    pass


class NotApplicableError(DlmDecodeError):
    pass


class EmptyInputError(DlmDecodeError):
    pass


class InvalidInputError(DlmDecodeError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Token id space with one id reserved for [MASK].

    ``token_names``, when given, maps every id to a unique printable string
    (purely cosmetic; nothing downstream depends on it).
    """

    size: int
    mask_id: int
    token_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 1:
            raise InvalidConfigError("size", "vocabulary size must be >= 1")
        if not 0 <= self.mask_id < self.size:
            raise InvalidConfigError("mask_id", "mask_id must satisfy 0 <= mask_id < size")
        if self.token_names is not None:
            names = tuple(self.token_names)
            if len(names) != self.size:
                raise InvalidConfigError("token_names", "must have exactly `size` entries")
            if len(set(names)) != len(names):
                raise InvalidConfigError("token_names", "entries must be unique")
            object.__setattr__(self, "token_names", names)

    @property
    def non_mask_count(self) -> int:
        return self.size - 1


@dataclass(frozen=True, eq=False)
class TokenSequence:
    """Fixed-length vector of token ids: a prompt prefix plus a generation tail.

    Prompt positions never hold the mask id. The token array is copied on
    construction and frozen read-only.
    """

    tokens: np.ndarray
    prompt_len: int
    mask_id: int

    def __post_init__(self):
        arr = np.array(self.tokens, dtype=np.int64, copy=True)
        if arr.ndim != 1:
            raise InvalidInputError("tokens must be one-dimensional")
        if not 0 <= self.prompt_len <= arr.size:
            raise InvalidInputError("prompt_len out of range")
        if arr.size and int(arr.min()) < 0:
            raise InvalidInputError("token ids must be non-negative")
        if (arr[: self.prompt_len] == self.mask_id).any():
            raise InvalidPromptError("prompt positions must not contain the mask id")
        arr.setflags(write=False)
        object.__setattr__(self, "tokens", arr)

    @property
    def n_total(self) -> int:
        return int(self.tokens.size)

    @property
    def gen_len(self) -> int:
        return self.n_total - self.prompt_len

    def with_tokens(self, tokens: np.ndarray) -> "TokenSequence":
        """New sequence with the same prompt boundary and mask id."""
        return TokenSequence(tokens, self.prompt_len, self.mask_id)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TokenSequence):
            return NotImplemented
        return (
            self.prompt_len == other.prompt_len
            and self.mask_id == other.mask_id
            and np.array_equal(self.tokens, other.tokens)
        )

    def __repr__(self) -> str:
        return (
            f"TokenSequence(tokens={self.tokens.tolist()}, "
            f"prompt_len={self.prompt_len}, mask_id={self.mask_id})"
        )


@dataclass(frozen=True)
class AnswerRegion:
    """Half-open [start, end) span of absolute positions holding the answer."""

    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise InvalidConfigError("answer_region", "must satisfy 0 <= start < end")

    def __len__(self) -> int:
        return self.end - self.start

    def positions(self) -> range:
        return range(self.start, self.end)


class RemaskStrategy(str, Enum):
    RANDOM = "random"
    LOW_CONFIDENCE = "low_confidence"


@dataclass(frozen=True)
class DecodeConfig:
    """Everything a decoding run needs besides the model and the prompt.

    ``block_len=None`` means a single block spanning the whole generation
    region. ``answer_region=None`` defaults to the full generation region,
    resolved against the sequence at decode time. ``temperature=0`` selects
    greedy argmax fills; positive values sample from the tempered softmax.
    """

    gen_len: int
    block_len: int | None = None
    t_max: int = 50
    remask_strategy: RemaskStrategy = RemaskStrategy.LOW_CONFIDENCE
    prophet_enabled: bool = False
    tau_high: float = 8.0
    tau_mid: float = 5.0
    tau_low: float = 3.0
    breakpoints: tuple[float, float] = (0.33, 0.67)
    answer_region: AnswerRegion | None = None
    seed: int = 0
    record_top1: bool = False
    temperature: float = 0.0

    def __post_init__(self):
        if self.block_len is None:
            object.__setattr__(self, "block_len", self.gen_len)
        object.__setattr__(self, "remask_strategy", RemaskStrategy(self.remask_strategy))
        object.__setattr__(
            self, "breakpoints", (float(self.breakpoints[0]), float(self.breakpoints[1]))
        )


def validate_config(cfg: DecodeConfig) -> None:
    """Check every DecodeConfig invariant; raise naming the first violation."""
    if cfg.t_max < 1:
        raise InvalidConfigError("t_max", "step budget must be >= 1")
    if cfg.gen_len < 1:
        raise InvalidConfigError("gen_len", "generation length must be >= 1")
    if not 1 <= cfg.block_len <= cfg.gen_len:
        raise InvalidConfigError("block_len", "must satisfy 1 <= block_len <= gen_len")
    if cfg.gen_len % cfg.block_len != 0:
        raise InvalidConfigError("block_len", "gen_len must be an exact multiple of block_len")
    if not (cfg.tau_high >= cfg.tau_mid >= cfg.tau_low >= 0.0):
        raise InvalidConfigError("tau", "must satisfy tau_high >= tau_mid >= tau_low >= 0")
    p1, p2 = cfg.breakpoints
    if not 0.0 < p1 < p2 < 1.0:
        raise InvalidConfigError("breakpoints", "must satisfy 0 < p1 < p2 < 1")
    if cfg.temperature < 0.0:
        raise InvalidConfigError("temperature", "must be >= 0")
    if not 0 <= cfg.seed < 2**64:
        raise InvalidConfigError("seed", "must be a 64-bit unsigned integer")


def resolve_answer_region(cfg: DecodeConfig, seq: TokenSequence) -> AnswerRegion:
    """Concrete answer region for a sequence: configured span or the full tail."""
    region = cfg.answer_region
    if region is None:
        return AnswerRegion(seq.prompt_len, seq.n_total)
    if not (seq.prompt_len <= region.start and region.end <= seq.n_total):
        raise InvalidConfigError(
            "answer_region",
            f"[{region.start}, {region.end}) must lie within the generation "
            f"region [{seq.prompt_len}, {seq.n_total})",
        )
    return region


@dataclass(frozen=True, eq=False)
class StepRecord:
    """One decoding step: what was measured and what was unmasked.

    ``top1`` (when recorded) holds, per position, the current sequence token
    at already-decoded positions and the model's argmax at still-masked ones,
    captured after this step's fills. ``progress`` is (t_max - t) / t_max.
    """

    t: int
    progress: float
    mean_gap: float
    unmasked_positions: tuple[int, ...]
    top1: np.ndarray | None = None
    committed: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "unmasked_positions", tuple(sorted(int(i) for i in self.unmasked_positions))
        )
        if self.top1 is not None:
            arr = np.array(self.top1, dtype=np.int64, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, "top1", arr)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StepRecord):
            return NotImplemented
        if self.top1 is None or other.top1 is None:
            top1_equal = self.top1 is None and other.top1 is None
        else:
            top1_equal = np.array_equal(self.top1, other.top1)
        return (
            self.t == other.t
            and self.progress == other.progress
            and self.mean_gap == other.mean_gap
            and self.unmasked_positions == other.unmasked_positions
            and self.committed == other.committed
            and top1_equal
        )


@dataclass(frozen=True)
class DecodeTrace:
    """Ordered step records from one decoding run (t counts down from t_max)."""

    steps: tuple[StepRecord, ...]
    commit_step: int | None
    model_calls: int

    def __post_init__(self):
        steps = tuple(self.steps)
        object.__setattr__(self, "steps", steps)
        if not steps:
            raise InvalidInputError("a trace must contain at least one step")
        t0 = steps[0].t
        for i, s in enumerate(steps):
            if s.t != t0 - i:
                raise InvalidInputError("step counters must descend by 1 from t_max")
            expected = (t0 - s.t) / t0
            if s.progress != expected:
                raise InvalidInputError(f"progress at t={s.t} must equal {expected}")
        if self.model_calls != len(steps):
            raise InvalidInputError("model_calls must equal the number of steps")
        committed = [s for s in steps if s.committed]
        if self.commit_step is None:
            if committed:
                raise InvalidInputError("commit_step absent but a step is marked committed")
        else:
            if self.commit_step != steps[-1].t or not steps[-1].committed:
                raise InvalidInputError("commit_step must be the final, committed step")
            if len(committed) != 1:
                raise InvalidInputError("only the final step may be committed")

    @property
    def t_max(self) -> int:
        return self.steps[0].t

    @property
    def steps_executed(self) -> int:
        return len(self.steps)


def new_sequence(prompt: Sequence[int], gen_len: int, vocab: Vocabulary) -> TokenSequence:
    """Prompt copied verbatim, followed by ``gen_len`` mask tokens."""
    if gen_len < 1:
        raise InvalidConfigError("gen_len", "generation length must be >= 1")
    prompt_arr = np.asarray(list(prompt), dtype=np.int64)
    if prompt_arr.size:
        if (prompt_arr == vocab.mask_id).any():
            raise InvalidPromptError("prompt must not contain the mask id")
        if int(prompt_arr.min()) < 0 or int(prompt_arr.max()) >= vocab.size:
            raise InvalidPromptError("prompt token id outside the vocabulary")
    tokens = np.concatenate(
        [prompt_arr, np.full(gen_len, vocab.mask_id, dtype=np.int64)]
    )
    return TokenSequence(tokens, prompt_len=int(prompt_arr.size), mask_id=vocab.mask_id)


def masked_positions(seq: TokenSequence) -> tuple[int, ...]:
    """Indices i with tokens[i] == mask_id, ascending."""
    return tuple(int(i) for i in np.flatnonzero(seq.tokens == seq.mask_id))
