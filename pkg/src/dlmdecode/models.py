"""Denoiser models: per-position vocabulary logits for partially masked sequences.

Two concrete models are provided. ``ScriptedOracle`` replays a fixed
step-indexed schedule of logit matrices and exists so decoding trajectories
can be computed in closed form for tests. ``NGramDenoiser`` is a count-based
context model with add-alpha smoothing, good enough to run the full decoding
machinery at desk scale without any neural network.

Every logit matrix pins the mask-id column to ``MASK_LOGIT``, the most
negative finite float64. That makes "the model never emits [MASK]" an
invariant of the data rather than a branch in downstream argmax code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .core import (
    DegenerateVocabularyError,
    EmptyCorpusError,
    InvalidConfigError,
    InvalidInputError,
    ModelMismatchError,
    ScheduleExhaustedError,
    TokenSequence,
    Vocabulary,
)

__all__ = [
    "MASK_LOGIT",
    "BOUNDARY",
    "LogitMatrix",
    "DenoiserModel",
    "predict_logits",
    "ScriptedOracle",
    "RampOracle",
    "make_ramp_oracle",
    "NGramDenoiser",
    "train_ngram",
    "save_ngram",
    "load_ngram",
]

# Sentinel for the mask column: most negative finite float64, so argmax and
# softmax need no special case and the column still counts as "finite".
MASK_LOGIT = float(-np.finfo(np.float64).max)

# Sentinel id for context slots that fall outside the sequence or on a
# masked position (n-gram model); written as "_" in the text format.
BOUNDARY = -1

ContextKey = tuple[tuple[int, ...], tuple[int, ...]]


@dataclass(frozen=True, eq=False)
class LogitMatrix:
    """(n_positions, vocab_size) float64 scores with the mask column pinned.

    Construct through :meth:`from_scores`, which copies, pins the mask
    column to ``MASK_LOGIT`` and validates finiteness of the rest.
    """

    values: np.ndarray
    mask_id: int

    def __post_init__(self):
        if self.values.ndim != 2:
            raise InvalidInputError("logit values must be a 2-d array")
        if not 0 <= self.mask_id < self.values.shape[1]:
            raise InvalidInputError("mask_id outside the vocabulary axis")
        self.values.setflags(write=False)

    @classmethod
    def from_scores(cls, values: np.ndarray, mask_id: int) -> "LogitMatrix":
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise InvalidInputError("logit values must be a 2-d array")
        if not 0 <= mask_id < arr.shape[1]:
            raise InvalidInputError("mask_id outside the vocabulary axis")
        arr[:, mask_id] = MASK_LOGIT
        non_mask = np.delete(arr, mask_id, axis=1)
        if not np.isfinite(non_mask).all():
            raise InvalidInputError("logits must be finite outside the mask column")
        if arr.shape[1] >= 2 and not (non_mask.max(axis=1) > MASK_LOGIT).all():
            raise InvalidInputError("every row needs a non-mask entry above the sentinel")
        return cls(arr, mask_id)

    @property
    def n_positions(self) -> int:
        return int(self.values.shape[0])

    @property
    def vocab_size(self) -> int:
        return int(self.values.shape[1])

    def argmax_tokens(self) -> np.ndarray:
        """Per-position argmax token id (ties resolve to the lowest id)."""
        return np.argmax(self.values, axis=1)

    def confidence_gaps(self, positions: Sequence[int] | np.ndarray | None = None) -> np.ndarray:
        """Top-1 minus top-2 logit per row, optionally for selected rows only."""
        vals = self.values if positions is None else self.values[np.asarray(positions, dtype=np.int64)]
        if self.vocab_size < 2:
            raise DegenerateVocabularyError("need at least two vocabulary entries")
        part = np.partition(vals, self.vocab_size - 2, axis=1)
        return part[:, -1] - part[:, -2]

    def top_probabilities(self, positions: Sequence[int] | np.ndarray | None = None) -> np.ndarray:
        """Softmax probability of each row's argmax token."""
        vals = self.values if positions is None else self.values[np.asarray(positions, dtype=np.int64)]
        shifted = vals - vals.max(axis=1, keepdims=True)
        return 1.0 / np.exp(shifted).sum(axis=1)


class DenoiserModel(Protocol):
    """Anything that maps (partially masked sequence, step counter) to logits."""

    vocab: Vocabulary

    def logits(self, seq: TokenSequence, t: int) -> LogitMatrix: ...


def predict_logits(model: DenoiserModel, seq: TokenSequence, t: int) -> LogitMatrix:
    """Query the model and enforce the shape/vocabulary contract.

    Pure in (model, seq, t): models are immutable after construction, so
    repeated calls return identical matrices.
    """
    if model.vocab.mask_id != seq.mask_id:
        raise ModelMismatchError(
            f"model mask id {model.vocab.mask_id} != sequence mask id {seq.mask_id}"
        )
    matrix = model.logits(seq, t)
    if matrix.n_positions != seq.n_total:
        raise ModelMismatchError(
            f"model produced {matrix.n_positions} rows for a {seq.n_total}-token sequence"
        )
    if matrix.vocab_size != model.vocab.size:
        raise ModelMismatchError(
            f"model produced {matrix.vocab_size} columns for a size-{model.vocab.size} vocabulary"
        )
    return matrix


@dataclass(frozen=True, eq=False)
class ScriptedOracle:
    """Deterministic test double: one prescribed logit matrix per step counter."""

    vocab: Vocabulary
    schedule: dict[int, LogitMatrix]
    t_max: int

    def __post_init__(self):
        missing = [t for t in range(1, self.t_max + 1) if t not in self.schedule]
        if missing:
            raise InvalidConfigError("schedule", f"missing step counters {missing[:5]}")
        for t, m in self.schedule.items():
            if m.vocab_size != self.vocab.size or m.mask_id != self.vocab.mask_id:
                raise InvalidConfigError("schedule", f"matrix at t={t} does not match the vocabulary")

    @classmethod
    def constant(cls, matrix: LogitMatrix, t_max: int, vocab: Vocabulary) -> "ScriptedOracle":
        """Same matrix at every step."""
        return cls(vocab, {t: matrix for t in range(1, t_max + 1)}, t_max)

    def logits(self, seq: TokenSequence, t: int) -> LogitMatrix:
        try:
            return self.schedule[t]
        except KeyError:
            raise ScheduleExhaustedError(
                f"step counter {t} outside the scripted range [1, {self.t_max}]"
            ) from None


@dataclass(frozen=True, eq=False)
class RampOracle:
    """Step-indexed model that flips from cycling decoys to a stable target.

    For step counters above ``stabilize_step`` the top-1 token at every
    generation position cycles through non-target tokens with margin
    ``pre_gap``; from ``stabilize_step`` down, the top-1 equals the target
    with margin ``post_gap``. Prompt rows always score the prompt token
    highest. Matrices depend only on (t, shape, prompt), never on which
    generation positions happen to be unmasked, so full trajectories are
    predictable in closed form.
    """

    vocab: Vocabulary
    target: np.ndarray
    stabilize_step: int
    pre_gap: float
    post_gap: float
    t_max: int

    def logits(self, seq: TokenSequence, t: int) -> LogitMatrix:
        if not 1 <= t <= self.t_max:
            raise ScheduleExhaustedError(f"step counter {t} outside [1, {self.t_max}]")
        if self.target.size != seq.gen_len:
            raise ModelMismatchError(
                f"target length {self.target.size} != generation length {seq.gen_len}"
            )
        if seq.mask_id != self.vocab.mask_id:
            raise ModelMismatchError("sequence mask id does not match the oracle vocabulary")
        n, v = seq.n_total, self.vocab.size
        scores = np.zeros((n, v), dtype=np.float64)
        for i in range(seq.prompt_len):
            scores[i, seq.tokens[i]] = self.post_gap
        stable = t <= self.stabilize_step
        for j in range(seq.gen_len):
            pos = seq.prompt_len + j
            tgt = int(self.target[j])
            if stable:
                scores[pos, tgt] = self.post_gap
            else:
                decoys = [v_ for v_ in range(v) if v_ != self.vocab.mask_id and v_ != tgt]
                scores[pos, decoys[(t + j) % len(decoys)]] = self.pre_gap
        return LogitMatrix.from_scores(scores, self.vocab.mask_id)


def make_ramp_oracle(
    stabilize_step: int,
    pre_gap: float,
    post_gap: float,
    target: Sequence[int],
    t_max: int,
    vocab: Vocabulary,
) -> RampOracle:
    """Build a ramp oracle; see :class:`RampOracle` for the regime it models."""
    if not 1 <= stabilize_step <= t_max:
        raise InvalidConfigError("stabilize_step", "must satisfy 1 <= stabilize_step <= t_max")
    if not post_gap > pre_gap >= 0.0:
        raise InvalidConfigError("post_gap", "must satisfy post_gap > pre_gap >= 0")
    if vocab.size < 3:
        raise InvalidConfigError("vocab", "need at least two non-mask tokens for decoys")
    tgt = np.asarray(list(target), dtype=np.int64)
    if tgt.size and (
        int(tgt.min()) < 0 or int(tgt.max()) >= vocab.size or (tgt == vocab.mask_id).any()
    ):
        raise InvalidInputError("target tokens must be non-mask vocabulary ids")
    tgt.setflags(write=False)
    return RampOracle(vocab, tgt, stabilize_step, float(pre_gap), float(post_gap), t_max)


def _context_key(tokens: np.ndarray, i: int, order: int, mask_id: int) -> ContextKey:
    """Window of `order` slots each side; out-of-bounds or masked slots -> BOUNDARY."""
    n = tokens.size
    left = tuple(
        int(tokens[j]) if 0 <= j < n and tokens[j] != mask_id else BOUNDARY
        for j in range(i - order, i)
    )
    right = tuple(
        int(tokens[j]) if 0 <= j < n and tokens[j] != mask_id else BOUNDARY
        for j in range(i + 1, i + 1 + order)
    )
    return left, right


@dataclass(frozen=True, eq=False)
class NGramDenoiser:
    """Count-based context model with add-alpha smoothing.

    ``counts[(left, right)][v]`` is how many times token v occurred in the
    training corpus between those contexts (windows of ``order`` tokens each
    side, truncated at sequence boundaries with the BOUNDARY sentinel).
    Logits are ln(count + alpha), so the softmax of a row is exactly the
    add-alpha probability estimate over non-mask tokens. Unseen contexts
    fall back to the uniform ln(alpha) row. The step counter is ignored:
    predictions depend only on the visible tokens.
    """

    order: int
    alpha: float
    vocab: Vocabulary
    counts: dict[ContextKey, np.ndarray]
    _log_rows: dict[ContextKey, np.ndarray] = field(init=False, repr=False)
    _default_row: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.order < 0:
            raise InvalidConfigError("order", "context window must be >= 0")
        if not self.alpha > 0.0:
            raise InvalidConfigError("alpha", "smoothing constant must be > 0")
        log_rows: dict[ContextKey, np.ndarray] = {}
        for key, cnt in self.counts.items():
            row = np.log(cnt.astype(np.float64) + self.alpha)
            row[self.vocab.mask_id] = MASK_LOGIT
            row.setflags(write=False)
            log_rows[key] = row
        default = np.full(self.vocab.size, math.log(self.alpha), dtype=np.float64)
        default[self.vocab.mask_id] = MASK_LOGIT
        default.setflags(write=False)
        object.__setattr__(self, "_log_rows", log_rows)
        object.__setattr__(self, "_default_row", default)

    @property
    def n_contexts(self) -> int:
        return len(self.counts)

    def logits(self, seq: TokenSequence, t: int) -> LogitMatrix:
        out = np.empty((seq.n_total, self.vocab.size), dtype=np.float64)
        for i in range(seq.n_total):
            key = _context_key(seq.tokens, i, self.order, seq.mask_id)
            out[i] = self._log_rows.get(key, self._default_row)
        return LogitMatrix(out, self.vocab.mask_id)


def train_ngram(
    corpus: Iterable[Sequence[int]],
    order: int,
    alpha: float,
    vocab: Vocabulary,
) -> NGramDenoiser:
    """Count (left context, right context) -> token occurrences over a corpus."""
    if order < 0:
        raise InvalidConfigError("order", "context window must be >= 0")
    if not alpha > 0.0:
        raise InvalidConfigError("alpha", "smoothing constant must be > 0")
    counts: dict[ContextKey, np.ndarray] = {}
    n_sequences = 0
    for seq in corpus:
        arr = np.asarray(list(seq), dtype=np.int64)
        if arr.size == 0:
            continue
        n_sequences += 1
        if (arr == vocab.mask_id).any():
            raise InvalidInputError("corpus sequences must not contain the mask id")
        if int(arr.min()) < 0 or int(arr.max()) >= vocab.size:
            raise InvalidInputError("corpus token id outside the vocabulary")
        for i in range(arr.size):
            key = _context_key(arr, i, order, vocab.mask_id)
            row = counts.get(key)
            if row is None:
                row = np.zeros(vocab.size, dtype=np.int64)
                counts[key] = row
            row[arr[i]] += 1
    if n_sequences == 0:
        raise EmptyCorpusError("training corpus is empty")
    return NGramDenoiser(order=order, alpha=float(alpha), vocab=vocab, counts=counts)


def _ctx_to_str(ctx: tuple[int, ...]) -> str:
    return " ".join("_" if c == BOUNDARY else str(c) for c in ctx)


def _ctx_from_str(text: str) -> tuple[int, ...]:
    if not text:
        return ()
    return tuple(BOUNDARY if part == "_" else int(part) for part in text.split(" "))


def save_ngram(model: NGramDenoiser, path) -> None:
    """Write the line-oriented `ngram v1` text format (deterministic order)."""
    lines = [
        f"ngram v1 {model.order} {model.alpha!r} {model.vocab.size} {model.vocab.mask_id}"
    ]
    for key in sorted(model.counts):
        left, right = key
        row = model.counts[key]
        for token in np.flatnonzero(row):
            lines.append(
                f"{_ctx_to_str(left)} | {_ctx_to_str(right)} | {int(token)} {int(row[token])}"
            )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_ngram(path) -> NGramDenoiser:
    """Read the `ngram v1` format; round-trips byte-exactly with save_ngram."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise InvalidInputError(f"{path}: empty model file")
    header = lines[0].split(" ")
    if len(header) != 6 or header[0] != "ngram" or header[1] != "v1":
        raise InvalidInputError(f"{path}: line 1: bad header")
    order, alpha = int(header[2]), float(header[3])
    vocab = Vocabulary(size=int(header[4]), mask_id=int(header[5]))
    counts: dict[ContextKey, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(" | ")
        if len(parts) != 3:
            raise InvalidInputError(f"{path}: line {lineno}: expected three ' | ' fields")
        try:
            left, right = _ctx_from_str(parts[0]), _ctx_from_str(parts[1])
            token_str, count_str = parts[2].split(" ")
            token, count = int(token_str), int(count_str)
        except ValueError:
            raise InvalidInputError(f"{path}: line {lineno}: malformed entry") from None
        if len(left) != order or len(right) != order:
            raise InvalidInputError(f"{path}: line {lineno}: context width != order")
        if not 0 <= token < vocab.size or count < 0:
            raise InvalidInputError(f"{path}: line {lineno}: token or count out of range")
        key = (left, right)
        row = counts.get(key)
        if row is None:
            row = np.zeros(vocab.size, dtype=np.int64)
            counts[key] = row
        row[token] += count
    return NGramDenoiser(order=order, alpha=alpha, vocab=vocab, counts=counts)
