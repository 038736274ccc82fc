"""Baseline reverse-generation loop: predict, select, unmask, repeat.

Generation runs block by block, left to right. Within a block, the step
budget allotted to it unmasks a fixed number of tokens per step (even
split, remainder to the earliest steps), selected either uniformly at
random or by keeping the highest-confidence predictions. Unmasked tokens
are never modified again.

Determinism: identical (model, seq0, cfg, seed) produce bit-identical
outputs and traces. Ties break on the lowest position index, then the
lowest token id. A batch runner may decode many sequences concurrently by
deriving one independent generator per sequence (seed XOR sequence index);
a single decode is strictly sequential over its own state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (
    DecodeConfig,
    DecodeTrace,
    InvalidConfigError,
    InvalidInputError,
    InvalidUnmaskCountError,
    RemaskStrategy,
    StepRecord,
    TokenSequence,
    resolve_answer_region,
    validate_config,
)
from .models import DenoiserModel, LogitMatrix, predict_logits
from .prophet import CommitDecision, ThresholdParams, mean_gap, should_commit

__all__ = [
    "BlockSchedule",
    "build_schedule",
    "remask_random",
    "remask_low_confidence",
    "decode_full",
    "sequence_rng",
]


@dataclass(frozen=True)
class BlockSchedule:
    """Block ranges (relative to the generation region) and per-step unmask counts.

    ``blocks[j]`` is the half-open [start, end) of block j within the
    generation region; ``unmask_counts[j][k]`` is how many tokens step k of
    block j unmasks. Per block the counts sum to the block length and differ
    by at most one, larger counts first.
    """

    blocks: tuple[tuple[int, int], ...]
    steps_per_block: tuple[int, ...]
    unmask_counts: tuple[tuple[int, ...], ...]


def build_schedule(gen_len: int, block_len: int, t_max: int) -> BlockSchedule:
    """Divide the step budget across blocks and unmask counts across steps."""
    if gen_len < 1 or block_len < 1 or gen_len % block_len != 0:
        raise InvalidConfigError("block_len", "gen_len must be a positive multiple of block_len")
    n_blocks = gen_len // block_len
    if t_max < n_blocks:
        raise InvalidConfigError("t_max", f"step budget {t_max} < block count {n_blocks}")
    base_steps, extra_steps = divmod(t_max, n_blocks)
    blocks = []
    steps_per_block = []
    unmask_counts = []
    for j in range(n_blocks):
        blocks.append((j * block_len, (j + 1) * block_len))
        steps_j = base_steps + (1 if j < extra_steps else 0)
        steps_per_block.append(steps_j)
        base_count, extra_count = divmod(block_len, steps_j)
        unmask_counts.append(
            tuple(base_count + (1 if k < extra_count else 0) for k in range(steps_j))
        )
    return BlockSchedule(tuple(blocks), tuple(steps_per_block), tuple(unmask_counts))


def remask_random(
    masked_in_block: Iterable[int] | np.ndarray,
    k: int,
    rng: np.random.Generator,
) -> tuple[int, ...]:
    """Uniformly random k-subset of the masked positions, ascending."""
    positions = np.asarray(sorted(int(i) for i in masked_in_block), dtype=np.int64)
    if not 0 <= k <= positions.size:
        raise InvalidUnmaskCountError(f"cannot unmask {k} of {positions.size} masked positions")
    if k == 0:
        return ()
    chosen = rng.choice(positions.size, size=k, replace=False)
    return tuple(sorted(int(positions[i]) for i in chosen))


def remask_low_confidence(
    logits: LogitMatrix,
    masked_in_block: Iterable[int] | np.ndarray,
    k: int,
) -> tuple[int, ...]:
    """The k masked positions with the highest argmax softmax probability.

    Ties break toward the lowest position index; everything not selected
    stays masked for a later step.
    """
    positions = np.asarray(sorted(int(i) for i in masked_in_block), dtype=np.int64)
    if not 0 <= k <= positions.size:
        raise InvalidUnmaskCountError(f"cannot unmask {k} of {positions.size} masked positions")
    if k == 0:
        return ()
    conf = logits.top_probabilities(positions)
    order = np.lexsort((positions, -conf))
    return tuple(sorted(int(positions[i]) for i in order[:k]))


def sequence_rng(seed: int, index: int) -> np.random.Generator:
    """Independent per-sequence stream: seed XOR sequence index."""
    return np.random.default_rng((int(seed) ^ int(index)) & (2**64 - 1))


def _record_top1(tokens: np.ndarray, mask_id: int, logits: LogitMatrix) -> np.ndarray:
    # Decoded positions report their frozen token; masked ones the model argmax.
    return np.where(tokens == mask_id, logits.argmax_tokens(), tokens)


def _fill(
    tokens: np.ndarray,
    positions: Sequence[int],
    logits: LogitMatrix,
    temperature: float,
    rng: np.random.Generator,
) -> None:
    if not positions:
        return
    if temperature == 0.0:
        arg = logits.argmax_tokens()
        for pos in positions:
            tokens[pos] = arg[pos]
        return
    for pos in positions:  # ascending; one uniform per draw
        row = logits.values[pos]
        with np.errstate(over="ignore"):
            z = (row - row.max()) / temperature
        weights = np.exp(z)
        cdf = np.cumsum(weights)
        tokens[pos] = min(
            int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")),
            logits.vocab_size - 1,
        )


def _decode(
    model: DenoiserModel,
    seq0: TokenSequence,
    cfg: DecodeConfig,
    rng: np.random.Generator | None,
    *,
    early_commit: bool,
) -> tuple[TokenSequence, DecodeTrace, CommitDecision | None]:
    validate_config(cfg)
    if seq0.gen_len != cfg.gen_len:
        raise InvalidConfigError(
            "gen_len", f"config gen_len {cfg.gen_len} != sequence gen_len {seq0.gen_len}"
        )
    if int((seq0.tokens == seq0.mask_id).sum()) != seq0.gen_len:
        raise InvalidInputError("decoding expects a fully masked generation region")
    region = resolve_answer_region(cfg, seq0)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    schedule = build_schedule(cfg.gen_len, cfg.block_len, cfg.t_max)
    params = ThresholdParams.from_config(cfg)

    tokens = seq0.tokens.copy()
    mask_id = seq0.mask_id
    records: list[StepRecord] = []
    decision: CommitDecision | None = None
    t = cfg.t_max

    for (rel_start, rel_end), counts in zip(schedule.blocks, schedule.unmask_counts):
        block_lo = seq0.prompt_len + rel_start
        block_hi = seq0.prompt_len + rel_end
        for count in counts:
            seq_now = seq0.with_tokens(tokens)
            logits = predict_logits(model, seq_now, t)
            masked_all = np.flatnonzero(tokens == mask_id)
            gap = mean_gap(logits, region, masked_all)
            progress = (cfg.t_max - t) / cfg.t_max

            if early_commit:
                decision = should_commit(gap, progress, params, step=t)
                if decision.committed:
                    arg = logits.argmax_tokens()
                    tokens[masked_all] = arg[masked_all]
                    records.append(
                        StepRecord(
                            t=t,
                            progress=progress,
                            mean_gap=gap,
                            unmasked_positions=tuple(int(i) for i in masked_all),
                            top1=_record_top1(tokens, mask_id, logits) if cfg.record_top1 else None,
                            committed=True,
                        )
                    )
                    trace = DecodeTrace(tuple(records), commit_step=t, model_calls=len(records))
                    return seq0.with_tokens(tokens), trace, decision

            in_block = masked_all[(masked_all >= block_lo) & (masked_all < block_hi)]
            if cfg.remask_strategy is RemaskStrategy.RANDOM:
                selected = remask_random(in_block, count, rng)
            else:
                selected = remask_low_confidence(logits, in_block, count)
            _fill(tokens, selected, logits, cfg.temperature, rng)
            records.append(
                StepRecord(
                    t=t,
                    progress=progress,
                    mean_gap=gap,
                    unmasked_positions=selected,
                    top1=_record_top1(tokens, mask_id, logits) if cfg.record_top1 else None,
                    committed=False,
                )
            )
            t -= 1

    trace = DecodeTrace(tuple(records), commit_step=None, model_calls=len(records))
    return seq0.with_tokens(tokens), trace, decision


def decode_full(
    model: DenoiserModel,
    seq0: TokenSequence,
    cfg: DecodeConfig,
    rng: np.random.Generator | None = None,
) -> tuple[TokenSequence, DecodeTrace]:
    """Run the full step budget; never commits early.

    Returns the decoded sequence (no generation position left masked) and
    the per-step trace. When ``rng`` is omitted, a fresh generator seeded
    from ``cfg.seed`` is used, which is what makes runs reproducible.
    """
    seq, trace, _ = _decode(model, seq0, cfg, rng, early_commit=False)
    return seq, trace
