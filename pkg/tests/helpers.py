"""Shared builders and assertions for the test suite."""

from __future__ import annotations

import numpy as np

from dlmdecode import (
    AnswerRegion,
    DecodeConfig,
    DecodeTrace,
    LogitMatrix,
    ScriptedOracle,
    StepRecord,
    TokenSequence,
    Vocabulary,
    new_sequence,
)


def random_logit_matrix(rng: np.random.Generator, n_positions: int, vocab: Vocabulary) -> LogitMatrix:
    return LogitMatrix.from_scores(
        rng.normal(0.0, 3.0, size=(n_positions, vocab.size)), vocab.mask_id
    )


def random_scripted_oracle(
    rng: np.random.Generator, vocab: Vocabulary, n_total: int, t_max: int
) -> ScriptedOracle:
    schedule = {t: random_logit_matrix(rng, n_total, vocab) for t in range(1, t_max + 1)}
    return ScriptedOracle(vocab, schedule, t_max)


def divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def random_setup(rng: np.random.Generator, *, max_gen_len: int = 32, max_t: int = 50):
    """Random (vocab, seq0, cfg) triple with all invariants satisfied."""
    vocab = Vocabulary(size=int(rng.integers(3, 9)), mask_id=0)
    gen_len = int(rng.integers(1, max_gen_len + 1))
    block_len = int(rng.choice(divisors(gen_len)))
    n_blocks = gen_len // block_len
    t_max = int(rng.integers(n_blocks, max_t + 1))
    prompt_len = int(rng.integers(0, 5))
    prompt = rng.integers(1, vocab.size, size=prompt_len).tolist()
    seq0 = new_sequence(prompt, gen_len, vocab)
    cfg = DecodeConfig(
        gen_len=gen_len,
        block_len=block_len,
        t_max=t_max,
        remask_strategy=str(rng.choice(["random", "low_confidence"])),
        seed=int(rng.integers(0, 2**32)),
        record_top1=bool(rng.integers(0, 2)),
    )
    return vocab, seq0, cfg


def assert_traces_equal(a: DecodeTrace, b: DecodeTrace) -> None:
    assert a.model_calls == b.model_calls
    assert a.commit_step == b.commit_step
    assert len(a.steps) == len(b.steps)
    for sa, sb in zip(a.steps, b.steps):
        assert sa == sb, f"step records differ at t={sa.t}"


def gap_row_matrix(gaps: list[float], vocab: Vocabulary) -> LogitMatrix:
    """One row per requested gap: top-1 logit = gap at token 1, rest zero."""
    values = np.zeros((len(gaps), vocab.size), dtype=np.float64)
    for i, g in enumerate(gaps):
        values[i, 1] = g
    return LogitMatrix.from_scores(values, vocab.mask_id)


def synthetic_trace(top1_per_step, t_max, unmasked=None) -> DecodeTrace:
    """Measurement-only trace: top1 vectors supplied per executed step."""
    records = []
    for i, vec in enumerate(top1_per_step):
        t = t_max - i
        records.append(
            StepRecord(
                t=t,
                progress=(t_max - t) / t_max,
                mean_gap=0.0,
                unmasked_positions=() if unmasked is None else unmasked[i],
                top1=np.asarray(vec, dtype=np.int64),
            )
        )
    return DecodeTrace(tuple(records), commit_step=None, model_calls=len(records))


def cyclic_pattern_corpus(
    rng: np.random.Generator,
    n_sequences: int,
    n_tokens: int,
    min_len: int = 20,
    max_len: int = 40,
) -> list[list[int]]:
    """Sequences that walk the cycle 1 -> 2 -> ... -> n_tokens -> 1 from random phases."""
    corpus = []
    for _ in range(n_sequences):
        phase = int(rng.integers(0, n_tokens))
        length = int(rng.integers(min_len, max_len + 1))
        corpus.append([(phase + i) % n_tokens + 1 for i in range(length)])
    return corpus


def cyclic_continuation(start_token: int, length: int, n_tokens: int) -> list[int]:
    """The pattern's unique continuation after ``start_token``."""
    return [(start_token - 1 + i + 1) % n_tokens + 1 for i in range(length)]
