"""Forward masking process and the exact per-position transition kernel.

Noise levels live on the continuous scale (0, 1]: level t masks each
generation position independently with probability t. The reverse
transition from level t to an earlier level s keeps unmasked tokens
verbatim, keeps a masked position masked with probability s/t, and
otherwise fills it with a draw from a caller-supplied per-position
predictive distribution.

RNG discipline: callers own the generator. Draws are consumed in ascending
position order — one pass of stay/unmask uniforms over masked positions,
then one pass of token draws over the positions being unmasked — so runs
are bit-reproducible for a given seed.
"""

from __future__ import annotations

import numpy as np

from .core import (
    InvalidConfigError,
    InvalidInputError,
    InvalidTransitionError,
    TokenSequence,
)

__all__ = ["corrupt", "tau_leap_step", "one_hot_predictor"]


def _check_level(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 < value <= 1.0:
        raise InvalidConfigError(name, "noise level must lie in (0, 1]")
    return value


def corrupt(x0: TokenSequence, t: float, rng: np.random.Generator) -> TokenSequence:
    """Mask each generation position of a clean sequence with probability t.

    Prompt positions are never touched. Deterministic given (x0, t, rng
    state); at t=1.0 every generation position is masked because uniform
    draws are strictly below 1.
    """
    t = _check_level(t, "t")
    draws = rng.random(x0.gen_len)
    out = x0.tokens.copy()
    gen = out[x0.prompt_len:]
    gen[draws < t] = x0.mask_id
    return x0.with_tokens(out)


def tau_leap_step(
    x_t: TokenSequence,
    t: float,
    s: float,
    predictor: np.ndarray,
    rng: np.random.Generator,
) -> TokenSequence:
    """One transition from corruption level t to an earlier level s < t.

    Per position: unmasked tokens are copied verbatim; a masked position
    stays masked with probability s/t and is otherwise filled with a draw
    from ``predictor[position]``, a probability row over non-mask tokens.
    """
    t = _check_level(t, "t")
    s = _check_level(s, "s")
    if s >= t:
        raise InvalidTransitionError(f"target level s={s} must be below source level t={t}")
    rows = np.asarray(predictor, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] != x_t.n_total:
        raise InvalidInputError("predictor must have one probability row per position")

    out = x_t.tokens.copy()
    masked = np.flatnonzero(out == x_t.mask_id)
    if masked.size == 0:
        return x_t.with_tokens(out)

    stay_draws = rng.random(masked.size)
    unmask = masked[stay_draws >= s / t]
    if unmask.size:
        token_draws = rng.random(unmask.size)
        cdfs = np.cumsum(rows[unmask], axis=1)
        scaled = token_draws * cdfs[:, -1]
        out[unmask] = np.argmax(cdfs > scaled[:, None], axis=1)
    return x_t.with_tokens(out)


def one_hot_predictor(reference: TokenSequence, vocab_size: int) -> np.ndarray:
    """Predictor rows that put probability 1 on the reference token per position."""
    rows = np.zeros((reference.n_total, vocab_size), dtype=np.float64)
    rows[np.arange(reference.n_total), reference.tokens] = 1.0
    return rows
