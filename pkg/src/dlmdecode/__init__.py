"""Masked-diffusion sequence decoding with confidence-gap early commit.

A desk-scale decoding engine for masked (absorbing-state) diffusion
language models. The usual predict/re-mask refinement loop is provided as
the baseline (``decode_full``); ``decode_prophet`` wraps it with an early
commit check that stops refinement and fills every remaining mask in one
parallel step once the model's top-2 logit margin over the answer region
clears a progress-staged threshold. Pluggable toy denoisers (a scripted
oracle and a count-based context model) plus the analysis helpers make
the decoding dynamics measurable without any neural network.
"""

__version__ = "0.1.0"

from .core import (
    AnswerRegion,
    DecodeConfig,
    DecodeTrace,
    DegenerateVocabularyError,
    DlmDecodeError,
    EmptyCorpusError,
    EmptyInputError,
    InvalidConfigError,
    InvalidInputError,
    InvalidPromptError,
    InvalidTransitionError,
    InvalidUnmaskCountError,
    MissingTop1Error,
    ModelMismatchError,
    NotApplicableError,
    RemaskStrategy,
    ScheduleExhaustedError,
    StepRecord,
    TokenSequence,
    Vocabulary,
    masked_positions,
    new_sequence,
    resolve_answer_region,
    validate_config,
)
from .models import (
    BOUNDARY,
    MASK_LOGIT,
    LogitMatrix,
    NGramDenoiser,
    RampOracle,
    ScriptedOracle,
    load_ngram,
    make_ramp_oracle,
    predict_logits,
    save_ngram,
    train_ngram,
)
from .forward import corrupt, one_hot_predictor, tau_leap_step
from .prophet import (
    CommitDecision,
    ThresholdParams,
    commit,
    confidence_gap,
    decode_prophet,
    mean_gap,
    should_commit,
    threshold,
)
from .decoder import (
    BlockSchedule,
    build_schedule,
    decode_full,
    remask_low_confidence,
    remask_random,
    sequence_rng,
)
from .analysis import (
    CHANGED,
    CLASS_CHARS,
    DECODED_HERE,
    UNCHANGED,
    Agreement,
    ConvergenceStats,
    DynamicsMatrix,
    Histogram,
    agreement,
    convergence_histogram,
    dynamics_matrix,
    first_match_step,
    format_speedup,
    speedup,
)

__all__ = [name for name in dir() if not name.startswith("_")]
