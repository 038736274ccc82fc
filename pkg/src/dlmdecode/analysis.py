"""Measurement apparatus over decode traces.

Three families of questions, all answered from recorded traces alone:

* convergence — at what fraction of the step budget did the answer-region
  top-1 tokens first match the ground truth, and from when on did they stop
  changing (``first_match_step``, ``convergence_histogram``);
* dynamics — per (position, step), did the top-1 prediction change, stay,
  or get decoded right there (``dynamics_matrix``);
* accounting — step-budget speedups and answer-region agreement between two
  decodes (``speedup``, ``agreement``).

Traces must have been recorded with ``record_top1=True`` for the first two.
``top1`` carries the frozen sequence token at decoded positions, so the
final step's top1 vector is exactly the final output and positions never
register a change after they are decoded.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (
    AnswerRegion,
    DecodeTrace,
    EmptyInputError,
    InvalidInputError,
    MissingTop1Error,
    NotApplicableError,
    TokenSequence,
)

__all__ = [
    "ConvergenceStats",
    "first_match_step",
    "Histogram",
    "convergence_histogram",
    "UNCHANGED",
    "CHANGED",
    "DECODED_HERE",
    "CLASS_CHARS",
    "DynamicsMatrix",
    "dynamics_matrix",
    "speedup",
    "format_speedup",
    "Agreement",
    "agreement",
    "write_histogram_csv",
    "write_dynamics_csv",
    "write_summary_json",
]


@dataclass(frozen=True)
class ConvergenceStats:
    """When the answer first matched and from when it stayed put, as budget fractions."""

    first_match_fraction: float
    stable_from_fraction: float
    matched: bool


def first_match_step(
    trace: DecodeTrace,
    answer: Sequence[int] | np.ndarray,
    region: AnswerRegion,
) -> ConvergenceStats:
    """Locate the earliest step whose region top-1 equals the answer.

    Fractions are (t_max - t + 1) / t_max, so the earliest possible step
    scores 1/t_max and the final step scores 1 for a full-budget run;
    committed traces keep t_max as the denominator so convergence and
    speedup share a scale. Only applicable when the final output contains
    the answer; otherwise NotApplicableError is raised.
    """
    steps = trace.steps
    if any(s.top1 is None for s in steps):
        raise MissingTop1Error("trace was not recorded with record_top1=True")
    ans = np.asarray(list(answer), dtype=np.int64)
    if len(region) != ans.size:
        raise InvalidInputError(f"answer length {ans.size} != region length {len(region)}")
    if region.end > steps[0].top1.size:
        raise InvalidInputError("region extends past the sequence")
    window = slice(region.start, region.end)
    vectors = [s.top1[window] for s in steps]
    if not np.array_equal(vectors[-1], ans):
        raise NotApplicableError("final output does not contain the ground-truth answer")

    t_max = trace.t_max
    first_idx = next(i for i, v in enumerate(vectors) if np.array_equal(v, ans))
    stable_idx = len(vectors) - 1
    while stable_idx > 0 and np.array_equal(vectors[stable_idx - 1], vectors[-1]):
        stable_idx -= 1
    return ConvergenceStats(
        first_match_fraction=(t_max - steps[first_idx].t + 1) / t_max,
        stable_from_fraction=(t_max - steps[stable_idx].t + 1) / t_max,
        matched=True,
    )


@dataclass(frozen=True)
class Histogram:
    """Equal-width bins over (0, 1] plus exact boundary-count summaries."""

    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    n: int
    frac_le_50: float
    frac_le_70: float


def convergence_histogram(fractions: Iterable[float], bin_count: int = 20) -> Histogram:
    """Bin completion fractions; summaries are exact counts, not bin sums."""
    values = np.asarray(list(fractions), dtype=np.float64)
    if values.size == 0:
        raise EmptyInputError("no fractions to histogram")
    if bin_count < 1:
        raise InvalidInputError("bin_count must be >= 1")
    if not ((values > 0.0) & (values <= 1.0)).all():
        raise InvalidInputError("fractions must lie in (0, 1]")
    # Bin i covers (i/bins, (i+1)/bins]; right-inclusive to match the domain.
    idx = np.ceil(values * bin_count).astype(np.int64) - 1
    idx = np.clip(idx, 0, bin_count - 1)
    counts = np.bincount(idx, minlength=bin_count)
    edges = tuple(i / bin_count for i in range(bin_count + 1))
    n = int(values.size)
    return Histogram(
        bin_edges=edges,
        counts=tuple(int(c) for c in counts),
        n=n,
        frac_le_50=int((values <= 0.5).sum()) / n,
        frac_le_70=int((values <= 0.7).sum()) / n,
    )


UNCHANGED, CHANGED, DECODED_HERE = 0, 1, 2
CLASS_CHARS = {UNCHANGED: "U", CHANGED: "C", DECODED_HERE: "D"}


@dataclass(frozen=True, eq=False)
class DynamicsMatrix:
    """Per (position, step) classification of top-1 behaviour.

    ``classes[i, j]`` refers to position i at the j-th executed step (whose
    counter is ``step_ts[j]``): DECODED_HERE where the position was unmasked
    that step, CHANGED where its top-1 differs from the previous step, else
    UNCHANGED. The first step compares against nothing and is unchanged by
    convention.
    """

    classes: np.ndarray
    step_ts: tuple[int, ...]

    @property
    def n_positions(self) -> int:
        return int(self.classes.shape[0])


def dynamics_matrix(trace: DecodeTrace) -> DynamicsMatrix:
    steps = trace.steps
    if any(s.top1 is None for s in steps):
        raise MissingTop1Error("trace was not recorded with record_top1=True")
    n_positions = int(steps[0].top1.size)
    classes = np.full((n_positions, len(steps)), UNCHANGED, dtype=np.uint8)
    prev = None
    for j, step in enumerate(steps):
        if prev is not None:
            classes[step.top1 != prev, j] = CHANGED
        for pos in step.unmasked_positions:
            classes[pos, j] = DECODED_HERE
        prev = step.top1
    return DynamicsMatrix(classes, tuple(s.t for s in steps))


def speedup(full_steps: int, used_steps: int) -> float:
    """Step-budget ratio of a full run over an accelerated one."""
    if used_steps < 1 or full_steps < 1:
        raise InvalidInputError("step counts must be >= 1")
    return full_steps / used_steps


def format_speedup(ratio: float) -> str:
    """Render a speedup the way result tables print it, e.g. ``(2.34×)``."""
    return f"({ratio:.2f}×)"


@dataclass(frozen=True)
class Agreement:
    exact: bool
    token_match_fraction: float


def agreement(
    full_out: TokenSequence,
    other_out: TokenSequence,
    region: AnswerRegion,
) -> Agreement:
    """Answer-region agreement between two decodes of the same instance."""
    if full_out.n_total != other_out.n_total:
        raise InvalidInputError("sequences must have equal length")
    if region.end > full_out.n_total:
        raise InvalidInputError("region extends past the sequence")
    a = full_out.tokens[region.start : region.end]
    b = other_out.tokens[region.start : region.end]
    matches = int((a == b).sum())
    return Agreement(exact=matches == len(region), token_match_fraction=matches / len(region))


def write_histogram_csv(hist: Histogram, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for i, count in enumerate(hist.counts):
            writer.writerow([repr(hist.bin_edges[i]), repr(hist.bin_edges[i + 1]), count])


def write_dynamics_csv(dyn: DynamicsMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["position", "step", "class"])
        for pos in range(dyn.n_positions):
            for j, t in enumerate(dyn.step_ts):
                writer.writerow([pos, t, CLASS_CHARS[int(dyn.classes[pos, j])]])


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
