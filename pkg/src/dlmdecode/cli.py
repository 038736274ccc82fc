"""Command-line front end: reproducible decoding runs with machine-readable outputs.

Subcommands
-----------
decode     one decoding run; writes output tokens, a JSON-lines trace, and a
           run manifest with content hashes.
compare    run the Full / Half / early-commit strategies over a dataset of
           (prompt, answer, region) instances and emit a summary CSV.
stats      convergence histogram + summary JSON and per-trace dynamics CSVs
           from recorded traces.
train-toy  fit the count-based context denoiser on a token-id corpus and
           write the `ngram v1` text format.

Exit codes: 0 success, 2 usage, 3 input or I/O failure, 4 configuration
error (the message names the offending field). Token ids are the only
interface; there is no tokenizer. The environment variable PROPHET_SEED is
used when --seed is not given.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    agreement,
    convergence_histogram,
    dynamics_matrix,
    first_match_step,
    format_speedup,
    speedup,
    write_dynamics_csv,
    write_histogram_csv,
    write_summary_json,
)
from .core import (
    AnswerRegion,
    DecodeConfig,
    DecodeTrace,
    DlmDecodeError,
    EmptyInputError,
    InvalidConfigError,
    InvalidInputError,
    NotApplicableError,
    StepRecord,
    new_sequence,
)
from .decoder import decode_full, sequence_rng
from .models import load_ngram, make_ramp_oracle, save_ngram, train_ngram
from .core import Vocabulary
from .prophet import decode_prophet

__all__ = ["main", "entry", "build_parser"]


def _parse_ids(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(part) for part in text.split(",")]
    except ValueError:
        raise InvalidInputError(f"bad token-id list: {text!r}") from None


def _parse_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise InvalidInputError(f"expected two comma-separated values, got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_region(text: str) -> AnswerRegion:
    parts = text.split(",")
    if len(parts) != 2:
        raise InvalidInputError(f"expected start,end region, got {text!r}")
    return AnswerRegion(int(parts[0]), int(parts[1]))


def _load_model(spec: str):
    """Resolve a model descriptor: `ngram:<path>` or `ramp:<k=v,...>`."""
    if spec.startswith("ngram:"):
        return load_ngram(spec[len("ngram:"):])
    if spec.startswith("ramp:"):
        fields: dict[str, str] = {}
        for item in spec[len("ramp:"):].split(","):
            if "=" not in item:
                raise InvalidInputError(f"bad ramp parameter {item!r}")
            key, value = item.split("=", 1)
            fields[key] = value
        try:
            vocab = Vocabulary(size=int(fields["vocab"]), mask_id=int(fields.get("mask", "0")))
            target = [int(x) for x in fields["target"].split("+")]
            return make_ramp_oracle(
                stabilize_step=int(fields["tstar"]),
                pre_gap=float(fields.get("pre", "1.0")),
                post_gap=float(fields["post"]),
                target=target,
                t_max=int(fields["tmax"]),
                vocab=vocab,
            )
        except KeyError as exc:
            raise InvalidInputError(f"ramp model spec missing {exc}") from None
    raise InvalidInputError(f"unknown model spec {spec!r} (expected ngram:... or ramp:...)")


def _resolve_seed(arg_seed: int | None) -> int:
    if arg_seed is not None:
        return arg_seed
    env = os.environ.get("PROPHET_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InvalidInputError(f"PROPHET_SEED must be an integer, got {env!r}") from None
    return 0


def _config_from_args(args, seed: int, prophet_enabled: bool) -> DecodeConfig:
    region = getattr(args, "answer_region", None)
    return DecodeConfig(
        gen_len=args.gen_len,
        block_len=args.block_len,
        t_max=args.steps,
        remask_strategy="low_confidence" if args.remask == "low_conf" else args.remask,
        prophet_enabled=prophet_enabled,
        tau_high=args.tau_high,
        tau_mid=args.tau_mid,
        tau_low=args.tau_low,
        breakpoints=_parse_pair(args.breakpoints),
        answer_region=_parse_region(region) if region else None,
        seed=seed,
        record_top1=getattr(args, "record_top1", False),
        temperature=args.temperature,
    )


def _config_snapshot(cfg: DecodeConfig) -> dict:
    snap = dataclasses.asdict(cfg)
    snap["remask_strategy"] = cfg.remask_strategy.value
    snap["breakpoints"] = list(cfg.breakpoints)
    if cfg.answer_region is not None:
        snap["answer_region"] = [cfg.answer_region.start, cfg.answer_region.end]
    return snap


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_tokens(seq, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(" ".join(str(int(x)) for x in seq.tokens) + "\n")


def write_trace_jsonl(trace: DecodeTrace, path) -> None:
    """One JSON object per step: {t, p, mean_gap, unmasked, committed, top1?}."""
    with open(path, "w", encoding="utf-8") as fh:
        for step in trace.steps:
            obj = {
                "t": step.t,
                "p": step.progress,
                "mean_gap": step.mean_gap,
                "unmasked": list(step.unmasked_positions),
                "committed": step.committed,
            }
            if step.top1 is not None:
                obj["top1"] = [int(x) for x in step.top1]
            fh.write(json.dumps(obj) + "\n")


def read_trace_jsonl(path) -> DecodeTrace:
    steps: list[StepRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                steps.append(
                    StepRecord(
                        t=int(obj["t"]),
                        progress=float(obj["p"]),
                        mean_gap=float(obj["mean_gap"]),
                        unmasked_positions=tuple(obj["unmasked"]),
                        top1=np.asarray(obj["top1"], dtype=np.int64) if "top1" in obj else None,
                        committed=bool(obj["committed"]),
                    )
                )
            except (KeyError, ValueError, TypeError):
                raise InvalidInputError(f"{path}: line {lineno}: malformed trace record") from None
    if not steps:
        raise InvalidInputError(f"{path}: no step records")
    last = steps[-1]
    return DecodeTrace(
        steps=tuple(steps),
        commit_step=last.t if last.committed else None,
        model_calls=len(steps),
    )


def cmd_decode(args) -> int:
    model = _load_model(args.model)
    seed = _resolve_seed(args.seed)
    cfg = _config_from_args(args, seed, prophet_enabled=args.prophet == "on")
    prompt = _parse_ids(args.prompt_ids) + _parse_ids(args.suffix_ids)
    seq0 = new_sequence(prompt, cfg.gen_len, model.vocab)

    if cfg.prophet_enabled:
        seq, trace, decision = decode_prophet(model, seq0, cfg)
        committed_note = (
            f"committed at t={decision.step}" if decision.committed else "no early commit"
        )
    else:
        seq, trace = decode_full(model, seq0, cfg)
        committed_note = "baseline (no commit check)"
    print(
        f"steps used {trace.model_calls}/{cfg.t_max} "
        f"{format_speedup(speedup(cfg.t_max, trace.model_calls))}; {committed_note}",
        file=sys.stderr,
    )

    outputs: dict[str, dict] = {}
    if args.out:
        _write_tokens(seq, args.out)
        outputs[args.out] = {"sha256": _sha256(args.out)}
    else:
        print(" ".join(str(int(x)) for x in seq.tokens))
    if args.trace_out:
        write_trace_jsonl(trace, args.trace_out)
        outputs[args.trace_out] = {"sha256": _sha256(args.trace_out)}
    if args.manifest_out:
        manifest = {
            "command": "decode",
            "version": __version__,
            "model": args.model,
            "seed": seed,
            "config": _config_snapshot(cfg),
            "outputs": outputs,
        }
        with open(args.manifest_out, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _parse_dataset(path) -> list[tuple[list[int], list[int], AnswerRegion]]:
    """Lines of `prompt-ids | answer-ids | region-start,region-end`."""
    instances = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [part.strip() for part in line.split("|")]
            if len(parts) != 3:
                raise InvalidInputError(f"{path}: line {lineno}: expected three '|' fields")
            try:
                prompt = _parse_ids(parts[0])
                answer = _parse_ids(parts[1])
                region = _parse_region(parts[2])
            except (DlmDecodeError, ValueError):
                raise InvalidInputError(f"{path}: line {lineno}: malformed instance") from None
            if len(region) != len(answer):
                raise InvalidInputError(
                    f"{path}: line {lineno}: region length {len(region)} != answer length {len(answer)}"
                )
            instances.append((prompt, answer, region))
    if not instances:
        raise EmptyInputError(f"{path}: dataset contains no instances")
    return instances


def cmd_compare(args) -> int:
    model = _load_model(args.model)
    seed = _resolve_seed(args.seed)
    instances = _parse_dataset(args.dataset)
    base = _config_from_args(args, seed, prophet_enabled=False)
    half_t = base.t_max // 2
    strategies = ("full", "half", "prophet")
    stats = {
        name: {"steps": [], "speedup": [], "exact": [], "token": [], "gt": []}
        for name in strategies
    }
    details: list[str] = []

    for index, (prompt, answer, region) in enumerate(instances):
        seq0 = new_sequence(prompt, base.gen_len, model.vocab)
        inst_seed = (seed ^ index) & (2**64 - 1)
        cfg_full = dataclasses.replace(base, seed=inst_seed, answer_region=region)
        cfg_half = dataclasses.replace(cfg_full, t_max=half_t)
        cfg_prophet = dataclasses.replace(cfg_full, prophet_enabled=True)

        full_seq, full_trace = decode_full(model, seq0, cfg_full)
        half_seq, half_trace = decode_full(model, seq0, cfg_half)
        pro_seq, pro_trace, _ = decode_prophet(model, seq0, cfg_prophet)

        answer_arr = np.asarray(answer, dtype=np.int64)
        for name, out_seq, trace in (
            ("full", full_seq, full_trace),
            ("half", half_seq, half_trace),
            ("prophet", pro_seq, pro_trace),
        ):
            agr = agreement(full_seq, out_seq, region)
            used = trace.model_calls
            gt = bool(
                np.array_equal(out_seq.tokens[region.start : region.end], answer_arr)
            )
            stats[name]["steps"].append(used)
            stats[name]["speedup"].append(speedup(base.t_max, used))
            stats[name]["exact"].append(float(agr.exact))
            stats[name]["token"].append(agr.token_match_fraction)
            stats[name]["gt"].append(float(gt))
            details.append(
                f"{index},{name},{used},{speedup(base.t_max, used):.4f},"
                f"{int(agr.exact)},{agr.token_match_fraction:.6f},{int(gt)}"
            )

    header = (
        "strategy,instances,exact_agreement,token_agreement,gt_match,"
        "mean_steps,mean_speedup,speedup_str"
    )
    rows = [header]
    for name in strategies:
        s = stats[name]
        mean_speedup = float(np.mean(s["speedup"]))
        rows.append(
            f"{name},{len(instances)},{float(np.mean(s['exact'])):.6f},"
            f"{float(np.mean(s['token'])):.6f},{float(np.mean(s['gt'])):.6f},"
            f"{float(np.mean(s['steps'])):.2f},{mean_speedup:.4f},"
            f"{format_speedup(mean_speedup)}"
        )
    table = "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table)
    else:
        sys.stdout.write(table)
    if args.details_out:
        with open(args.details_out, "w", encoding="utf-8") as fh:
            fh.write("index,strategy,steps,speedup,exact,token_match,gt_match\n")
            fh.write("\n".join(details) + "\n")
    return 0


def _parse_answers(path) -> dict[str, tuple[list[int], AnswerRegion, str]]:
    """Lines of `trace-file | answer-ids | region-start,region-end [| group]`."""
    entries: dict[str, tuple[list[int], AnswerRegion, str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [part.strip() for part in line.split("|")]
            if len(parts) not in (3, 4):
                raise InvalidInputError(f"{path}: line {lineno}: expected 3 or 4 '|' fields")
            try:
                answer = _parse_ids(parts[1])
                region = _parse_region(parts[2])
            except (DlmDecodeError, ValueError):
                raise InvalidInputError(f"{path}: line {lineno}: malformed entry") from None
            group = parts[3] if len(parts) == 4 else "all"
            entries[Path(parts[0]).name] = (answer, region, group)
    if not entries:
        raise EmptyInputError(f"{path}: no answer entries")
    return entries


def cmd_stats(args) -> int:
    trace_paths: list[Path] = []
    for item in args.traces:
        p = Path(item)
        if p.is_dir():
            trace_paths.extend(sorted(p.glob("*.jsonl")))
        else:
            trace_paths.append(p)
    if not trace_paths:
        raise EmptyInputError("no trace files found")
    answers = _parse_answers(args.answers)

    fractions: dict[str, list[float]] = {}
    skipped = 0
    for path in trace_paths:
        entry = answers.get(path.name)
        if entry is None:
            raise InvalidInputError(f"no answers entry for trace {path.name}")
        answer, region, group = entry
        trace = read_trace_jsonl(path)
        if args.dynamics_dir:
            out_dir = Path(args.dynamics_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            write_dynamics_csv(dynamics_matrix(trace), out_dir / f"{path.stem}.dynamics.csv")
        try:
            stats = first_match_step(trace, answer, region)
        except NotApplicableError:
            skipped += 1
            continue
        key = group if args.suffix_ab else "all"
        fractions.setdefault(key, []).append(stats.first_match_fraction)

    if not fractions:
        raise EmptyInputError("no applicable traces (every final output missed its answer)")

    for group in sorted(fractions):
        hist = convergence_histogram(fractions[group], args.bins)
        summary = {
            "group": group,
            "n": hist.n,
            "skipped": skipped,
            "frac_le_50": hist.frac_le_50,
            "frac_le_70": hist.frac_le_70,
        }
        suffix = f".{group}" if args.suffix_ab else ""
        if args.hist_out:
            base = Path(args.hist_out)
            write_histogram_csv(hist, base.with_name(base.stem + suffix + base.suffix))
        if args.summary_out:
            base = Path(args.summary_out)
            write_summary_json(summary, base.with_name(base.stem + suffix + base.suffix))
        print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_train_toy(args) -> int:
    vocab = Vocabulary(size=args.vocab_size, mask_id=args.mask_id)
    corpus: list[list[int]] = []
    with open(args.corpus, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                corpus.append([int(part) for part in line.split()])
            except ValueError:
                raise InvalidInputError(f"{args.corpus}: line {lineno}: bad token id") from None
    model = train_ngram(corpus, order=args.order, alpha=args.alpha, vocab=vocab)
    save_ngram(model, args.out)
    print(f"contexts learned: {model.n_contexts}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dlmdecode",
        description="Masked-diffusion decoding with confidence-gap early commit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_decode_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--model", required=True, help="ngram:<path> or ramp:<k=v,...>")
        p.add_argument("--gen-len", type=int, required=True, help="generation length in tokens")
        p.add_argument("--steps", type=int, default=50, help="total step budget (default 50)")
        p.add_argument("--block-len", type=int, default=None, help="semi-AR block length")
        p.add_argument(
            "--remask",
            choices=["random", "low_conf"],
            default="low_conf",
            help="re-masking strategy",
        )
        p.add_argument("--tau-high", type=float, default=8.0)
        p.add_argument("--tau-mid", type=float, default=5.0)
        p.add_argument("--tau-low", type=float, default=3.0)
        p.add_argument("--breakpoints", default="0.33,0.67", help="progress breakpoints p1,p2")
        p.add_argument("--temperature", type=float, default=0.0, help="0 = greedy")
        p.add_argument("--seed", type=int, default=None, help="falls back to $PROPHET_SEED, then 0")

    p_decode = sub.add_parser("decode", help="run one decode and record its trace")
    add_decode_options(p_decode)
    p_decode.add_argument("--prompt-ids", default="", help="comma-separated prompt token ids")
    p_decode.add_argument("--suffix-ids", default="", help="ids appended after the prompt")
    p_decode.add_argument("--answer-region", default=None, help="start,end absolute positions")
    p_decode.add_argument("--prophet", choices=["on", "off"], default="off")
    p_decode.add_argument("--record-top1", action="store_true", dest="record_top1")
    p_decode.add_argument("--out", default=None, help="output token file (default: stdout)")
    p_decode.add_argument("--trace-out", default=None, help="JSON-lines trace file")
    p_decode.add_argument("--manifest-out", default=None, help="run manifest JSON")
    p_decode.set_defaults(func=cmd_decode)

    p_compare = sub.add_parser("compare", help="Full vs Half vs early-commit over a dataset")
    add_decode_options(p_compare)
    p_compare.add_argument(
        "--dataset",
        required=True,
        help="one instance per line: prompt-ids | answer-ids | region-start,region-end",
    )
    p_compare.add_argument("--out", default=None, help="summary CSV (default: stdout)")
    p_compare.add_argument("--details-out", default=None, help="per-instance CSV")
    p_compare.set_defaults(func=cmd_compare)

    p_stats = sub.add_parser("stats", help="convergence and dynamics statistics from traces")
    p_stats.add_argument("--traces", nargs="+", required=True, help="trace files or a directory")
    p_stats.add_argument(
        "--answers",
        required=True,
        help="lines: trace-file | answer-ids | region-start,region-end [| group]",
    )
    p_stats.add_argument("--bins", type=int, default=20)
    p_stats.add_argument("--hist-out", default=None, help="histogram CSV")
    p_stats.add_argument("--summary-out", default=None, help="summary JSON")
    p_stats.add_argument("--dynamics-dir", default=None, help="directory for per-trace dynamics CSVs")
    p_stats.add_argument(
        "--suffix-ab",
        action="store_true",
        help="split statistics by the answers-file group column",
    )
    p_stats.set_defaults(func=cmd_stats)

    p_train = sub.add_parser("train-toy", help="train the count-based context denoiser")
    p_train.add_argument("--corpus", required=True, help="whitespace-separated ids, one sequence per line")
    p_train.add_argument("--order", type=int, default=1)
    p_train.add_argument("--alpha", type=float, default=1.0)
    p_train.add_argument("--vocab-size", type=int, required=True)
    p_train.add_argument("--mask-id", type=int, default=0)
    p_train.add_argument("--out", required=True, help="model file to write")
    p_train.set_defaults(func=cmd_train_toy)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except InvalidConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 4
    except (DlmDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())
