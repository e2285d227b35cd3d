"""End-to-end pipeline wiring, training schedules, and checkpoint selection.

Stages run in order: passage selection (with optional decontamination),
answer candidate selection with confidence filtering, question generation,
then filtering/relabelling. The manifest records per-stage counts, the
config hash, and the seed; with deterministic backends and a fixed clock a
rerun is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .answers.linguistic import select_linguistic_candidates
from .answers.span_extraction import select_span_extraction_candidates
from .answers.spans import SELECTION_METHODS, AnswerCandidate
from .corpus import Passage, decontaminate, read_passages_jsonl
from .filters import (
    EnsembleVerdict,
    FilterConfig,
    SyntheticExample,
    combined_filter,
    filter_by_answer_confidence,
    filter_by_generator_confidence,
    filter_roundtrip,
    roundtrip_verdict,
)
from .qgen import DecodeConfig, generate, serialize_prompt


@dataclass(frozen=True)
class PipelineConfig:
    passage_path: str
    passage_source: str = "external"
    eval_passage_path: str | None = None
    decontaminate: bool = True
    decontamination_n: int = 8
    selection_method: str = "span_extraction"
    selection_k: int = 3
    answer_conf_decode_thresh: float = 0.5
    decode: DecodeConfig = field(default_factory=lambda: DecodeConfig(strategy="beam", beam_size=5, nbest=1))
    filter_method: str = "combined"
    filter_config: FilterConfig = field(default_factory=FilterConfig)
    output_dir: str = "pipeline_out"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.selection_method not in SELECTION_METHODS:
            raise ValueError(f"unknown selection method: {self.selection_method!r}")
        if self.filter_method not in (
            "none",
            "answer_confidence",
            "generator_confidence",
            "roundtrip",
            "self_training",
            "combined",
        ):
            raise ValueError(f"unknown filter method: {self.filter_method!r}")

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        decode = DecodeConfig(**raw.pop("decode")) if "decode" in raw else DecodeConfig(
            strategy="beam", beam_size=5, nbest=1
        )
        filter_config = FilterConfig(**raw.pop("filter_config")) if "filter_config" in raw else FilterConfig()
        return cls(decode=decode, filter_config=filter_config, **raw)

    def to_dict(self) -> dict:
        return {
            "passage_path": self.passage_path,
            "passage_source": self.passage_source,
            "eval_passage_path": self.eval_passage_path,
            "decontaminate": self.decontaminate,
            "decontamination_n": self.decontamination_n,
            "selection_method": self.selection_method,
            "selection_k": self.selection_k,
            "answer_conf_decode_thresh": self.answer_conf_decode_thresh,
            "decode": {
                "strategy": self.decode.strategy,
                "beam_size": self.decode.beam_size,
                "nbest": self.decode.nbest,
                "beam_strength": self.decode.beam_strength,
                "top_p": self.decode.top_p,
                "seed": self.decode.seed,
            },
            "filter_method": self.filter_method,
            "filter_config": {
                "answer_conf_thresh": self.filter_config.answer_conf_thresh,
                "gen_conf_thresh": self.filter_config.gen_conf_thresh,
                "roundtrip_min_correct": self.filter_config.roundtrip_min_correct,
                "selftrain_keep_at": self.filter_config.selftrain_keep_at,
                "selftrain_relabel_at": self.filter_config.selftrain_relabel_at,
                "n_members": self.filter_config.n_members,
            },
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass
class PipelineBackends:
    """Everything model-shaped the pipeline needs, behind protocols."""

    generator: object
    ensemble: Sequence[object] = ()
    span_predictor: object | None = None
    annotator: object | None = None
    candidate_selector: Callable[[Passage], Sequence[AnswerCandidate]] | None = None


@dataclass(frozen=True)
class StageRecord:
    name: str
    n_in: int
    n_out: int
    dropped: int

    def to_dict(self) -> dict:
        return {"name": self.name, "in": self.n_in, "out": self.n_out, "dropped": self.dropped}


@dataclass
class PipelineManifest:
    config_hash: str
    seed: int
    stages: list[StageRecord]
    started_at: float
    finished_at: float
    failed_stage: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        out = {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "stages": [s.to_dict() for s in self.stages],
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }
        if self.failed_stage is not None:
            out["failed_stage"] = self.failed_stage
            out["error"] = self.error
        return out


class PipelineError(RuntimeError):
    def __init__(self, stage: str, manifest: PipelineManifest, cause: Exception):
        super().__init__(f"pipeline stage {stage!r} failed: {cause}")
        self.stage = stage
        self.manifest = manifest
        self.cause = cause


def _select_candidates(config: PipelineConfig, backends: PipelineBackends, passage: Passage):
    if backends.candidate_selector is not None:
        return list(backends.candidate_selector(passage))
    method = config.selection_method
    if method in ("noun_chunks", "named_entities", "pos_extended"):
        if backends.annotator is None:
            raise ValueError(f"selection method {method!r} requires an annotator backend")
        return select_linguistic_candidates(passage, backends.annotator, method)
    if method == "span_extraction":
        if backends.span_predictor is None:
            raise ValueError("span_extraction requires a span predictor backend")
        return select_span_extraction_candidates(passage, backends.span_predictor, k=config.selection_k)
    raise ValueError(
        f"selection method {method!r} needs a candidate_selector backend (e.g. a fitted span labeller)"
    )


def run_pipeline(
    config: PipelineConfig,
    backends: PipelineBackends,
    clock: Callable[[], float] = time.time,
) -> tuple[Path, PipelineManifest]:
    """Run all stages; write dataset JSONL plus manifest into output_dir.

    Any stage failure aborts with a ``PipelineError`` carrying a manifest
    that names the failed stage and the counts processed so far.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = clock()
    stages: list[StageRecord] = []
    manifest = PipelineManifest(
        config_hash=config.config_hash(), seed=config.seed, stages=stages, started_at=started, finished_at=started
    )

    def fail(stage: str, exc: Exception) -> PipelineError:
        manifest.failed_stage = stage
        manifest.error = str(exc)
        manifest.finished_at = clock()
        _write_manifest(manifest, out_dir / "manifest.json")
        return PipelineError(stage, manifest, exc)

    # stage (i): passage selection / decontamination
    try:
        passages = read_passages_jsonl(config.passage_path)
        n_in = len(passages)
        if config.decontaminate and config.passage_source == "external":
            eval_passages = (
                read_passages_jsonl(config.eval_passage_path) if config.eval_passage_path else []
            )
            kept, dropped, _report = decontaminate(passages, eval_passages, n=config.decontamination_n)
        else:
            kept, dropped = list(passages), []
        passages = sorted(kept, key=lambda p: p.id)
        stages.append(StageRecord("passage_selection", n_in, len(passages), len(dropped)))
    except Exception as exc:
        raise fail("passage_selection", exc) from exc

    # stage (ii): answer candidate selection + confidence filtering
    try:
        candidates: list[AnswerCandidate] = []
        n_below = 0
        for passage in passages:
            for cand in _select_candidates(config, backends, passage):
                if cand.confidence >= config.answer_conf_decode_thresh or cand.method in (
                    "noun_chunks",
                    "named_entities",
                    "pos_extended",
                ):
                    candidates.append(cand)
                else:
                    n_below += 1
        candidates.sort(key=lambda c: (c.span.passage_id, c.span.char_start, c.span.char_end))
        stages.append(
            StageRecord("answer_candidate_selection", len(passages), len(candidates), n_below)
        )
    except Exception as exc:
        raise fail("answer_candidate_selection", exc) from exc

    passage_by_id = {p.id: p for p in passages}

    # stage (iii): question generation
    try:
        examples: list[SyntheticExample] = []
        for cand in candidates:
            passage = passage_by_id[cand.span.passage_id]
            prompt = serialize_prompt(cand.span, passage)
            questions = generate(
                backends.generator, prompt, config.decode, prompt_answer=cand.span, prompt_id=cand.span.passage_id
            )
            for qi, question in enumerate(questions):
                examples.append(
                    SyntheticExample(
                        id=f"{passage.id}#{cand.span.char_start}-{cand.span.char_end}#q{qi}",
                        passage_id=passage.id,
                        answer=cand.span,
                        question=question.text,
                        answer_confidence=cand.confidence,
                        gen_score=question.score,
                    )
                )
        examples.sort(key=lambda ex: ex.id)
        stages.append(StageRecord("question_generation", len(candidates), len(examples), 0))
    except Exception as exc:
        raise fail("question_generation", exc) from exc

    # stage (iv): filtering / relabelling
    try:
        final = _apply_filter_stage(config, backends, examples, passage_by_id)
        stages.append(
            StageRecord("filtering_relabelling", len(examples), len(final), len(examples) - len(final))
        )
    except Exception as exc:
        raise fail("filtering_relabelling", exc) from exc

    dataset_path = out_dir / "dataset.jsonl"
    with open(dataset_path, "w", encoding="utf-8") as fh:
        for ex in final:
            answer = ex.final_answer or ex.answer
            rec = {
                "example_id": ex.id,
                "passage_id": ex.passage_id,
                "question": ex.question,
                "answer": {"start": answer.char_start, "end": answer.char_end, "text": answer.text},
                "state": ex.state,
                "answer_confidence": ex.answer_confidence,
                "gen_score": ex.gen_score,
            }
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")

    manifest.finished_at = clock()
    _write_manifest(manifest, out_dir / "manifest.json")
    return dataset_path, manifest


def _apply_filter_stage(
    config: PipelineConfig,
    backends: PipelineBackends,
    examples: list[SyntheticExample],
    passage_by_id: Mapping[str, Passage],
) -> list[SyntheticExample]:
    from dataclasses import replace as _replace

    fc = config.filter_config
    method = config.filter_method
    if method == "none":
        return [_replace(ex, state="kept", final_answer=ex.answer) for ex in examples]
    if method == "answer_confidence":
        kept, _ = filter_by_answer_confidence(examples, fc.answer_conf_thresh)
        return [_replace(ex, state="kept", final_answer=ex.answer) for ex in kept]
    if method == "generator_confidence":
        kept, _ = filter_by_generator_confidence(examples, fc.gen_conf_thresh)
        return [_replace(ex, state="kept", final_answer=ex.answer) for ex in kept]

    if not backends.ensemble:
        raise ValueError(f"filter method {method!r} requires ensemble backends")
    verdicts: dict[str, EnsembleVerdict] = {}
    pool = examples
    if method == "combined":
        pool, _ = filter_by_answer_confidence(examples, fc.answer_conf_thresh)
    for ex in pool:
        verdicts[ex.id] = roundtrip_verdict(ex, passage_by_id[ex.passage_id], backends.ensemble)

    if method == "roundtrip":
        kept_ids = filter_roundtrip(list(verdicts.values()), fc.roundtrip_min_correct)
        return [_replace(ex, state="kept", final_answer=ex.answer) for ex in examples if ex.id in kept_ids]
    if method == "self_training":
        from .filters import apply_self_training

        out = []
        for ex in examples:
            updated = apply_self_training(
                ex,
                verdicts[ex.id],
                passage_by_id[ex.passage_id],
                keep_at=fc.selftrain_keep_at,
                relabel_at=fc.selftrain_relabel_at,
            )
            if updated.state != "discarded":
                out.append(updated)
        return out
    # combined
    final, _manifest = combined_filter(examples, verdicts, passage_by_id, fc)
    return final


def _write_manifest(manifest: PipelineManifest, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- training schedules --------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleStage:
    dataset_refs: tuple[str, ...]
    budget: Mapping | None = None

    def to_dict(self) -> dict:
        return {"dataset_refs": list(self.dataset_refs), "budget": dict(self.budget) if self.budget else None}


@dataclass(frozen=True)
class TrainingSchedule:
    mode: str
    stages: tuple[ScheduleStage, ...]

    def __post_init__(self) -> None:
        if self.mode not in ("two_stage", "mixed"):
            raise ValueError(f"unknown schedule mode: {self.mode!r}")
        if self.mode == "two_stage" and len(self.stages) != 2:
            raise ValueError("two_stage schedules have exactly two stages")
        if self.mode == "mixed" and len(self.stages) != 1:
            raise ValueError("mixed schedules have exactly one stage")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "stages": [s.to_dict() for s in self.stages]}


def build_schedule(
    synthetic_ref: str,
    human_refs: Sequence[str],
    mode: str,
    seed: int = 0,
    output_dir: str | Path | None = None,
    budget: Mapping | None = None,
) -> TrainingSchedule:
    """Two-stage (synthetic first, human second) or mixed single-stage.

    Mixed mode materializes one concatenated, seeded-shuffled JSONL next to
    the inputs (a permutation: the example multiset is preserved).
    """
    refs = [synthetic_ref, *human_refs]
    for ref in refs:
        if not Path(ref).exists():
            raise FileNotFoundError(f"dataset ref not found: {ref}")
    if mode == "two_stage":
        return TrainingSchedule(
            mode="two_stage",
            stages=(
                ScheduleStage(dataset_refs=(synthetic_ref,), budget=budget),
                ScheduleStage(dataset_refs=tuple(human_refs), budget=budget),
            ),
        )
    if mode != "mixed":
        raise ValueError(f"unknown schedule mode: {mode!r}")
    lines: list[str] = []
    for ref in refs:
        with open(ref, encoding="utf-8") as fh:
            lines.extend(line.rstrip("\n") for line in fh if line.strip())
    random.Random(seed).shuffle(lines)
    out_dir = Path(output_dir) if output_dir is not None else Path(synthetic_ref).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    mixed_path = out_dir / "mixed.jsonl"
    with open(mixed_path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
    return TrainingSchedule(mode="mixed", stages=(ScheduleStage(dataset_refs=(str(mixed_path),), budget=budget),))


def select_checkpoint(evals: Mapping[str, Mapping[str, float]]) -> str:
    """Checkpoint with the best unweighted mean F1 across validation sets.

    Every checkpoint must be scored on the same datasets; ties break by
    the earliest checkpoint in insertion order.
    """
    if not evals:
        raise ValueError("no checkpoints to select from")
    dataset_keys: set[str] | None = None
    for ckpt, scores in evals.items():
        if not scores:
            raise ValueError(f"checkpoint {ckpt!r} has no evaluations")
        keys = set(scores)
        if dataset_keys is None:
            dataset_keys = keys
        elif keys != dataset_keys:
            missing = dataset_keys.symmetric_difference(keys)
            raise ValueError(f"checkpoint {ckpt!r} evaluation mismatch on datasets: {sorted(missing)}")
    best_ckpt = None
    best_mean = float("-inf")
    for ckpt, scores in evals.items():
        mean = sum(scores.values()) / len(scores)
        if mean > best_mean:
            best_mean = mean
            best_ckpt = ckpt
    assert best_ckpt is not None
    return best_ckpt
