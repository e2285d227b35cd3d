"""Command-line entry points for the toolkit."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import backends as stub_backends
from .answers.align import align_answer_sets, answers_from_squad_json, write_aligned_jsonl
from .answers.linguistic import StaticAnnotator, select_linguistic_candidates
from .answers.span_extraction import select_span_extraction_candidates
from .answers.spans import write_candidates_jsonl
from .corpus import decontaminate, passages_from_squad_json, read_passages_jsonl, write_passages_jsonl
from .filters import (
    FilterConfig,
    SyntheticExample,
    combined_filter,
    filter_by_answer_confidence,
    filter_by_generator_confidence,
    filter_roundtrip,
    read_verdicts_jsonl,
)
from .interfaces import LinguisticAnnotation
from .metrics import evaluate_prediction_file
from .orchestrator import PipelineBackends, PipelineConfig, build_schedule, run_pipeline, select_checkpoint
from .qgen import DecodeConfig, generate, serialize_prompt, write_generated_jsonl


@click.group()
def main() -> None:
    """Synthetic adversarial QA data generation and evaluation toolkit."""


def _load_passages(path: str, source: str):
    if path.endswith(".json"):
        return passages_from_squad_json(path, source=source)
    return read_passages_jsonl(path)


@main.command("decontaminate")
@click.option("--candidates", "candidates_path", required=True, type=click.Path(exists=True))
@click.option("--eval-passages", "eval_paths", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--n", default=8, show_default=True, help="n-gram window size in words.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--report", "report_path", default=None, type=click.Path())
def decontaminate_cmd(candidates_path, eval_paths, n, out_path, report_path) -> None:
    """Drop candidate passages sharing n-word windows with eval passages."""
    candidates = _load_passages(candidates_path, source="external")
    eval_passages = []
    for path in eval_paths:
        eval_passages.extend(_load_passages(path, source="eval_set"))
    kept, dropped, report = decontaminate(candidates, eval_passages, n=n)
    write_passages_jsonl(kept, out_path)
    if report_path:
        Path(report_path).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    click.echo(f"kept {len(kept)} / {report.total} passages ({report.dropped} dropped)")


@main.command("align")
@click.option("--passages", "passages_path", required=True, type=click.Path(exists=True))
@click.option("--squad", "squad_paths", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--splits", "splits_path", default=None, type=click.Path(exists=True), help="JSON {passage_id: split}.")
@click.option("--out", "out_path", required=True, type=click.Path())
def align_cmd(passages_path, squad_paths, splits_path, out_path) -> None:
    """Merge answer annotations from several SQuAD-style files per passage."""
    passages = {p.id: p for p in _load_passages(passages_path, source="squad_train")}
    datasets = [answers_from_squad_json(path, passages) for path in squad_paths]
    splits = {}
    if splits_path:
        splits = json.loads(Path(splits_path).read_text(encoding="utf-8"))
    result = align_answer_sets(passages, datasets, splits)
    write_aligned_jsonl(result, out_path)
    n_sets = sum(len(v) for v in result.by_split.values())
    click.echo(f"aligned {n_sets} passages; rejected {len(result.rejected)} answers")
    for rej in result.rejected[:10]:
        click.echo(f"  rejected ({rej.passage_id}): {rej.reason}", err=True)


@main.command("select-answers")
@click.option("--passages", "passages_path", required=True, type=click.Path(exists=True))
@click.option(
    "--method",
    type=click.Choice(["noun_chunks", "named_entities", "pos_extended", "span_extraction"]),
    default="span_extraction",
    show_default=True,
)
@click.option("--annotations", "annotations_path", default=None, type=click.Path(exists=True),
              help="JSON {passage_id: {category: [[start, end], ...]}} for linguistic modes.")
@click.option("--k", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def select_answers_cmd(passages_path, method, annotations_path, k, seed, out_path) -> None:
    """Select answer candidates for every passage."""
    passages = read_passages_jsonl(passages_path)
    by_passage = {}
    if method == "span_extraction":
        predictor = stub_backends.SeededSpanPredictor(seed=seed)
        for passage in passages:
            by_passage[passage.id] = select_span_extraction_candidates(passage, predictor, k=k)
    else:
        if not annotations_path:
            raise click.UsageError("linguistic modes require --annotations")
        raw = json.loads(Path(annotations_path).read_text(encoding="utf-8"))
        annotations = {
            pid: LinguisticAnnotation(**{cat: tuple(map(tuple, spans)) for cat, spans in cats.items()})
            for pid, cats in raw.items()
        }
        annotator = StaticAnnotator(annotations)
        for passage in passages:
            by_passage[passage.id] = select_linguistic_candidates(passage, annotator, method)
    write_candidates_jsonl(by_passage, out_path)
    total = sum(len(v) for v in by_passage.values())
    click.echo(f"selected {total} candidates over {len(passages)} passages")


@main.command("generate")
@click.option("--passages", "passages_path", required=True, type=click.Path(exists=True))
@click.option("--candidates", "candidates_path", required=True, type=click.Path(exists=True))
@click.option("--strategy", type=click.Choice(["beam", "diverse_beam", "nucleus"]), default="beam", show_default=True)
@click.option("--beam-size", default=5, show_default=True)
@click.option("--nbest", default=1, show_default=True)
@click.option("--beam-strength", default=1.0, show_default=True)
@click.option("--top-p", default=0.75, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def generate_cmd(passages_path, candidates_path, strategy, beam_size, nbest, beam_strength, top_p, seed, out_path) -> None:
    """Generate one or more questions per answer candidate."""
    from .answers.spans import read_candidates_jsonl

    passages = {p.id: p for p in read_passages_jsonl(passages_path)}
    candidates = read_candidates_jsonl(candidates_path)
    config = DecodeConfig(
        strategy=strategy, beam_size=beam_size, nbest=nbest, beam_strength=beam_strength, top_p=top_p, seed=seed
    )
    generator = stub_backends.TemplateQuestionGenerator(seed=seed)
    records = []
    for passage_id in sorted(candidates):
        passage = passages[passage_id]
        for cand in candidates[passage_id]:
            prompt = serialize_prompt(cand.span, passage)
            for qi, question in enumerate(
                generate(generator, prompt, config, prompt_answer=cand.span, prompt_id=passage_id)
            ):
                records.append(
                    {
                        "example_id": f"{passage_id}#{cand.span.char_start}-{cand.span.char_end}#q{qi}",
                        "passage_id": passage_id,
                        "answer": {
                            "start": cand.span.char_start,
                            "end": cand.span.char_end,
                            "text": cand.span.text,
                        },
                        "question": question.text,
                        "gen_score": question.score,
                        "config_id": question.config_id,
                        "answer_confidence": cand.confidence,
                    }
                )
    write_generated_jsonl(records, out_path)
    click.echo(f"generated {len(records)} questions")


def _examples_from_generated(path: str, passages) -> list[SyntheticExample]:
    from .answers.spans import AnswerSpan

    examples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            answer = rec["answer"]
            examples.append(
                SyntheticExample(
                    id=rec["example_id"],
                    passage_id=rec["passage_id"],
                    answer=AnswerSpan(
                        passage_id=rec["passage_id"],
                        char_start=answer["start"],
                        char_end=answer["end"],
                        text=answer["text"],
                    ),
                    question=rec["question"],
                    answer_confidence=rec.get("answer_confidence", 1.0),
                    gen_score=rec["gen_score"],
                )
            )
    return examples


@main.command("filter")
@click.option("--examples", "examples_path", required=True, type=click.Path(exists=True))
@click.option("--passages", "passages_path", required=True, type=click.Path(exists=True))
@click.option(
    "--method",
    type=click.Choice(["answer_confidence", "generator_confidence", "roundtrip", "self_training", "combined", "influence"]),
    default="combined",
    show_default=True,
)
@click.option("--verdicts", "verdicts_path", default=None, type=click.Path(exists=True),
              help="Verdict JSONL for roundtrip/self_training/combined.")
@click.option("--influence-scores", "influence_path", default=None, type=click.Path(exists=True),
              help="JSON {example_id: score} for the influence method.")
@click.option("--answer-conf", default=0.6, show_default=True)
@click.option("--gen-conf", default=0.3, show_default=True)
@click.option("--min-correct", default=6, show_default=True)
@click.option("--keep-at", default=5, show_default=True)
@click.option("--relabel-at", default=2, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--manifest", "manifest_path", default=None, type=click.Path())
def filter_cmd(
    examples_path, passages_path, method, verdicts_path, influence_path,
    answer_conf, gen_conf, min_correct, keep_at, relabel_at, out_path, manifest_path,
) -> None:
    """Filter (and possibly relabel) generated examples."""
    from .filters import apply_self_training

    passages = {p.id: p for p in read_passages_jsonl(passages_path)}
    examples = _examples_from_generated(examples_path, passages)
    n_members = max(min_correct, keep_at, 1)
    config = FilterConfig(
        answer_conf_thresh=answer_conf if method != "combined" else 0.5,
        gen_conf_thresh=gen_conf,
        roundtrip_min_correct=min_correct,
        selftrain_keep_at=keep_at,
        selftrain_relabel_at=relabel_at,
        n_members=n_members,
    )
    counts = {"input": len(examples)}
    if method == "answer_confidence":
        kept, _ = filter_by_answer_confidence(examples, answer_conf)
        from dataclasses import replace

        final = [replace(ex, state="kept", final_answer=ex.answer) for ex in kept]
    elif method == "generator_confidence":
        kept, _ = filter_by_generator_confidence(examples, gen_conf)
        from dataclasses import replace

        final = [replace(ex, state="kept", final_answer=ex.answer) for ex in kept]
    elif method == "influence":
        if not influence_path:
            raise click.UsageError("influence method requires --influence-scores")
        scores = json.loads(Path(influence_path).read_text(encoding="utf-8"))
        from dataclasses import replace

        final = [
            replace(ex, state="kept", final_answer=ex.answer)
            for ex in examples
            if scores.get(ex.id, 0.0) <= 0.0
        ]
    else:
        if not verdicts_path:
            raise click.UsageError(f"{method} requires --verdicts")
        verdicts = read_verdicts_jsonl(verdicts_path)
        if method == "roundtrip":
            kept_ids = filter_roundtrip(list(verdicts.values()), min_correct)
            from dataclasses import replace

            final = [replace(ex, state="kept", final_answer=ex.answer) for ex in examples if ex.id in kept_ids]
        elif method == "self_training":
            final = []
            for ex in examples:
                if ex.id not in verdicts:
                    raise click.ClickException(f"missing verdict for {ex.id}")
                updated = apply_self_training(
                    ex, verdicts[ex.id], passages[ex.passage_id], keep_at=keep_at, relabel_at=relabel_at
                )
                if updated.state != "discarded":
                    final.append(updated)
        else:  # combined
            final, fmanifest = combined_filter(examples, verdicts, passages, config)
            counts.update(fmanifest.counts)
    counts.setdefault("kept", len(final))
    counts["output"] = len(final)

    records = []
    for ex in final:
        answer = ex.final_answer or ex.answer
        records.append(
            {
                "example_id": ex.id,
                "passage_id": ex.passage_id,
                "question": ex.question,
                "answer": {"start": answer.char_start, "end": answer.char_end, "text": answer.text},
                "state": ex.state,
                "answer_confidence": ex.answer_confidence,
                "gen_score": ex.gen_score,
            }
        )
    write_generated_jsonl(records, out_path)
    if manifest_path:
        manifest = {"method": method, "config": config.__dict__, "counts": counts}
        Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(f"{method}: kept {len(final)} / {len(examples)} examples")


@main.command("build-schedule")
@click.option("--synthetic", "synthetic_ref", required=True, type=click.Path(exists=True))
@click.option("--human", "human_refs", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["two_stage", "mixed"]), default="two_stage", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def build_schedule_cmd(synthetic_ref, human_refs, mode, seed, out_path) -> None:
    """Build a two-stage or mixed training schedule."""
    schedule = build_schedule(synthetic_ref, list(human_refs), mode, seed=seed)
    Path(out_path).write_text(json.dumps(schedule.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(f"{mode} schedule with {len(schedule.stages)} stage(s) -> {out_path}")


@main.command("select-checkpoint")
@click.option("--evals", "evals_path", required=True, type=click.Path(exists=True),
              help="JSON {checkpoint_id: {dataset: f1}}.")
def select_checkpoint_cmd(evals_path) -> None:
    """Pick the checkpoint with the best mean F1 over validation sets."""
    evals = json.loads(Path(evals_path).read_text(encoding="utf-8"))
    click.echo(select_checkpoint(evals))


@main.command("evaluate")
@click.option("--predictions", "predictions_path", required=True, type=click.Path(exists=True))
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", default=None, type=click.Path())
def evaluate_cmd(predictions_path, gold_path, out_path) -> None:
    """Score a prediction file against SQuAD-style gold answers."""
    scores = evaluate_prediction_file(predictions_path, gold_path)
    payload = json.dumps({"em": scores["em"], "f1": scores["f1"]}, indent=2)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
    click.echo(payload)


@main.command("pipeline")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", default=None, type=int, help="Override the config seed.")
def pipeline_cmd(config_path, seed) -> None:
    """Run the full generation pipeline with stub backends."""
    from dataclasses import replace

    config = PipelineConfig.from_json(config_path)
    if seed is not None:
        config = replace(config, seed=seed)
    backends = PipelineBackends(
        generator=stub_backends.TemplateQuestionGenerator(seed=config.seed),
        ensemble=stub_backends.build_stub_ensemble(config.filter_config.n_members, seed=config.seed),
        span_predictor=stub_backends.SeededSpanPredictor(seed=config.seed),
    )
    dataset_path, manifest = run_pipeline(config, backends)
    click.echo(f"dataset: {dataset_path}")
    for stage in manifest.stages:
        click.echo(f"  {stage.name}: in={stage.n_in} out={stage.n_out} dropped={stage.dropped}")


@main.command("serve-eval")
@click.option("--passages", "passages_path", required=True, type=click.Path(exists=True))
@click.option("--arms", "n_arms", default=4, show_default=True, help="Number of stub model arms.")
@click.option("--log-dir", default="eval_logs", show_default=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--seed", default=0, show_default=True)
def serve_eval_cmd(passages_path, n_arms, log_dir, host, port, seed) -> None:
    """Serve the adversarial evaluation API with stub model arms."""
    import uvicorn

    from .eval_service import EvalStore, create_app

    passages = read_passages_jsonl(passages_path)
    arms = {
        f"model-{i}": stub_backends.TemplateAwareQAModel(member_seed=seed * 100 + i)
        for i in range(n_arms)
    }
    store = EvalStore(arms=arms, passages=passages, log_dir=log_dir)
    uvicorn.run(create_app(store), host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
