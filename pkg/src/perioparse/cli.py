"""Command-line pipeline: cohort -> synth -> split -> extract -> evaluate.

Subcommands compose through files only. Every randomized step takes an
explicit seed so results replay exactly. Exit codes: 0 success, 1 data or
validation failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .corpus import (
    AnnotationSource,
    CorpusFormatError,
    atomic_write_text,
    cohort_filter,
    read_corpus,
    read_patient_meta,
    split_corpus,
    write_corpus,
    write_manifest,
)
from .evaluation import evaluate_corpus, learning_curve
from .extraction import (
    PredictionFileError,
    extract_statements,
    load_external_predictions,
)
from .llm import ConfigurationError, GenerationConfig, GenerationError, generate_llm
from .model import Dimension, Statement
from .normalization import adjudicate, classify_guideline_version, infer_status_context
from .reporting import (
    DIMENSION_TITLES,
    REPORT_FORMATS,
    bar_chart_data,
    confusion_chart_data,
    learning_curve_to_obj,
    render_report,
)
from .synthesis import (
    DEFAULT_PROMPT_SECTIONS,
    PerturbationSpec,
    TemplateSelectionError,
    apply_qa_fix,
    generate_offline,
    read_prompt_sections,
    select_seed_templates,
    templates_from_corpus,
    validate_labels,
    verdict_to_obj,
)


class UsageError(ValueError):
    """Bad flags or configuration; maps to exit code 2."""


_RATE_KEYS = (
    "typo_rate",
    "informal_format_rate",
    "anchor_variation_rate",
    "multi_diagnosis_rate",
    "distractor_extent_rate",
)


def read_config(path) -> dict[str, str]:
    """Parse a `key = value` config file; `#` starts a comment."""
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, value = stripped.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"--ratios expects three numbers a:b:c, got {text!r}")
    try:
        weights = [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"--ratios has a non-numeric part: {text!r}") from exc
    if any(w <= 0 for w in weights):
        raise UsageError(f"--ratios parts must all be positive, got {text!r}")
    total = sum(weights)
    return tuple(w / total for w in weights)


def _map_notes(fn, notes, jobs: int):
    if jobs <= 1:
        return [fn(n) for n in notes]
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(fn, notes))


# --------------------------------------------------------------------------
# subcommands

def _cmd_cohort(args) -> int:
    notes = read_corpus(args.corpus_in)
    try:
        meta_by_id = read_patient_meta(args.meta_in)
    except FileNotFoundError:
        print(f"error: meta file not found: {args.meta_in}", file=sys.stderr)
        return 1
    eligible = []
    for annotated in notes:
        meta = meta_by_id.get(annotated.note.note_id, annotated.meta)
        if meta is not None and cohort_filter(meta):
            eligible.append(annotated.with_(meta=meta))
    write_corpus(eligible, args.corpus_out)
    print(f"{len(eligible)}/{len(notes)} eligible")
    return 0


def _cmd_synth(args) -> int:
    config = read_config(args.config) if args.config else {}
    sections = DEFAULT_PROMPT_SECTIONS
    if config.get("prompt_file"):
        sections = read_prompt_sections(config["prompt_file"])

    if args.templates:
        templates = templates_from_corpus(read_corpus(args.templates))
    else:
        if args.seed is None:
            raise UsageError("--seed is required when selecting templates from a corpus")
        templates = select_seed_templates(
            read_corpus(args.corpus), per_category=args.per_category, seed=args.seed
        )

    variants = args.variants
    if variants is None:
        variants = int(config.get("variants_per_template", 10))

    if args.offline:
        if args.seed is None:
            raise UsageError("--seed is required for offline generation")
        rates = {}
        for key in _RATE_KEYS:
            if key in config:
                rates[key] = float(config[key])
        try:
            perturb = PerturbationSpec(rng_seed=args.seed, **rates)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        notes = generate_offline(templates, variants, perturb)
    else:
        for key in ("model_name", "endpoint_url"):
            if key not in config:
                raise UsageError(f"--online requires {key!r} in the config file")
        try:
            gen_config = GenerationConfig(
                model_name=config["model_name"],
                endpoint_url=config["endpoint_url"],
                variants_per_template=variants,
                temperature=float(config.get("temperature", 1.0)),
                top_p=float(config.get("top_p", 1.0)),
                max_concurrent_requests=int(config.get("max_concurrent_requests", 4)),
                retry_limit=int(config.get("retry_limit", 3)),
                api_key_env=config.get("api_key_env", "OPENAI_API_KEY"),
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        notes = generate_llm(templates, gen_config, sections)

    def qa_check(annotated):
        verdict = validate_labels(annotated)
        qa = verdict_to_obj(verdict)
        if not verdict.consistent and args.fix_labels:
            annotated = apply_qa_fix(annotated)
            qa["auto_fixed"] = True
        return annotated.with_(qa=qa), verdict.consistent

    checked = _map_notes(qa_check, notes, args.jobs)
    finished = [note for note, _ in checked]
    failed = sum(1 for note, consistent in checked if not consistent and not args.fix_labels)
    write_corpus(finished, args.out)
    print(f"generated {len(finished)} notes from {len(templates)} templates")
    if failed:
        print(f"{failed} notes failed label QA (rerun with --fix-labels to auto-fix)")
        return 1
    return 0


def _cmd_split(args) -> int:
    notes = read_corpus(args.corpus_in)
    ratios = _parse_ratios(args.ratios)
    try:
        manifest = split_corpus(notes, ratios=ratios, seed=args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    write_manifest(manifest, args.manifest_out)
    train, val, test = manifest.sizes()
    print(f"split {len(notes)} notes into {train}/{val}/{test}")
    return 0


def _cmd_extract(args) -> int:
    notes = read_corpus(args.corpus_in)
    predictions = None
    if args.extractor != "builtin":
        if not args.extractor.startswith("predictions="):
            raise UsageError(
                f"--extractor must be 'builtin' or 'predictions=<path>', got {args.extractor!r}"
            )
        predictions = load_external_predictions(args.extractor.split("=", 1)[1], notes)

    def process(annotated):
        text = annotated.note.text
        if predictions is None:
            statements = extract_statements(text, args.mode)
            spans = tuple(s for st in statements for s in st.spans)
        else:
            spans = tuple(predictions.get(annotated.note.note_id, ()))
            statements = [Statement(spans)] if spans else []
        record = adjudicate(infer_status_context(statements))
        guideline = classify_guideline_version(record) if record is not None else None
        return annotated.with_(
            spans=spans,
            record=record,
            annotation_source=AnnotationSource.PREDICTED,
            guideline_version=guideline,
            qa=None,
        )

    write_corpus(_map_notes(process, notes, args.jobs), args.out)
    print(f"extracted {len(notes)} notes ({args.mode} mode)")
    return 0


def _cmd_evaluate(args) -> int:
    gold = read_corpus(args.gold_in)
    pred = read_corpus(args.pred_in)
    try:
        results = evaluate_corpus(gold, pred)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out_dir = Path(args.out_dir)
    tables = [table for _, table in results.values()]
    matrices_by_site = {site: matrices for site, (matrices, _) in results.items()}

    ext = {"text-table": "txt", "csv": "csv", "json": "json"}[args.report]
    atomic_write_text(out_dir / f"report.{ext}", render_report(tables, args.report))
    atomic_write_text(
        out_dir / "confusion.json",
        json.dumps(confusion_chart_data(matrices_by_site), indent=2) + "\n",
    )
    atomic_write_text(
        out_dir / "bar_chart.json", json.dumps(bar_chart_data(tables), indent=2) + "\n"
    )

    if args.curve:
        pred_records = {n.note.note_id: n.record for n in pred}
        curves = {}
        by_site: dict[str, list] = {}
        for n in gold:
            by_site.setdefault(n.note.site_id, []).append(n)
        for site, site_notes in sorted(by_site.items()):
            if len(site_notes) < args.step:
                continue
            curve = learning_curve(
                site_notes,
                pred_records,
                step=args.step,
                epsilon=args.epsilon,
                window=args.window,
                seed=args.curve_seed,
                dimension=Dimension(args.dimension),
            )
            curves[site] = learning_curve_to_obj(curve)
        atomic_write_text(
            out_dir / "learning_curve.json", json.dumps(curves, indent=2) + "\n"
        )

    for table in tables:
        for dm in table.dimensions:
            f1 = dm.weighted.f1 if dm.weighted else None
            shown = f"{f1:.2f}" if f1 is not None else "-"
            print(f"{table.site} {DIMENSION_TITLES[dm.dimension]}: weighted F1 {shown}")
    return 0


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perioparse",
        description="Periodontal diagnosis extraction and evaluation pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cohort", help="filter a corpus by patient eligibility")
    p.add_argument("corpus_in")
    p.add_argument("meta_in")
    p.add_argument("corpus_out")
    p.set_defaults(func=_cmd_cohort)

    p = sub.add_parser("synth", help="generate a synthetic corpus from seed templates")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--templates", help="corpus file whose notes all carry records")
    source.add_argument("--corpus", help="corpus to select seed templates from")
    engine = p.add_mutually_exclusive_group(required=True)
    engine.add_argument("--online", action="store_true")
    engine.add_argument("--offline", action="store_true")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--variants", type=int)
    p.add_argument("--per-category", type=int, default=15)
    p.add_argument("--fix-labels", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("split", help="deterministic train/validation/test split")
    p.add_argument("corpus_in")
    p.add_argument("manifest_out")
    p.add_argument("--ratios", default="8:1:1")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("extract", help="annotate a corpus with predicted diagnoses")
    p.add_argument("corpus_in")
    p.add_argument("out")
    p.add_argument("--mode", choices=["strict", "informal"], default="strict")
    p.add_argument("--extractor", default="builtin")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("evaluate", help="score predictions against a gold corpus")
    p.add_argument("gold_in")
    p.add_argument("pred_in")
    p.add_argument("out_dir")
    p.add_argument("--report", choices=list(REPORT_FORMATS), default="text-table")
    p.add_argument("--curve", action="store_true")
    p.add_argument("--step", type=int, default=30)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--curve-seed", type=int, default=0)
    p.add_argument(
        "--dimension",
        choices=[d.value for d in Dimension],
        default=Dimension.STATUS.value,
    )
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (
        CorpusFormatError,
        PredictionFileError,
        TemplateSelectionError,
        GenerationError,
        FileNotFoundError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
