"""Periodontal diagnosis extraction from dental clinical notes.

Pipeline pieces: synthetic-corpus generation (offline deterministic engine or
an OpenAI-compatible endpoint), a rule-grammar entity extractor, 2018 AAP/EFP
normalization and adjudication, and a gold-standard evaluation harness.
"""

from .corpus import (
    AnnotatedNote,
    AnnotationSource,
    CorpusFormatError,
    Note,
    PatientMeta,
    Provenance,
    SplitManifest,
    cohort_filter,
    read_corpus,
    split_corpus,
    write_corpus,
)
from .evaluation import (
    NA,
    ClassMetrics,
    ConfusionMatrix,
    LearningCurve,
    MetricsTable,
    averages,
    build_confusion,
    class_metrics,
    compare_note,
    detect_stabilization,
    evaluate_corpus,
    evaluate_records,
    learning_curve,
)
from .extraction import (
    PredictionFileError,
    RuleExtractor,
    Token,
    detect_status_rulebased,
    extract_entities,
    extract_statements,
    load_external_predictions,
    tokenize,
)
from .llm import ConfigurationError, GenerationConfig, GenerationError, generate_llm
from .model import (
    DiagnosisRecord,
    Dimension,
    EntitySpan,
    Extent,
    Grade,
    PeriodontalStatus,
    Stage,
    Statement,
    Subtype,
    max_extent,
    max_grade,
    max_severity,
    max_stage,
    validate_record,
)
from .normalization import (
    GuidelineVersion,
    adjudicate,
    classify_guideline_version,
    infer_status_context,
    normalize_value,
)
from .synthesis import (
    CLEAN,
    PerturbationSpec,
    PromptSections,
    QAVerdict,
    SeedTemplate,
    TemplateSelectionError,
    build_prompt,
    generate_offline,
    select_seed_templates,
    validate_labels,
)

__version__ = "0.1.0"
