"""OpenAI-compatible chat-completions client for synthetic note generation.

Each template variant is requested as its own single-completion call (never
one n-way call), and responses are re-ordered to (template order, variant
index) regardless of completion order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import requests

from .corpus import AnnotatedNote, AnnotationSource, Note, Provenance
from .synthesis import (
    DEFAULT_PROMPT_SECTIONS,
    PromptSections,
    SeedTemplate,
    build_prompt,
    parse_label_trailer,
)


class ConfigurationError(ValueError):
    """The client is not runnable as configured (e.g. missing API key)."""


class GenerationError(RuntimeError):
    """A generation request failed after exhausting its retries."""


@dataclass(frozen=True)
class GenerationConfig:
    model_name: str
    endpoint_url: str
    variants_per_template: int = 10
    temperature: float = 1.0
    top_p: float = 1.0
    max_concurrent_requests: int = 4
    retry_limit: int = 3
    api_key_env: str = "OPENAI_API_KEY"
    request_timeout: float = 60.0

    def __post_init__(self):
        if self.variants_per_template < 1:
            raise ValueError("variants_per_template must be at least 1")
        for name in ("temperature", "top_p"):
            value = getattr(self, name)
            if not 0.0 < value <= 2.0:
                raise ValueError(f"{name} must be within (0, 2], got {value}")
        if self.max_concurrent_requests < 1:
            raise ValueError("max_concurrent_requests must be at least 1")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be non-negative")


def _complete(session: requests.Session, config: GenerationConfig, api_key: str, prompt: str) -> str:
    """One chat completion with retries on transport failures and 5xx."""
    body = {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "top_p": config.top_p,
    }
    headers = {"Authorization": f"Bearer {api_key}"}
    attempts = 1 + config.retry_limit
    last_error = None
    for _ in range(attempts):
        try:
            response = session.post(
                config.endpoint_url, json=body, headers=headers, timeout=config.request_timeout
            )
        except requests.RequestException as exc:
            last_error = str(exc)
            continue
        if response.status_code >= 500:
            last_error = f"HTTP {response.status_code}"
            continue
        if response.status_code != 200:
            raise GenerationError(f"endpoint rejected request: HTTP {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GenerationError(f"malformed completion payload: {exc}") from exc
    raise GenerationError(f"gave up after {attempts} attempts: {last_error}")


def generate_llm(
    templates: list[SeedTemplate],
    config: GenerationConfig,
    sections: PromptSections = DEFAULT_PROMPT_SECTIONS,
) -> list[AnnotatedNote]:
    """Generate variants_per_template notes per template over the wire.

    The label trailer of each response becomes the note's embedded record;
    an unparseable trailer leaves the record blank for QA to flag rather
    than dropping the note.
    """
    api_key = os.environ.get(config.api_key_env)
    if not api_key:
        raise ConfigurationError(
            f"API key environment variable {config.api_key_env!r} is not set"
        )
    session = requests.Session()
    session.trust_env = False  # endpoint comes from config, not ambient proxies

    jobs = [
        (template, variant)
        for template in templates
        for variant in range(config.variants_per_template)
    ]

    def run(job) -> AnnotatedNote:
        template, variant = job
        prompt = build_prompt(template, sections)
        try:
            content = _complete(session, config, api_key, prompt)
        except GenerationError as exc:
            raise GenerationError(
                f"template {template.note.note_id!r} variant {variant}: {exc}"
            ) from exc
        body, record = parse_label_trailer(content)
        note = Note(
            note_id=f"{template.note.note_id}-llm{variant:02d}",
            site_id=template.note.site_id,
            text=body,
            provenance=Provenance.LLM_GENERATED,
        )
        return AnnotatedNote(
            note=note, record=record, annotation_source=AnnotationSource.EMBEDDED
        )

    with ThreadPoolExecutor(max_workers=config.max_concurrent_requests) as executor:
        return list(executor.map(run, jobs))
