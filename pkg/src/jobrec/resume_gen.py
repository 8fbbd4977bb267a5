"""Resume completion prompts (self-description only, or self-description plus
interacted job descriptions) and a cached completion client."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .corpus import TRAIN, InteractionStore, Job, User
from .errors import CompletionError, ConfigError, InvalidGenerationError
from .text_embed import ENGLISH_STOPWORDS

log = logging.getLogger(__name__)

SRC, IRC = "SRC", "IRC"
TEMPLATE_IDS = {SRC: "src_v1", IRC: "irc_v1"}
EMPTY_RESUME = "(no self-description provided)"
TRUNCATION_MARKER = "[...truncated]"
DEFAULT_BUDGET = 6000


def load_template(template_id: str) -> str:
    return resources.files("jobrec.templates").joinpath(f"{template_id}.txt").read_text("utf-8")


def prompt_hash(rendered: str) -> str:
    """64-bit hex digest of a rendered prompt."""
    return hashlib.sha256(rendered.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class PromptSpec:
    strategy: str
    template_id: str
    rendered: str
    source_user: str
    included_job_ids: Tuple[str, ...] = ()
    # the raw pieces that went into ``rendered``; used by the offline mock
    resume_text: str = ""
    job_texts: Tuple[str, ...] = ()

    @property
    def prompt_hash(self) -> str:
        return prompt_hash(self.rendered)


@dataclass
class GeneratedResume:
    user_id: str
    strategy: str
    text: str
    model_id: str
    prompt_hash: str
    created_at: str = ""


def build_prompt_src(user: User) -> PromptSpec:
    tid = TEMPLATE_IDS[SRC]
    resume = user.resume_text if user.resume_text.strip() else EMPTY_RESUME
    rendered = load_template(tid).replace("{resume}", resume)
    return PromptSpec(SRC, tid, rendered, user.user_id, (), user.resume_text, ())


def build_prompt_irc(user: User, store: InteractionStore, jobs: Dict[str, Job],
                     budget: int = DEFAULT_BUDGET) -> PromptSpec:
    """Prompt with the user's self-description and the descriptions of their
    train-split jobs in ascending job_id order, cut at ``budget`` characters."""
    tid = TEMPLATE_IDS[IRC]
    job_ids: List[str] = []
    if user.user_id in store.user_index:
        u = store.user_index[user.user_id]
        job_ids = sorted(store.job_ids[j] for j in store.user_jobs(u, TRAIN))
    included, texts, used = [], [], 0
    for jid in job_ids:
        desc = jobs[jid].description_text
        room = budget - used
        if room <= 0:
            break
        included.append(jid)
        if len(desc) > room:
            texts.append(desc[:room] + " " + TRUNCATION_MARKER)
            used = budget
            break
        texts.append(desc)
        used += len(desc)
    if len(included) < len(job_ids) and not texts[-1].endswith(TRUNCATION_MARKER):
        texts.append(TRUNCATION_MARKER)
    job_block = "\n".join(f"- {t}" for t in texts) if texts else "(none)"
    resume = user.resume_text if user.resume_text.strip() else EMPTY_RESUME
    rendered = load_template(tid).replace("{resume}", resume).replace("{jobs}", job_block)
    job_texts = tuple(t for t in texts if t != TRUNCATION_MARKER)
    return PromptSpec(IRC, tid, rendered, user.user_id, tuple(included), user.resume_text, job_texts)


# function words plus boilerplate common to job ads and resumes
_STOPWORDS = ENGLISH_STOPWORDS | frozenset("""
new position looking candidate experience role offers friendly team professional hands exposure
skills required requirements preferred years work working strong knowledge ability
""".split())

_SENT_SPLIT = re.compile(r"(?<=[.!?])\s+")
_CLAUSE_SPLIT = re.compile(r"[.,;:!?()\[\]\n]+")
_WORD = re.compile(r"[a-z0-9]+")
MOCK_MAX_TERMS = 10


def content_terms(text: str) -> Counter:
    """Unigram and adjacent-bigram content terms within clauses."""
    terms: Counter = Counter()
    for clause in _CLAUSE_SPLIT.split(text.lower()):
        run: List[str] = []
        for w in _WORD.findall(clause) + [""]:
            if w and w not in _STOPWORDS and len(w) > 2:
                run.append(w)
                continue
            for k, tok in enumerate(run):
                terms[tok] += 1
                if k + 1 < len(run):
                    terms[f"{tok} {run[k + 1]}"] += 1
            run = []
    return terms


def top_recurring_terms(texts: Sequence[str], limit: int = MOCK_MAX_TERMS) -> List[str]:
    df: Counter = Counter()
    tf: Counter = Counter()
    for t in texts:
        c = content_terms(t.replace(TRUNCATION_MARKER, " "))
        tf.update(c)
        df.update(c.keys())
    ranked = sorted(df, key=lambda term: (-df[term], -term.count(" "), -tf[term], term))
    chosen: List[str] = []
    for term in ranked:
        if len(chosen) >= limit:
            break
        if " " not in term and any(term in c.split() for c in chosen if " " in c):
            continue
        chosen.append(term)
    return chosen


def mock_complete(prompt: PromptSpec) -> str:
    """Deterministic offline stand-in for an LLM.

    Keeps the self-description's sentences and, for IRC prompts, appends the
    most recurring content terms of the included job descriptions.
    """
    sentences = [s.strip() for s in _SENT_SPLIT.split(prompt.resume_text.strip()) if s.strip()]
    parts = list(sentences)
    if prompt.strategy == IRC and prompt.job_texts:
        terms = top_recurring_terms(prompt.job_texts)
        if terms:
            parts.append("Skills: " + ", ".join(terms) + ".")
    if not parts:
        parts.append(EMPTY_RESUME)
    return " ".join(parts)


@dataclass
class LlmClientConfig:
    kind: str = "mock"
    endpoint: Optional[str] = None
    timeout: float = 60.0
    max_retries: int = 3
    max_concurrency: int = 4
    truncation_limit: int = DEFAULT_BUDGET
    max_tokens: int = 512
    backoff_base: float = 1.0
    model_id: Optional[str] = None

    def validate(self) -> List[str]:
        problems = []
        if self.kind not in ("http", "mock"):
            problems.append(f"llm kind must be 'http' or 'mock', got {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            problems.append("http llm client requires an endpoint")
        for name in ("timeout", "max_concurrency", "truncation_limit", "max_tokens"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        if self.max_retries < 0:
            problems.append("max_retries must be >= 0")
        return problems


class MockClient:
    model_id = "mock-extractive-v1"

    def __init__(self):
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, prompt: PromptSpec) -> str:
        with self._lock:
            self.calls += 1
        return mock_complete(prompt)


class HttpClient:
    """POSTs ``{"prompt", "max_tokens"}`` and reads ``{"text"}``.

    Non-2xx responses and transport failures are retried with exponential
    backoff (``backoff_base * 2**attempt`` seconds).
    """

    def __init__(self, config: LlmClientConfig, sleep: Callable[[float], None] = time.sleep):
        problems = config.validate()
        if problems:
            raise ConfigError(problems)
        import httpx

        self._httpx = httpx
        self.config = config
        self.model_id = config.model_id or f"http:{config.endpoint}"
        self.calls = 0
        self._sleep = sleep

    def complete(self, prompt: PromptSpec) -> str:
        cfg = self.config
        last = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                self._sleep(cfg.backoff_base * 2 ** (attempt - 1))
            self.calls += 1
            try:
                resp = self._httpx.post(cfg.endpoint, json={"prompt": prompt.rendered,
                                                            "max_tokens": cfg.max_tokens},
                                        timeout=cfg.timeout)
            except self._httpx.HTTPError as exc:
                last = f"transport error: {exc}"
                continue
            if 200 <= resp.status_code < 300:
                try:
                    text = resp.json()["text"]
                except (ValueError, KeyError, TypeError):
                    raise CompletionError(prompt.source_user, "malformed response body") from None
                if not isinstance(text, str):
                    raise CompletionError(prompt.source_user, "response 'text' is not a string")
                return text
            last = f"HTTP {resp.status_code}"
        raise CompletionError(prompt.source_user, f"{last} after {cfg.max_retries} retries")


def make_client(config: LlmClientConfig):
    if config.kind == "mock":
        return MockClient()
    return HttpClient(config)


class ResumeCache:
    """Append-only JSONL cache keyed by (user_id, strategy, prompt_hash, model_id)."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: Dict[Tuple[str, str, str, str], dict] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._records[self._key(rec)] = rec

    @staticmethod
    def _key(rec) -> Tuple[str, str, str, str]:
        return rec["user_id"], rec["strategy"], rec["prompt_hash"], rec["model_id"]

    def __len__(self):
        return len(self._records)

    def get(self, user_id, strategy, phash, model_id) -> Optional[dict]:
        return self._records.get((user_id, strategy, phash, model_id))

    def put(self, gen: GeneratedResume) -> None:
        rec = {"user_id": gen.user_id, "strategy": gen.strategy, "prompt_hash": gen.prompt_hash,
               "model_id": gen.model_id, "text": gen.text, "created_at": gen.created_at}
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
                fh.flush()
            self._records[self._key(rec)] = rec

    def latest_texts(self, strategy: str, model_id: Optional[str] = None) -> Dict[str, str]:
        """Most recently appended text per user for one strategy."""
        out = {}
        for rec in self._records.values():
            if rec["strategy"] == strategy and (model_id is None or rec["model_id"] == model_id):
                out[rec["user_id"]] = rec["text"]
        return out


def complete_resume(prompt: PromptSpec, client, cache: ResumeCache) -> GeneratedResume:
    phash = prompt.prompt_hash
    hit = cache.get(prompt.source_user, prompt.strategy, phash, client.model_id)
    if hit is not None:
        return GeneratedResume(hit["user_id"], hit["strategy"], hit["text"], hit["model_id"],
                               hit["prompt_hash"], hit.get("created_at", ""))
    text = client.complete(prompt)
    if not text or not text.strip():
        raise InvalidGenerationError(prompt.source_user)
    gen = GeneratedResume(prompt.source_user, prompt.strategy, text, client.model_id, phash,
                          datetime.now(timezone.utc).isoformat(timespec="seconds"))
    cache.put(gen)
    return gen


def complete_all(prompts: Sequence[PromptSpec], client, cache: ResumeCache,
                 max_concurrency: int = 1) -> List[GeneratedResume]:
    if max_concurrency <= 1:
        return [complete_resume(p, client, cache) for p in prompts]
    with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
        return list(pool.map(lambda p: complete_resume(p, client, cache), prompts))
