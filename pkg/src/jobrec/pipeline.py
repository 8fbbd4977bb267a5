"""Glue between the data, resume completion, embedding and training steps."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .corpus import InteractionStore, Job, User, load_dataset, sample_eval_candidates, split_equally
from .errors import ConfigError
from .recommender import TrainData
from .resume_gen import (IRC, SRC, MockClient, ResumeCache, build_prompt_irc, build_prompt_src,
                         complete_all)
from .seeding import derive_seed
from .text_embed import EmbedderConfig, EmbeddingCache, embed_texts

MODE_STRATEGY = {"base": None, "src": SRC, "irc": IRC, "lgir": IRC}


def build_prompts(strategy: str, users: Sequence[User], jobs: Sequence[Job], store: InteractionStore,
                  budget: int = 6000):
    if strategy == SRC:
        return [build_prompt_src(u) for u in users]
    by_id = {j.job_id: j for j in jobs}
    return [build_prompt_irc(u, store, by_id, budget) for u in users]


def generate_resumes(strategy: str, users, jobs, store, client, cache: ResumeCache, budget: int = 6000,
                     max_concurrency: int = 1) -> Dict[str, str]:
    prompts = build_prompts(strategy, users, jobs, store, budget)
    gens = complete_all(prompts, client, cache, max_concurrency)
    return {g.user_id: g.text for g in gens}


def user_texts_for_mode(mode: str, users: Sequence[User], generated: Optional[Dict[str, str]]) -> List[str]:
    strategy = MODE_STRATEGY[mode]
    if strategy is None:
        return [u.resume_text for u in users]
    if generated is None:
        raise ConfigError(f"mode {mode!r} requires a generated-resume cache built with strategy {strategy}")
    missing = [u.user_id for u in users if u.user_id not in generated]
    if missing:
        raise ConfigError(f"generated-resume cache ({strategy}) lacks {len(missing)} user(s), "
                          f"e.g. {missing[:3]}")
    return [generated[u.user_id] for u in users]


@dataclass
class PreparedDataset:
    """A split dataset with offline (mock LLM + hashed) features per mode."""

    users: List[User]
    jobs: List[Job]
    store: InteractionStore
    job_text: np.ndarray
    user_text: Dict[str, np.ndarray] = field(default_factory=dict)
    resumes: Dict[str, Dict[str, str]] = field(default_factory=dict)
    valid_sets: list = field(default_factory=list)
    test_sets: list = field(default_factory=list)

    def train_data(self, mode: str) -> TrainData:
        return TrainData(self.store, self.user_text[mode], self.job_text, self.valid_sets)


def prepare_offline(data_dir, seed: int, embed: EmbedderConfig, negatives: int = 20,
                    modes: Sequence[str] = ("base", "src", "irc", "lgir"), cache_dir=None) -> PreparedDataset:
    """Split, complete resumes with the mock client, and embed, all in memory
    unless ``cache_dir`` is given."""
    users, jobs, store = load_dataset(data_dir)
    store = split_equally(store, derive_seed(seed, "split"))
    cache_dir = Path(cache_dir) if cache_dir is not None else None
    emb_cache = EmbeddingCache(embed.d, cache_dir / "embeddings.emb" if cache_dir else None)
    prep = PreparedDataset(users, jobs, store,
                           embed_texts([j.description_text for j in jobs], embed, emb_cache))
    client = MockClient()
    for mode in modes:
        strategy = MODE_STRATEGY[mode]
        generated = None
        if strategy is not None:
            if strategy not in prep.resumes:
                rc = ResumeCache(cache_dir / "resumes.gen.jsonl") if cache_dir else _MemoryCache()
                prep.resumes[strategy] = generate_resumes(strategy, users, jobs, store, client, rc)
            generated = prep.resumes[strategy]
        prep.user_text[mode] = embed_texts(user_texts_for_mode(mode, users, generated), embed, emb_cache)
    if cache_dir is not None:
        emb_cache.save()
    prep.valid_sets = sample_eval_candidates(store, "valid", negatives, derive_seed(seed, "eval-valid"))
    prep.test_sets = sample_eval_candidates(store, "test", negatives, derive_seed(seed, "eval-test"))
    return prep


class _MemoryCache(ResumeCache):
    def __init__(self):
        import threading

        self._lock = threading.Lock()
        self._records = {}
        self.path = None

    def put(self, gen):
        rec = {"user_id": gen.user_id, "strategy": gen.strategy, "prompt_hash": gen.prompt_hash,
               "model_id": gen.model_id, "text": gen.text, "created_at": gen.created_at}
        self._records[self._key(rec)] = rec
