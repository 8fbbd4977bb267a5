"""Experiment drivers shared by scripts/ and the acceptance suite.

All runs use synthetic data and the offline stack (mock completion, hashed
embeddings) at a desk-scale configuration: narrow layers and a larger
learning rate than the full-size defaults, so a run takes seconds on a CPU.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .corpus import TEST, TRAIN, load_dataset, split_equally
from .evaluation import MetricReport, fewshot_report
from .model import ModelDims
from .pipeline import PreparedDataset, prepare_offline
from .recommender import TrainConfig, TrainReport, train
from .resume_gen import build_prompt_irc, content_terms, mock_complete
from .seeding import derive_seed
from .synth import synth_generate
from .text_embed import EmbedderConfig, cosine, embed_texts

DESK_LR = 3e-3
DESK_D_TEXT = 128


def desk_config(mode: str, seed: int, d_text: int = DESK_D_TEXT, **overrides) -> TrainConfig:
    cfg = TrainConfig(mode=mode, seed=seed, lr=DESK_LR, max_epochs=200, patience=50,
                      classifier_holdout=0.2, dims=ModelDims.small(d_text))
    return replace(cfg, **overrides)


def prepare_synthetic(seed: int, n_users: int = 400, n_jobs: int = 300, d_text: int = DESK_D_TEXT,
                      profile: str = "longtail", modes=("base", "src", "irc", "lgir"),
                      workdir=None) -> PreparedDataset:
    with tempfile.TemporaryDirectory() as tmp:
        data_dir = Path(workdir or tmp) / f"synth-{profile}-{seed}"
        synth_generate(data_dir, n_users, n_jobs, seed, profile)
        return prepare_offline(data_dir, seed, EmbedderConfig(d=d_text), modes=modes)


@dataclass
class RunResult:
    seed: int
    mode: str
    test: MetricReport  # with few-shot quintile groups
    train: TrainReport


def run_modes(prep: PreparedDataset, seed: int, modes: Sequence[str], d_text: int = DESK_D_TEXT,
              **overrides) -> Dict[str, RunResult]:
    out = {}
    for mode in modes:
        model, report = train(prep.train_data(mode), desk_config(mode, seed, d_text, **overrides))
        out[mode] = RunResult(seed, mode, fewshot_report(model, prep.store, prep.test_sets), report)
    return out


def run_ablation(seeds: Sequence[int], modes=("base", "src", "irc", "lgir"), n_users: int = 400,
                 n_jobs: int = 300, d_text: int = DESK_D_TEXT, **overrides) -> Dict[Tuple[int, str], RunResult]:
    results = {}
    for seed in seeds:
        prep = prepare_synthetic(seed, n_users, n_jobs, d_text, modes=modes)
        for mode, res in run_modes(prep, seed, modes, d_text, **overrides).items():
            results[(seed, mode)] = res
    return results


def relative_gain(new: float, old: float) -> float:
    return (new - old) / old if old > 0 else (np.inf if new > 0 else 0.0)


@dataclass
class AblationSummary:
    medians: Dict[str, float]
    lgir_wins: int
    fewshot_wins: int
    n_seeds: int
    per_seed: List[dict]


def summarize_ablation(results: Dict[Tuple[int, str], RunResult]) -> AblationSummary:
    seeds = sorted({s for s, _ in results})
    modes = sorted({m for _, m in results})
    medians = {m: float(np.median([results[(s, m)].test.map for s in seeds])) for m in modes}
    rows, wins, fs_wins = [], 0, 0
    for s in seeds:
        row = {"seed": s, **{m: results[(s, m)].test.map for m in modes}}
        if "lgir" in modes and "irc" in modes:
            lg, ir = results[(s, "lgir")].test, results[(s, "irc")].test
            low = relative_gain(lg.groups[0]["map"], ir.groups[0]["map"])
            high = relative_gain(lg.groups[-1]["map"], ir.groups[-1]["map"])
            row.update(lowest_gain=low, highest_gain=high)
            wins += lg.map > ir.map
            fs_wins += low > high
        rows.append(row)
    return AblationSummary(medians, wins, fs_wins, len(seeds), rows)


def case_study_similarity(seed: int = 0, n_users: int = 400, n_jobs: int = 300, d: int = 768
                          ) -> Tuple[int, int]:
    """Count users whose mock-completed resume is closer to a held-out target
    job than their raw resume is.

    Only users with a test job that shares content terms with their train
    jobs are counted. Returns (closer, eligible).
    """
    with tempfile.TemporaryDirectory() as tmp:
        synth_generate(tmp, n_users, n_jobs, seed)
        users, jobs, store = load_dataset(tmp)
    store = split_equally(store, derive_seed(seed, "split"))
    by_id = {j.job_id: j for j in jobs}
    cfg = EmbedderConfig(d=d)
    raw, completed, targets = [], [], []
    for row, user in enumerate(users):
        tr, te = store.user_jobs(row, TRAIN), store.user_jobs(row, TEST)
        if not len(tr) or not len(te):
            continue
        seen = set().union(*(content_terms(jobs[j].description_text) for j in tr))
        target = next((j for j in te if seen & set(content_terms(jobs[j].description_text))), None)
        if target is None:
            continue
        raw.append(user.resume_text)
        completed.append(mock_complete(build_prompt_irc(user, store, by_id)))
        targets.append(jobs[target].description_text)
    if not targets:
        return 0, 0
    R, C, T = (embed_texts(t, cfg) for t in (raw, completed, targets))
    closer = sum(cosine(c, t) > cosine(r, t) for r, c, t in zip(R, C, T))
    return int(closer), len(targets)


@dataclass
class SanityRun:
    valid_mrr: List[float]
    train_loss: List[float]

    def first_epoch_reaching(self, level: float) -> Optional[int]:
        return next((i for i, v in enumerate(self.valid_mrr) if v >= level), None)

    def smoothed_loss(self, window: int = 5) -> np.ndarray:
        return np.convolve(self.train_loss, np.ones(window) / window, mode="valid")


def separable_sanity(seed: int = 0, n_users: int = 30, n_jobs: int = 30, lr: float = 2e-3, d_text: int = 64,
                     max_epochs: int = 200) -> SanityRun:
    """Base-mode training on the separable toy with early stopping disabled."""
    prep = prepare_synthetic(seed, n_users, n_jobs, d_text, profile="separable", modes=("base",))
    cfg = desk_config("base", seed, d_text, lr=lr, max_epochs=max_epochs, patience=max_epochs,
                      classifier_holdout=0.0)
    _, report = train(prep.train_data("base"), cfg)
    return SanityRun([e["valid"]["mrr"] for e in report.epochs],
                     [e["phases"]["rec"]["loss"] for e in report.epochs])
