"""Single-positive ranking metrics, candidate-set evaluation, few-shot
quintiles, and the shot-threshold sweep."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .corpus import TRAIN, EvalCandidateSet, InteractionStore


def map_at_k(rank: int, k: int) -> float:
    """Average precision at k with one relevant item: 1/rank inside the cutoff."""
    if rank < 1:
        raise ValueError("rank must be >= 1")
    return 1.0 / rank if rank <= k else 0.0


def ndcg_at_k(rank: int, k: int) -> float:
    if rank < 1:
        raise ValueError("rank must be >= 1")
    return 1.0 / math.log2(rank + 1) if rank <= k else 0.0


def mrr(rank: int) -> float:
    if rank < 1:
        raise ValueError("rank must be >= 1")
    return 1.0 / rank


def rank_candidates(model, cset: EvalCandidateSet) -> List[str]:
    """Candidate job ids by descending score, ties by ascending job_id."""
    jobs = cset.job_ids
    u = np.array([model.user_index[cset.user_id]])
    rows = np.array([[model.job_index[j] for j in jobs]])
    scores = model.score_pairs(u, rows)[0]
    order = sorted(range(len(jobs)), key=lambda i: (-scores[i], jobs[i]))
    return [jobs[i] for i in order]


@dataclass
class CandidateArrays:
    """Row-index view of candidate sets; column 0 holds the positive."""

    user_rows: np.ndarray
    job_rows: np.ndarray
    valid: np.ndarray  # False marks padding in short sets
    user_ids: List[str]

    @classmethod
    def build(cls, sets: Sequence[EvalCandidateSet], user_index, job_index):
        width = max(len(s.neg_job_ids) for s in sets) + 1
        job_rows = np.zeros((len(sets), width), dtype=np.int64)
        valid = np.zeros((len(sets), width), dtype=bool)
        for i, s in enumerate(sets):
            ids = s.job_ids
            job_rows[i, :len(ids)] = [job_index[j] for j in ids]
            valid[i, :len(ids)] = True
        users = np.array([user_index[s.user_id] for s in sets], dtype=np.int64)
        return cls(users, job_rows, valid, [s.user_id for s in sets])


def positive_ranks(scores: np.ndarray, job_rows: np.ndarray, valid: np.ndarray,
                   job_order: np.ndarray) -> np.ndarray:
    """1-based rank of column 0 in each row; ties go to the smaller job_id.

    ``job_order[r]`` is the position of job row ``r`` in ascending id order.
    """
    pos = scores[:, :1]
    key = job_order[job_rows]
    ahead = (scores > pos) | ((scores == pos) & (key < key[:, :1]))
    ahead &= valid
    ahead[:, 0] = False
    return 1 + ahead.sum(axis=1)


@dataclass
class MetricReport:
    k: int
    map: float
    ndcg: float
    mrr: float
    n_sets: int
    groups: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"k": self.k, "map": self.map, "ndcg": self.ndcg, "mrr": self.mrr, "n_sets": self.n_sets}
        d["groups"] = self.groups
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False)


def report_from_ranks(ranks: np.ndarray, k: int) -> MetricReport:
    ranks = np.asarray(ranks)
    if len(ranks) == 0:
        raise ValueError("no candidate sets to evaluate")
    maps = np.where(ranks <= k, 1.0 / ranks, 0.0)
    ndcgs = np.where(ranks <= k, 1.0 / np.log2(ranks + 1.0), 0.0)
    return MetricReport(k, float(maps.mean()), float(ndcgs.mean()), float((1.0 / ranks).mean()), len(ranks))


def job_sort_order(job_ids: Sequence[str]) -> np.ndarray:
    order = np.empty(len(job_ids), dtype=np.int64)
    order[np.argsort(np.array(job_ids, dtype=object), kind="stable")] = np.arange(len(job_ids))
    return order


def set_ranks(model, arrays: CandidateArrays, job_ids: Sequence[str]) -> np.ndarray:
    scores = model.score_pairs(arrays.user_rows, arrays.job_rows)
    return positive_ranks(scores, arrays.job_rows, arrays.valid, job_sort_order(job_ids))


def evaluate(model, sets: Sequence[EvalCandidateSet], k: int = 5, job_ids: Optional[Sequence[str]] = None
             ) -> MetricReport:
    """Mean map@k / ndcg@k / mrr over candidate sets, one weight per set.

    ``model`` needs ``user_index``, ``job_index`` and ``score_pairs``.
    """
    if not sets:
        raise ValueError("no candidate sets to evaluate")
    if job_ids is None:
        job_ids = sorted(model.job_index, key=model.job_index.get)
    arrays = CandidateArrays.build(sets, model.user_index, model.job_index)
    return report_from_ranks(set_ranks(model, arrays, job_ids), k)


def fewshot_groups(users: Sequence[int], shot_counts: np.ndarray, n_groups: int = 5) -> List[np.ndarray]:
    """Split users into ``n_groups`` buckets of near-equal size by ascending
    train-shot count (ties by row). The first bucket holds the fewest shots."""
    users = np.asarray(sorted(set(int(u) for u in users)), dtype=np.int64)
    if len(users) < n_groups:
        raise ValueError(f"need at least {n_groups} users, got {len(users)}")
    order = users[np.lexsort((users, shot_counts[users]))]
    return [np.asarray(chunk) for chunk in np.array_split(order, n_groups)]


def fewshot_report(model, store: InteractionStore, sets: Sequence[EvalCandidateSet], k: int = 5,
                   n_groups: int = 5) -> MetricReport:
    arrays = CandidateArrays.build(sets, model.user_index, model.job_index)
    ranks = set_ranks(model, arrays, store.job_ids)
    counts = store.shot_counts(TRAIN)
    groups = fewshot_groups(arrays.user_rows, counts, n_groups)
    overall = report_from_ranks(ranks, k)
    for g, members in enumerate(groups):
        mask = np.isin(arrays.user_rows, members)
        rep = report_from_ranks(ranks[mask], k)
        overall.groups.append({
            "label": f"{round(100 * (g + 1) / n_groups)}%",
            "n_users": int(len(members)),
            "min_shots": int(counts[members].min()),
            "max_shots": int(counts[members].max()),
            "map": rep.map, "ndcg": rep.ndcg, "mrr": rep.mrr, "n_sets": rep.n_sets,
        })
    return overall


@dataclass
class SweepCell:
    kappa1: int
    kappa2: int
    seed: int
    report: Optional[MetricReport] = None
    skipped: Optional[str] = None


@dataclass
class SweepResult:
    cells: List[SweepCell]

    def best(self) -> Optional[SweepCell]:
        done = [c for c in self.cells if c.report is not None]
        return max(done, key=lambda c: (c.report.map, -c.kappa1, -c.kappa2)) if done else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kappa1", "kappa2", "map", "ndcg", "mrr", "seed"])
        for c in self.cells:
            if c.report is None:
                w.writerow([c.kappa1, c.kappa2, "", "", "", c.seed])
            else:
                w.writerow([c.kappa1, c.kappa2, repr(c.report.map), repr(c.report.ndcg),
                            repr(c.report.mrr), c.seed])
        best = self.best()
        if best is not None:
            buf.write(f"# argmax map: kappa1={best.kappa1} kappa2={best.kappa2}\n")
        return buf.getvalue()


def cell_seed(root_seed: int, kappa1: int, kappa2: int) -> int:
    from .seeding import derive_seed

    return derive_seed(root_seed, f"sweep:{kappa1}:{kappa2}")


def run_sweep_cell(data, test_sets, base_config, kappa1: int, kappa2: int, seed: int, k: int = 5) -> SweepCell:
    from .recommender import train

    cell = SweepCell(kappa1, kappa2, seed)
    if kappa2 >= kappa1:
        cell.skipped = f"kappa2={kappa2} >= kappa1={kappa1}"
        return cell
    cfg = replace(base_config, kappa1=kappa1, kappa2=kappa2, seed=seed)
    model, _ = train(data, cfg)
    cell.report = evaluate(model, test_sets, k, data.store.job_ids)
    return cell


def kappa_sweep(data, test_sets, kappa1s: Sequence[int], kappa2s: Sequence[int], base_config,
                k: int = 5) -> SweepResult:
    """Train and evaluate one model per (kappa1, kappa2) cell, each with its
    own seed derived from the base seed and the cell coordinates."""
    cells = []
    for k1 in kappa1s:
        for k2 in kappa2s:
            cells.append(run_sweep_cell(data, test_sets, base_config, k1, k2,
                                        cell_seed(base_config.seed, k1, k2), k))
    return SweepResult(cells)
