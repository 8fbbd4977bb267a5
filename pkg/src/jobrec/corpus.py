"""Users, jobs, the interaction store, splitting and sampling."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DanglingReferenceError, MalformedRecordError, MissingFileError

log = logging.getLogger(__name__)

TRAIN, VALID, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "valid", "test")
SPLIT_CODES = {name: code for code, name in enumerate(SPLIT_NAMES)}


@dataclass(frozen=True)
class User:
    user_id: str
    resume_text: str = ""


@dataclass(frozen=True)
class Job:
    job_id: str
    description_text: str = ""


class InteractionStore:
    """Binary user-job interactions with a split label per pair.

    Users and jobs are addressed by row index internally; ``user_ids`` and
    ``job_ids`` give the id for each row. Every pair appears once.
    """

    def __init__(self, user_ids: Sequence[str], job_ids: Sequence[str],
                 users: np.ndarray, jobs: np.ndarray, splits: Optional[np.ndarray] = None,
                 n_duplicates: int = 0):
        self.user_ids = list(user_ids)
        self.job_ids = list(job_ids)
        self.user_index = {u: i for i, u in enumerate(self.user_ids)}
        self.job_index = {j: i for i, j in enumerate(self.job_ids)}
        users = np.asarray(users, dtype=np.int64)
        jobs = np.asarray(jobs, dtype=np.int64)
        if splits is None:
            splits = np.full(len(users), TRAIN, dtype=np.int8)
        splits = np.asarray(splits, dtype=np.int8)
        order = np.lexsort((jobs, users))
        self.users = users[order]
        self.jobs = jobs[order]
        self.splits = splits[order]
        self.n_duplicates = n_duplicates
        keys = self.users * len(self.job_ids) + self.jobs
        if len(keys) and np.any(np.diff(keys) == 0):
            raise ValueError("duplicate (user, job) pairs in store")
        self._keys = keys  # sorted, used for positive lookups

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_jobs(self) -> int:
        return len(self.job_ids)

    def __len__(self) -> int:
        return len(self.users)

    def is_positive(self, users: np.ndarray, jobs: np.ndarray) -> np.ndarray:
        """Vectorised membership test over all splits."""
        q = np.asarray(users, dtype=np.int64) * self.n_jobs + np.asarray(jobs, dtype=np.int64)
        pos = np.searchsorted(self._keys, q)
        pos = np.clip(pos, 0, max(len(self._keys) - 1, 0))
        if not len(self._keys):
            return np.zeros(q.shape, dtype=bool)
        return self._keys[pos] == q

    def split_mask(self, split) -> np.ndarray:
        code = SPLIT_CODES[split] if isinstance(split, str) else split
        return self.splits == code

    def pairs(self, split=None) -> Tuple[np.ndarray, np.ndarray]:
        if split is None:
            return self.users, self.jobs
        m = self.split_mask(split)
        return self.users[m], self.jobs[m]

    def shot_counts(self, split=TRAIN) -> np.ndarray:
        """Per-user interaction count n_i within one split (train by default)."""
        u, _ = self.pairs(split)
        return np.bincount(u, minlength=self.n_users)

    def user_jobs(self, user: int, split=None) -> np.ndarray:
        lo, hi = np.searchsorted(self.users, [user, user + 1])
        jobs = self.jobs[lo:hi]
        if split is not None:
            jobs = jobs[self.split_mask(split)[lo:hi]]
        return jobs

    def with_splits(self, splits: np.ndarray) -> "InteractionStore":
        return InteractionStore(self.user_ids, self.job_ids, self.users, self.jobs, splits,
                                self.n_duplicates)


def _read_jsonl(path: Path, required: Tuple[str, ...]) -> List[dict]:
    if not path.exists():
        raise MissingFileError(f"missing file: {path}")
    records = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(path, line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise MalformedRecordError(path, line_no, "record is not an object")
            for key in required:
                if not isinstance(rec.get(key), str):
                    raise MalformedRecordError(path, line_no, f"missing or non-string field {key!r}")
            rec["_line"] = line_no
            records.append(rec)
    return records


def load_dataset(data_dir) -> Tuple[List[User], List[Job], InteractionStore]:
    """Read users/jobs/interactions (and splits.jsonl when present).

    Duplicate interaction pairs are dropped; their count is logged and kept
    on ``store.n_duplicates``.
    """
    data_dir = Path(data_dir)
    user_recs = _read_jsonl(data_dir / "users.jsonl", ("user_id", "resume_text"))
    job_recs = _read_jsonl(data_dir / "jobs.jsonl", ("job_id", "description_text"))
    inter_path = data_dir / "interactions.jsonl"
    inter_recs = _read_jsonl(inter_path, ("user_id", "job_id"))

    users, jobs = [], []
    for recs, cls, key, text_key, path in (
        (user_recs, User, "user_id", "resume_text", "users.jsonl"),
        (job_recs, Job, "job_id", "description_text", "jobs.jsonl"),
    ):
        seen = set()
        out = users if cls is User else jobs
        for rec in recs:
            ident = rec[key]
            if not ident:
                raise MalformedRecordError(data_dir / path, rec["_line"], f"empty {key}")
            if ident in seen:
                raise MalformedRecordError(data_dir / path, rec["_line"], f"duplicate {key} {ident!r}")
            seen.add(ident)
            out.append(cls(ident, rec[text_key]))

    user_index = {u.user_id: i for i, u in enumerate(users)}
    job_index = {j.job_id: i for i, j in enumerate(jobs)}

    split_of: Dict[Tuple[str, str], int] = {}
    split_path = data_dir / "splits.jsonl"
    if split_path.exists():
        for rec in _read_jsonl(split_path, ("user_id", "job_id", "split")):
            if rec["split"] not in SPLIT_CODES:
                raise MalformedRecordError(split_path, rec["_line"], f"unknown split {rec['split']!r}")
            split_of[(rec["user_id"], rec["job_id"])] = SPLIT_CODES[rec["split"]]

    seen_pairs = set()
    u_idx, j_idx, s_idx = [], [], []
    n_dup = 0
    for rec in inter_recs:
        uid, jid = rec["user_id"], rec["job_id"]
        if uid not in user_index:
            raise DanglingReferenceError(f"{inter_path}:{rec['_line']}: unknown user id {uid!r}")
        if jid not in job_index:
            raise DanglingReferenceError(f"{inter_path}:{rec['_line']}: unknown job id {jid!r}")
        if (uid, jid) in seen_pairs:
            n_dup += 1
            continue
        seen_pairs.add((uid, jid))
        u_idx.append(user_index[uid])
        j_idx.append(job_index[jid])
        s_idx.append(split_of.get((uid, jid), TRAIN))
    if n_dup:
        log.warning("dropped %d duplicate interaction(s) in %s", n_dup, inter_path)
    store = InteractionStore([u.user_id for u in users], [j.job_id for j in jobs],
                             u_idx, j_idx, s_idx, n_duplicates=n_dup)
    return users, jobs, store


def split_sizes(n: int) -> Tuple[int, int, int]:
    """Near-equal three-way sizes; remainder goes to train first, then valid."""
    if n < 3:
        return n, 0, 0
    base, rem = divmod(n, 3)
    return base + (rem >= 1), base + (rem >= 2), base


def split_equally(store: InteractionStore, seed: int) -> InteractionStore:
    rng = np.random.default_rng(seed)
    splits = np.empty(len(store), dtype=np.int8)
    bounds = np.searchsorted(store.users, np.arange(store.n_users + 1))
    for u in range(store.n_users):
        lo, hi = bounds[u], bounds[u + 1]
        n = hi - lo
        if n == 0:
            continue
        n_tr, n_va, _ = split_sizes(n)
        labels = np.full(n, TEST, dtype=np.int8)
        labels[:n_tr] = TRAIN
        labels[n_tr:n_tr + n_va] = VALID
        splits[lo:hi] = labels[rng.permutation(n)]
    return store.with_splits(splits)


def write_splits(store: InteractionStore, path) -> None:
    lines = []
    for u, j, s in zip(store.users, store.jobs, store.splits):
        lines.append(json.dumps({"user_id": store.user_ids[u], "job_id": store.job_ids[j],
                                 "split": SPLIT_NAMES[s]}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class ShotLabelSet:
    kappa1: int
    kappa2: int
    many_shot: np.ndarray  # user row indices, label 1
    few_shot: np.ndarray  # user row indices, label 0
    unlabeled: np.ndarray

    def labeled(self) -> Tuple[np.ndarray, np.ndarray]:
        users = np.concatenate([self.many_shot, self.few_shot])
        y = np.concatenate([np.ones(len(self.many_shot)), np.zeros(len(self.few_shot))])
        return users, y


def shot_labels(store: InteractionStore, kappa1: int, kappa2: int) -> ShotLabelSet:
    if kappa2 >= kappa1:
        raise ConfigError(f"kappa2 ({kappa2}) must be smaller than kappa1 ({kappa1})")
    n = store.shot_counts(TRAIN)
    many = np.flatnonzero(n >= kappa1)
    few = np.flatnonzero(n <= kappa2)
    rest = np.flatnonzero((n < kappa1) & (n > kappa2))
    return ShotLabelSet(kappa1, kappa2, many, few, rest)


@dataclass(frozen=True)
class BprTriplet:
    user_id: str
    pos_job_id: str
    neg_job_id: str


def sample_bpr_indices(store: InteractionStore, batch: int,
                       rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index-level BPR sampler used by training.

    Positives are uniform over train interactions; negatives are uniform over
    jobs the user never interacted with in any split (rejection sampling).
    """
    tr_u, tr_j = store.pairs(TRAIN)
    if len(tr_u) == 0:
        raise ValueError("train split is empty")
    counts = np.bincount(store.users, minlength=store.n_users)
    saturated = counts >= store.n_jobs
    if saturated[tr_u].all():
        raise ValueError("every train user is positive on all jobs; no negatives exist")
    if saturated.any():
        log.warning("skipping %d user(s) positive on every job", int(saturated[tr_u].sum()))
    users = np.empty(0, dtype=np.int64)
    pos = np.empty(0, dtype=np.int64)
    while len(users) < batch:
        k = rng.integers(0, len(tr_u), size=batch - len(users))
        keep = ~saturated[tr_u[k]]
        users = np.concatenate([users, tr_u[k][keep]])
        pos = np.concatenate([pos, tr_j[k][keep]])
    neg = rng.integers(0, store.n_jobs, size=batch)
    bad = store.is_positive(users, neg)
    while bad.any():
        neg[bad] = rng.integers(0, store.n_jobs, size=int(bad.sum()))
        bad = store.is_positive(users, neg)
    return users, pos, neg


def sample_bpr_triplets(store: InteractionStore, batch: int, seed: int) -> List[BprTriplet]:
    u, p, n = sample_bpr_indices(store, batch, np.random.default_rng(seed))
    return [BprTriplet(store.user_ids[a], store.job_ids[b], store.job_ids[c])
            for a, b, c in zip(u, p, n)]


@dataclass
class EvalCandidateSet:
    user_id: str
    pos_job_id: str
    neg_job_ids: List[str]
    k: int = field(default=0)

    def __post_init__(self):
        if not self.k:
            self.k = len(self.neg_job_ids)

    @property
    def job_ids(self) -> List[str]:
        return [self.pos_job_id, *self.neg_job_ids]


def sample_eval_candidates(store: InteractionStore, split, k: int = 20,
                           seed: int = 0) -> List[EvalCandidateSet]:
    """One candidate set per positive of ``split``: the positive plus ``k``
    distinct negatives drawn without replacement from the user's non-positive
    jobs. Users with fewer than ``k`` eligible jobs get all of them."""
    rng = np.random.default_rng(seed)
    su, sj = store.pairs(split)
    if len(su) == 0:
        raise ValueError(f"split {split!r} is empty")
    all_jobs = np.arange(store.n_jobs)
    eligible_cache: Dict[int, np.ndarray] = {}
    short = 0
    out = []
    for u, j in zip(su, sj):
        if u not in eligible_cache:
            mask = np.ones(store.n_jobs, dtype=bool)
            mask[store.user_jobs(u)] = False
            eligible_cache[u] = all_jobs[mask]
        eligible = eligible_cache[u]
        take = min(k, len(eligible))
        short += take < k
        negs = rng.choice(eligible, size=take, replace=False)
        out.append(EvalCandidateSet(store.user_ids[u], store.job_ids[j],
                                    [store.job_ids[n] for n in negs], take))
    if short:
        log.warning("%d candidate set(s) have fewer than %d negatives", short, k)
    return out
