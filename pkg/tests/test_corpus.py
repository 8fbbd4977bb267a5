import json
import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jobrec.corpus import (TEST, TRAIN, VALID, load_dataset, sample_bpr_indices, sample_bpr_triplets,
                           sample_eval_candidates, shot_labels, split_equally, split_sizes, write_splits)
from jobrec.errors import ConfigError, DanglingReferenceError, MalformedRecordError, MissingFileError

from conftest import make_store, random_store


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")


@pytest.fixture
def two_by_two(tmp_path):
    write_jsonl(tmp_path / "users.jsonl", [{"user_id": "a", "resume_text": "x"},
                                            {"user_id": "b", "resume_text": "y"}])
    write_jsonl(tmp_path / "jobs.jsonl", [{"job_id": "p", "description_text": "d1"},
                                           {"job_id": "q", "description_text": "d2"}])
    write_jsonl(tmp_path / "interactions.jsonl", [{"user_id": "a", "job_id": "p"},
                                                   {"user_id": "b", "job_id": "q"}])
    return tmp_path


def test_load_counts(two_by_two):
    users, jobs, store = load_dataset(two_by_two)
    assert (len(users), len(jobs), len(store)) == (2, 2, 2)


def test_load_dangling_job_names_id(two_by_two):
    with (two_by_two / "interactions.jsonl").open("a") as fh:
        fh.write(json.dumps({"user_id": "a", "job_id": "zzz"}) + "\n")
    with pytest.raises(DanglingReferenceError, match="zzz"):
        load_dataset(two_by_two)


def test_load_dedups_with_warning(two_by_two, caplog):
    with (two_by_two / "interactions.jsonl").open("a") as fh:
        fh.write(json.dumps({"user_id": "a", "job_id": "p"}) + "\n")
    with caplog.at_level(logging.WARNING):
        _, _, store = load_dataset(two_by_two)
    assert len(store) == 2 and store.n_duplicates == 1
    assert sum("duplicate" in r.message for r in caplog.records) == 1


def test_load_malformed_line_reports_line_number(two_by_two):
    with (two_by_two / "jobs.jsonl").open("a") as fh:
        fh.write("{not json\n")
    with pytest.raises(MalformedRecordError) as exc:
        load_dataset(two_by_two)
    assert exc.value.line_no == 3


def test_load_missing_file(tmp_path):
    with pytest.raises(MissingFileError):
        load_dataset(tmp_path)


def test_splits_file_round_trip(two_by_two):
    _, _, store = load_dataset(two_by_two)
    store = store.with_splits(np.array([TRAIN, TEST]))
    write_splits(store, two_by_two / "splits.jsonl")
    _, _, again = load_dataset(two_by_two)
    np.testing.assert_array_equal(again.splits, store.splits)


@pytest.mark.parametrize("n, sizes", [(9, (3, 3, 3)), (4, (2, 1, 1)), (5, (2, 2, 1)), (2, (2, 0, 0))])
def test_split_sizes(n, sizes):
    assert split_sizes(n) == sizes


def test_split_equally_per_user_counts():
    store = make_store(2, 12, [(0, j) for j in range(9)] + [(1, j) for j in range(4)])
    s = split_equally(store, seed=5)
    for u, want in ((0, (3, 3, 3)), (1, (2, 1, 1))):
        got = tuple(len(s.user_jobs(u, sp)) for sp in (TRAIN, VALID, TEST))
        assert got == want


def test_split_equally_deterministic():
    store = random_store(np.random.default_rng(0), 10, 15)
    a = split_equally(store, 11)
    b = split_equally(store, 11)
    np.testing.assert_array_equal(a.splits, b.splits)


@given(st.integers(0, 10_000), st.integers(1, 8), st.integers(2, 12))
def test_split_is_partition_with_balanced_sizes(seed, n_users, n_jobs):
    store = random_store(np.random.default_rng(seed), n_users, n_jobs, seed=seed)
    assert len(store) == sum(len(store.pairs(sp)[0]) for sp in (TRAIN, VALID, TEST))
    for u in range(n_users):
        sizes = [len(store.user_jobs(u, sp)) for sp in (TRAIN, VALID, TEST)]
        if sum(sizes) >= 3:
            assert max(sizes) - min(sizes) <= 1


def test_shot_labels_thresholds():
    pairs = [(0, j) for j in range(35)] + [(1, j) for j in range(5)] + [(2, j) for j in range(15)]
    store = make_store(3, 40, pairs)
    labels = shot_labels(store, 30, 5)
    assert list(labels.many_shot) == [0]
    assert list(labels.few_shot) == [1]
    assert list(labels.unlabeled) == [2]


def test_shot_labels_use_train_split_only():
    pairs = [(0, j) for j in range(6)]
    store = make_store(1, 6, pairs, splits=[TRAIN] * 3 + [TEST] * 3)
    assert list(shot_labels(store, 30, 5).few_shot) == [0]


def test_shot_labels_reject_bad_thresholds():
    with pytest.raises(ConfigError):
        shot_labels(make_store(1, 1, [(0, 0)]), 5, 5)


@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(1, 5))
def test_shot_labels_partition_users(seed, k1, k2):
    if k2 >= k1:
        k2 = k1 - 1
    store = random_store(np.random.default_rng(seed), 9, 10, density=0.6, seed=seed)
    lab = shot_labels(store, k1, k2)
    everyone = np.concatenate([lab.many_shot, lab.few_shot, lab.unlabeled])
    assert sorted(everyone.tolist()) == list(range(store.n_users))


def test_bpr_forced_triplet():
    store = make_store(1, 2, [(0, 0)])
    for t in sample_bpr_triplets(store, 16, seed=0):
        assert (t.user_id, t.pos_job_id, t.neg_job_id) == ("u0", "j0", "j1")


def test_bpr_batch_size_and_determinism():
    store = random_store(np.random.default_rng(1), 20, 30)
    a = sample_bpr_triplets(store, 1024, seed=3)
    assert len(a) == 1024
    assert a == sample_bpr_triplets(store, 1024, seed=3)


@given(st.integers(0, 10_000))
def test_bpr_negatives_never_positive(seed):
    store = random_store(np.random.default_rng(seed), 6, 8, density=0.5, seed=seed)
    u, p, n = sample_bpr_indices(store, 64, np.random.default_rng(seed))
    assert not store.is_positive(u, n).any()
    tr = set(zip(*store.pairs(TRAIN)))
    assert all((a, b) in tr for a, b in zip(u.tolist(), p.tolist()))


def test_eval_sets_have_k_plus_one_items():
    store = random_store(np.random.default_rng(2), 10, 60, density=0.1)
    sets = sample_eval_candidates(store, TEST, k=20, seed=0)
    assert all(len(s.job_ids) == 21 and s.k == 20 for s in sets)


def test_eval_sets_exhaustion():
    store = make_store(1, 3, [(0, 0)], splits=[TEST])
    (s,) = sample_eval_candidates(store, TEST, k=20, seed=0)
    assert len(s.job_ids) == 3 and s.k == 2


def test_eval_sets_deterministic():
    store = random_store(np.random.default_rng(4), 10, 40)
    a = sample_eval_candidates(store, "valid", 20, seed=9)
    b = sample_eval_candidates(store, "valid", 20, seed=9)
    assert [s.job_ids for s in a] == [s.job_ids for s in b]


@given(st.integers(0, 10_000))
def test_eval_negatives_distinct_and_never_positive(seed):
    store = random_store(np.random.default_rng(seed), 5, 30, density=0.3, seed=seed)
    for s in sample_eval_candidates(store, TEST, 20, seed):
        assert len(set(s.neg_job_ids)) == len(s.neg_job_ids)
        u = store.user_index[s.user_id]
        negs = np.array([store.job_index[j] for j in s.neg_job_ids])
        assert not store.is_positive(np.full(len(negs), u), negs).any()
