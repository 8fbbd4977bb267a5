import json

import numpy as np

from jobrec.corpus import TRAIN, load_dataset, split_equally
from jobrec.synth import SKILLS, synth_generate


def test_same_seed_byte_identical(tmp_path):
    a = synth_generate(tmp_path / "a", 100, 80, 7)
    b = synth_generate(tmp_path / "b", 100, 80, 7)
    for name in ("users.jsonl", "jobs.jsonl", "interactions.jsonl", "latents.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_longtail_few_shot_fraction(tmp_path):
    d = synth_generate(tmp_path / "d", 400, 300, 0)
    _, _, store = load_dataset(d)
    store = split_equally(store, 1)
    assert np.mean(store.shot_counts(TRAIN) <= 5) >= 0.4


def test_resume_mentions_only_latent_skills(tmp_path):
    d = synth_generate(tmp_path / "d", 60, 40, 3)
    latents = json.loads((d / "latents.json").read_text())
    for line in (d / "users.jsonl").read_text().splitlines():
        rec = json.loads(line)
        mentioned = {s for s in SKILLS if s in rec["resume_text"]}
        assert mentioned <= set(latents["user_skills"][rec["user_id"]])


def test_separable_profile_interacts_within_domain(tmp_path):
    d = synth_generate(tmp_path / "d", 30, 30, 0, "separable")
    latents = json.loads((d / "latents.json").read_text())
    for line in (d / "interactions.jsonl").read_text().splitlines():
        rec = json.loads(line)
        assert latents["user_domain"][rec["user_id"]] == latents["job_domain"][rec["job_id"]]
