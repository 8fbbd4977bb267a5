"""Synthetic recruitment data with latent skills and a long-tailed activity
distribution.

Each user and job carries a binary skill vector over a fixed vocabulary of
two-word skill phrases grouped into domains. Interactions are drawn from a
logistic model on the latent dot product, and the per-user interaction count
follows a truncated power law so that most users are few-shot. Resume text
only ever names skills from the user's own support; few-shot users write
shorter resumes padded with generic filler.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import split_sizes

DOMAINS = {
    "design": ["visual design", "user research", "brand identity", "motion graphics",
               "interaction design", "typography layout"],
    "data": ["machine learning", "data analysis", "statistical modeling", "data visualization",
             "deep learning", "feature engineering"],
    "backend": ["distributed systems", "database tuning", "api development",
                "cloud infrastructure", "message queues", "service reliability"],
    "frontend": ["react components", "responsive layout", "browser performance",
                 "state management", "accessibility testing", "css architecture"],
    "sales": ["account management", "lead generation", "contract negotiation",
              "pipeline forecasting", "customer retention", "territory planning"],
    "marketing": ["content strategy", "search optimization", "campaign analytics",
                  "social media", "email marketing", "market research"],
    "finance": ["financial modeling", "risk assessment", "tax compliance", "budget planning",
                "audit procedures", "investment analysis"],
    "operations": ["supply chain", "inventory control", "vendor management",
                   "process improvement", "logistics planning", "quality assurance"],
}
DOMAIN_NAMES = list(DOMAINS)
SKILLS = [s for d in DOMAIN_NAMES for s in DOMAINS[d]]
SKILL_DOMAIN = np.repeat(np.arange(len(DOMAIN_NAMES)), 6)

FILLER = [
    "Hard working and eager to learn.",
    "Team player with a positive attitude.",
    "Looking for new opportunities.",
    "Fast learner who enjoys challenges.",
    "Passionate about personal growth.",
    "Reliable and punctual.",
    "Enjoys travel and reading.",
    "Open to relocation.",
]

PROFILES = ("longtail", "separable")

# per-user total interaction count: floor(scale * U^(-1/alpha)), truncated
LONGTAIL_ALPHA = 0.7
LONGTAIL_SCALE = 4.0
AFFINITY_SLOPE = 2.5
AFFINITY_OFFSET = 4.0
FEW_SHOT_TRAIN = 5
# few domains, so each job has many users and rarely misses the train split
SEPARABLE_DOMAINS = 3


def _join(skills):
    if len(skills) == 1:
        return skills[0]
    return ", ".join(skills[:-1]) + " and " + skills[-1]


def _job_text(domain, skills):
    return (f"{domain.capitalize()} position. We are looking for a candidate with experience in "
            f"{_join(skills)}. The role offers a friendly team.")


def _resume_text(rng, domain, mentioned, sparse):
    if sparse:
        filler = [FILLER[i] for i in sorted(rng.choice(len(FILLER), size=2, replace=False))]
        return f"Some exposure to {_join(mentioned)}. " + " ".join(filler)
    return (f"{domain.capitalize()} professional with hands-on experience in {_join(mentioned)}. "
            f"{FILLER[int(rng.integers(len(FILLER)))]}")


def _longtail_counts(rng, n_users, n_jobs):
    cap = max(1, min(150, n_jobs // 2))
    u = rng.uniform(size=n_users)
    n = np.floor(LONGTAIL_SCALE * u ** (-1.0 / LONGTAIL_ALPHA)).astype(np.int64)
    return np.clip(n, 1, cap)


def generate(n_users: int, n_jobs: int, seed: int, profile: str = "longtail") -> dict:
    """Build a dataset in memory. Returns users, jobs, interactions, latents."""
    if n_users < 1 or n_jobs < 1:
        raise ValueError("n_users and n_jobs must be >= 1")
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    rng = np.random.default_rng(seed)
    n_skills = len(SKILLS)

    if profile == "separable":
        n_dom = SEPARABLE_DOMAINS
        job_dom = np.arange(n_jobs) % n_dom
        user_dom = np.arange(n_users) % n_dom
    else:
        n_dom = len(DOMAIN_NAMES)
        job_dom = rng.integers(0, n_dom, size=n_jobs)
        user_dom = rng.integers(0, n_dom, size=n_users)

    job_lat = np.zeros((n_jobs, n_skills))
    job_skills = []
    for j in range(n_jobs):
        base = 6 * job_dom[j]
        chosen = list(base + rng.choice(6, size=3, replace=False))
        if profile == "longtail" and rng.uniform() < 0.3:
            other = int(rng.integers(0, n_skills))
            if other not in chosen:
                chosen.append(other)
        chosen.sort()
        job_lat[j, chosen] = 1.0
        job_skills.append(chosen)

    user_lat = np.zeros((n_users, n_skills))
    for i in range(n_users):
        base = 6 * user_dom[i]
        if profile == "separable":
            support = list(range(base, base + 6))
        else:
            support = list(base + rng.choice(6, size=4, replace=False))
            if rng.uniform() < 0.3:
                other = int(rng.integers(0, n_skills))
                if other not in support:
                    support.append(other)
        user_lat[i, sorted(support)] = 1.0

    if profile == "separable":
        inter = [(i, j) for i in range(n_users) for j in range(n_jobs) if job_dom[j] == user_dom[i]]
        counts = np.bincount([i for i, _ in inter], minlength=n_users)
    else:
        counts = _longtail_counts(rng, n_users, n_jobs)
        affinity = AFFINITY_SLOPE * (user_lat @ job_lat.T) - AFFINITY_OFFSET
        log_w = -np.logaddexp(0.0, -affinity)  # log sigmoid
        inter = []
        for i in range(n_users):
            # Gumbel top-k == sampling without replacement proportional to w
            keys = log_w[i] + rng.gumbel(size=n_jobs)
            picked = np.sort(np.argsort(-keys, kind="stable")[: counts[i]])
            inter.extend((i, int(j)) for j in picked)

    train_counts = np.array([split_sizes(int(c))[0] for c in counts])
    users = []
    for i in range(n_users):
        support = np.flatnonzero(user_lat[i])
        sparse = profile == "longtail" and train_counts[i] <= FEW_SHOT_TRAIN
        n_mention = 1 if sparse else min(len(support), 3 + int(rng.integers(0, 2)))
        mentioned = [SKILLS[s] for s in sorted(rng.choice(support, size=n_mention, replace=False))]
        text = _resume_text(rng, DOMAIN_NAMES[user_dom[i]], mentioned, sparse)
        users.append({"user_id": f"u{i:05d}", "resume_text": text})
    jobs = [{"job_id": f"j{j:05d}",
             "description_text": _job_text(DOMAIN_NAMES[job_dom[j]], [SKILLS[s] for s in job_skills[j]])}
            for j in range(n_jobs)]
    interactions = [{"user_id": f"u{i:05d}", "job_id": f"j{j:05d}"} for i, j in inter]

    latents = {
        "profile": profile,
        "seed": seed,
        "skills": SKILLS,
        "user_domain": {f"u{i:05d}": DOMAIN_NAMES[d] for i, d in enumerate(user_dom)},
        "job_domain": {f"j{j:05d}": DOMAIN_NAMES[d] for j, d in enumerate(job_dom)},
        "user_skills": {f"u{i:05d}": [SKILLS[s] for s in np.flatnonzero(user_lat[i])]
                        for i in range(n_users)},
        "job_skills": {f"j{j:05d}": [SKILLS[s] for s in job_skills[j]] for j in range(n_jobs)},
    }
    if profile == "longtail":
        frac_few = float(np.mean(train_counts <= FEW_SHOT_TRAIN))
        assert frac_few >= 0.4, f"long-tail generator produced only {frac_few:.2f} few-shot users"
        latents["few_shot_fraction"] = frac_few
    return {"users": users, "jobs": jobs, "interactions": interactions, "latents": latents}


def _write_jsonl(path: Path, records) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records),
                   encoding="utf-8")
    tmp.replace(path)


def synth_generate(out_dir, n_users: int, n_jobs: int, seed: int, profile: str = "longtail") -> Path:
    data = generate(n_users, n_jobs, seed, profile)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out / "users.jsonl", data["users"])
    _write_jsonl(out / "jobs.jsonl", data["jobs"])
    _write_jsonl(out / "interactions.jsonl", data["interactions"])
    tmp = out / "latents.json.tmp"
    tmp.write_text(json.dumps(data["latents"], indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    tmp.replace(out / "latents.json")
    return out
