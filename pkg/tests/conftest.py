import shutil
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from jobrec.corpus import InteractionStore, split_equally
from jobrec.model import Model, ModelDims

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"
TOY_DIMS = ModelDims(d_id=4, d_text=5, d_hidden=6, d_e=3, d_c=5, d_s=5, d_g=7)


@pytest.fixture
def toy_dir(tmp_path):
    """Writable copy of the bundled 12-user fixture."""
    dst = tmp_path / "toy"
    shutil.copytree(FIXTURES / "toy", dst)
    return dst


def make_store(n_users, n_jobs, pairs, splits=None):
    users = [f"u{i}" for i in range(n_users)]
    jobs = [f"j{k}" for k in range(n_jobs)]
    u = [p[0] for p in pairs]
    j = [p[1] for p in pairs]
    return InteractionStore(users, jobs, u, j, splits)


def tiny_model(seed, n_users=3, n_jobs=4, dims=TOY_DIMS, mode="lgir"):
    """Random model with random text features, for gradient checks."""
    rng = np.random.default_rng(seed)
    m = Model([f"u{i}" for i in range(n_users)], [f"j{k}" for k in range(n_jobs)], dims, rng)
    m.user_text = rng.normal(size=(n_users, dims.d_text))
    m.job_text = rng.normal(size=(n_jobs, dims.d_text))
    for name in m.params:
        if name.endswith("bias"):
            m.params[name] += rng.normal(0.0, 0.5, size=m.params[name].shape)
    m.mode = mode
    return m


def random_store(rng, n_users, n_jobs, density=0.4, seed=0):
    pairs = [(u, j) for u in range(n_users) for j in range(n_jobs) if rng.uniform() < density]
    for u in range(n_users):
        if not any(p[0] == u for p in pairs):
            pairs.append((u, int(rng.integers(n_jobs))))
    return split_equally(make_store(n_users, n_jobs, pairs), seed)


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    """Print and remember one acceptance verdict line."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append((number, line))
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
