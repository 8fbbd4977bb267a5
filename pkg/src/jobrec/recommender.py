"""Pairwise (BPR) objective and the four-phase training loop.

Each epoch runs, in order: classifier, pool refresh, discriminator,
generator, recommendation. The first four only run in ``lgir`` mode. After
every epoch the model is scored on the validation candidate sets and the
best parameters by ndcg@k are kept.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import wasserstein_distance

from .alignment import (QualityPools, classifier_loss, classify, discriminate, discriminator_loss,
                        generate, generator_loss, refresh_pools)
from .corpus import TRAIN, EvalCandidateSet, InteractionStore, sample_bpr_indices, shot_labels
from .errors import ConfigError
from .evaluation import CandidateArrays, evaluate, job_sort_order, positive_ranks, report_from_ranks
from .model import MODES, Model, ModelDims, features, route
from .numerics import AdamW, mlp2_backward, mlp2_forward, sigmoid
from .seeding import derive_seed

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    mode: str = "lgir"
    lr: float = 5e-5
    gan_lr: Optional[float] = None  # classifier/D/G phases; defaults to lr
    batch: int = 1024
    lam: float = 1e-4
    kappa1: int = 30
    kappa2: int = 5
    k_C: Optional[int] = None
    k_D: Optional[int] = None
    k_G: Optional[int] = None
    k_rec: Optional[int] = None
    patience: int = 50
    max_epochs: int = 1000
    seed: int = 0
    generator_pool: str = "low"  # which pool G trains on: "low" or "high"
    classifier_holdout: float = 0.0
    weight_decay: float = 0.0
    eval_k: int = 5
    dims: ModelDims = field(default_factory=ModelDims)

    def validate(self) -> List[str]:
        problems = []
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("lr", "batch", "kappa1", "kappa2", "patience", "max_epochs", "eval_k"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        if self.gan_lr is not None and self.gan_lr <= 0:
            problems.append("gan_lr must be positive")
        if self.lam < 0:
            problems.append("lam must be >= 0")
        if self.kappa2 >= self.kappa1:
            problems.append(f"kappa2 ({self.kappa2}) must be smaller than kappa1 ({self.kappa1})")
        for name in ("k_C", "k_D", "k_G", "k_rec"):
            v = getattr(self, name)
            if v is not None and v < 0:
                problems.append(f"{name} must be >= 0")
        if self.generator_pool not in ("low", "high"):
            problems.append("generator_pool must be 'low' or 'high'")
        if not 0.0 <= self.classifier_holdout < 1.0:
            problems.append("classifier_holdout must be in [0, 1)")
        return problems


@dataclass
class TrainData:
    store: InteractionStore  # already split
    user_text: np.ndarray  # (n_users, d_text) frozen text vectors for the chosen mode
    job_text: np.ndarray
    valid_sets: Sequence[EvalCandidateSet] = ()


@dataclass
class TrainReport:
    mode: str
    seed: int
    epochs: List[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_valid: Optional[dict] = None
    stopping_reason: str = ""
    gan: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def l2_norm_sq(params: Dict[str, np.ndarray], names: Sequence[str]) -> float:
    return float(sum(np.sum(params[n] ** 2) for n in names))


def on_path_names(model: Model, mode: str) -> List[str]:
    names = model.encoder_names() + ["W_p"]
    if mode == "lgir":
        names += ["G.W1", "G.W2"]
    return names


def bpr_loss(model: Model, users: np.ndarray, pos: np.ndarray, neg: np.ndarray, lam: float,
             mode: str) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean ``-log sigmoid(s_pos - s_neg)`` plus ``lam * ||theta||^2``.

    Gradients cover every on-path tensor: ID tables, both towers, the scoring
    head, and G when users are routed through it. The routing decision is a
    hard threshold and carries no gradient, so C and D never appear.
    """
    users, pos, neg = (np.asarray(a, dtype=np.int64) for a in (users, pos, neg))
    B = len(users)
    if B == 0:
        raise ValueError("empty BPR batch")
    d_id = model.dims.d_id
    P, Q = model.P.matrix, model.Q.matrix
    xu, cu = model.user_tower.forward(P[users], model.user_text[users])
    jobs = np.concatenate([pos, neg])
    xj, cj = model.job_tower.forward(Q[jobs], model.job_text[jobs])
    xp, xn = xj[:B], xj[B:]

    z = xu
    routed = np.zeros(B, dtype=bool)
    cache_g = None
    if mode == "lgir":
        routed = classify(model.C, xu) < 0.5
        if routed.any():
            gz, cache_g = mlp2_forward(model.G.l1, model.G.l2, xu[routed])
            z = xu.copy()
            z[routed] = gz

    W_p = model.W_p
    fp, fn = features(z, xp), features(z, xn)
    diff = fp @ W_p - fn @ W_p
    data_loss = float(np.mean(np.logaddexp(0.0, -diff)))
    g_diff = -sigmoid(-diff) / B

    names = on_path_names(model, mode)
    reg = lam * l2_norm_sq(model.params, names)
    grads = {n: 2.0 * lam * model.params[n] for n in names}

    grads["W_p"] += g_diff @ (fp - fn)
    d_e = model.dims.d_e
    w1, w2, w3 = W_p[:d_e], W_p[d_e:2 * d_e], W_p[2 * d_e:]
    gz = g_diff[:, None] * (w3 * (xp - xn))
    g_xp = g_diff[:, None] * (w1 - w2 + w3 * z)
    g_xj = np.concatenate([g_xp, -g_xp])

    g_xu = gz
    if cache_g is not None:
        gg, g_in = mlp2_backward(cache_g, gz[routed])
        grads["G.W1"] += gg.l1_weight
        grads["G.W2"] += gg.l2_weight
        g_xu = gz.copy()
        g_xu[routed] = g_in

    tg, g_p_rows = model.user_tower.backward(cu, g_xu, d_id)
    for k, v in tg.items():
        grads[f"user_tower.{k}"] += v
    np.add.at(grads["P"], users, g_p_rows)
    tg, g_q_rows = model.job_tower.backward(cj, g_xj, d_id)
    for k, v in tg.items():
        grads[f"job_tower.{k}"] += v
    np.add.at(grads["Q"], jobs, g_q_rows)
    return data_loss + reg, grads


def _prefixed(prefix, grads):
    return {f"{prefix}.{k}": v for k, v in grads.items()}


def _steps(override: Optional[int], n: int, batch: int) -> int:
    return override if override is not None else max(1, math.ceil(n / batch)) if n else 0


def _d_stats(model: Model, X: np.ndarray, pools: QualityPools, G=None) -> dict:
    G = model.G if G is None else G
    d_hq = discriminate(model.D, X[pools.high])
    d_lq = discriminate(model.D, generate(G, X[pools.low]))
    return {"d_hq_mean": float(np.mean(d_hq)), "d_fake_mean": float(np.mean(d_lq)),
            "w1": float(wasserstein_distance(d_hq, d_lq))}


class _Validator:
    def __init__(self, model: Model, sets: Sequence[EvalCandidateSet], job_ids, k: int):
        self.k = k
        self.arrays = CandidateArrays.build(sets, model.user_index, model.job_index) if sets else None
        self.order = job_sort_order(job_ids)

    def __call__(self, model: Model):
        if self.arrays is None:
            return None
        scores = model.score_pairs(self.arrays.user_rows, self.arrays.job_rows)
        ranks = positive_ranks(scores, self.arrays.job_rows, self.arrays.valid, self.order)
        return report_from_ranks(ranks, self.k)


def train(data: TrainData, config: TrainConfig, on_epoch=None) -> Tuple[Model, TrainReport]:
    problems = config.validate()
    store = data.store
    if not len(store.pairs(TRAIN)[0]):
        problems.append("train split is empty")
    if data.user_text.shape != (store.n_users, config.dims.d_text):
        problems.append(f"user text matrix has shape {data.user_text.shape}, expected "
                        f"{(store.n_users, config.dims.d_text)}")
    if data.job_text.shape != (store.n_jobs, config.dims.d_text):
        problems.append(f"job text matrix has shape {data.job_text.shape}, expected "
                        f"{(store.n_jobs, config.dims.d_text)}")
    if problems:
        raise ConfigError(problems)

    mode = config.mode
    lgir = mode == "lgir"
    model = Model(store.user_ids, store.job_ids, config.dims,
                  np.random.default_rng(derive_seed(config.seed, "init")))
    model.mode = mode
    model.user_text = np.asarray(data.user_text, dtype=np.float64)
    model.job_text = np.asarray(data.job_text, dtype=np.float64)
    # separate streams so every mode sees the same BPR batches for a seed
    rng = np.random.default_rng(derive_seed(config.seed, "sampling"))
    gan_rng = np.random.default_rng(derive_seed(config.seed, "adversarial"))
    gan_lr = config.gan_lr or config.lr
    rec_names = on_path_names(model, mode)
    opt_rec = AdamW(lr=config.lr, weight_decay=config.weight_decay)
    opt_c, opt_d, opt_g = (AdamW(lr=gan_lr, weight_decay=config.weight_decay) for _ in range(3))

    labels = shot_labels(store, config.kappa1, config.kappa2)
    tc_users, tc_y = labels.labeled()
    holdout = np.zeros(len(tc_users), dtype=bool)
    if lgir and config.classifier_holdout > 0 and len(tc_users):
        hrng = np.random.default_rng(derive_seed(config.seed, "holdout"))
        n_hold = int(round(config.classifier_holdout * len(tc_users)))
        holdout[hrng.permutation(len(tc_users))[:n_hold]] = True
    fit_users, fit_y = tc_users[~holdout], tc_y[~holdout]
    hold_users, hold_y = tc_users[holdout], tc_y[holdout]
    n_train = len(store.pairs(TRAIN)[0])
    k_rec = _steps(config.k_rec, n_train, config.batch)
    k_c = _steps(config.k_C, len(fit_users), config.batch)

    validate = _Validator(model, data.valid_sets, store.job_ids, config.eval_k)
    report = TrainReport(mode, config.seed, config={**asdict(config)})
    report.config["kappa_labels"] = {"many_shot": int(len(labels.many_shot)),
                                     "few_shot": int(len(labels.few_shot)),
                                     "unlabeled": int(len(labels.unlabeled))}
    best_score, best_snap = -np.inf, None
    g_start = None

    for epoch in range(config.max_epochs):
        entry: dict = {"epoch": epoch, "phases": {}}
        phases = entry["phases"]
        if lgir:
            X = model.user_reps()
            if k_c and len(fit_users):
                losses = []
                perm = gan_rng.permutation(len(fit_users))
                for s in range(k_c):
                    idx = perm[(s * config.batch) % len(perm):][:config.batch]
                    loss, g = classifier_loss(model.C, X[fit_users[idx]], fit_y[idx])
                    opt_c.step(model.params, _prefixed("C", g))
                    losses.append(loss)
                phases["classifier"] = {"loss": float(np.mean(losses)), "steps": k_c}
            else:
                phases["classifier"] = {"skipped": "no labelled users"}
            if len(hold_users):
                acc = np.mean((classify(model.C, X[hold_users]) >= 0.5) == (hold_y == 1))
                phases["classifier"]["holdout_accuracy"] = float(acc)

            pools = refresh_pools(model.C, X, labels.many_shot, labels.few_shot)
            entry["pools"] = {"high": int(len(pools.high)), "low": int(len(pools.low))}
            gen_pool = pools.low if config.generator_pool == "low" else pools.high
            if len(pools.high) and len(pools.low):
                k_d = _steps(config.k_D, len(pools.low), config.batch)
                k_g = _steps(config.k_G, len(gen_pool), config.batch)
                d_objs = []
                for _ in range(k_d):
                    lq = gan_rng.choice(pools.low, size=min(config.batch, len(pools.low)), replace=False)
                    # the two terms are averaged separately, so batch sizes may differ
                    hq = gan_rng.choice(pools.high, size=min(config.batch, len(pools.high)), replace=False)
                    dl = discriminator_loss(model.D, model.G, X[hq], X[lq])
                    opt_d.step(model.params, _prefixed("D", dl.grads))
                    d_objs.append(dl.objective)
                phases["discriminator"] = {"objective": d_objs, "steps": k_d}
                if g_start is None:
                    g_start = {"epoch": epoch, "G": model.snapshot(["G.W1", "G.W2"]),
                               **_d_stats(model, X, pools)}
                g_losses = []
                for _ in range(k_g):
                    b = gan_rng.choice(gen_pool, size=min(config.batch, len(gen_pool)), replace=False)
                    loss, g = generator_loss(model.D, model.G, X[b])
                    opt_g.step(model.params, _prefixed("G", g))
                    g_losses.append(loss)
                phases["generator"] = {"loss": float(np.mean(g_losses)), "steps": k_g}
                entry["gan"] = _d_stats(model, X, pools)
            else:
                reason = "empty high-quality pool" if not len(pools.high) else "empty low-quality pool"
                log.info("epoch %d: adversarial phases skipped (%s)", epoch, reason)
                phases["discriminator"] = {"skipped": reason}
                phases["generator"] = {"skipped": reason}

        rec_losses = []
        for _ in range(k_rec):
            u, p, n = sample_bpr_indices(store, config.batch, rng)
            loss, g = bpr_loss(model, u, p, n, config.lam, mode)
            opt_rec.step(model.params, g)
            rec_losses.append(loss)
        phases["rec"] = {"loss": float(np.mean(rec_losses)) if rec_losses else None, "steps": k_rec}

        val = validate(model)
        if val is not None:
            entry["valid"] = {"map": val.map, "ndcg": val.ndcg, "mrr": val.mrr}
            if val.ndcg > best_score:
                best_score = val.ndcg
                best_snap = model.snapshot()
                report.best_epoch = epoch
                report.best_valid = entry["valid"]
        else:
            report.best_epoch = epoch
            best_snap = None
        report.epochs.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
        if val is not None and epoch - report.best_epoch >= config.patience:
            report.stopping_reason = f"no validation improvement for {config.patience} epochs"
            break
    else:
        report.stopping_reason = f"reached max_epochs={config.max_epochs}"

    if best_snap is not None:
        model.restore(best_snap)
    if lgir:
        report.gan = gan_diagnostics(model, labels, hold_users, hold_y, g_start)
    return model, report


def gan_diagnostics(model: Model, labels, hold_users, hold_y, g_start) -> dict:
    """Alignment summary on the final parameters.

    ``before`` scores the low-quality pool with the generator as it was at the
    first adversarial phase; ``after`` with the final generator. Both use the
    final discriminator and representations, so only G differs.
    """
    X = model.user_reps()
    out: dict = {}
    if len(hold_users):
        out["holdout_accuracy"] = float(np.mean((classify(model.C, X[hold_users]) >= 0.5) == (hold_y == 1)))
    pools = refresh_pools(model.C, X, labels.many_shot, labels.few_shot)
    out["pools"] = {"high": int(len(pools.high)), "low": int(len(pools.low))}
    if g_start is None or not len(pools.high) or not len(pools.low):
        out["skipped"] = "adversarial phases never ran" if g_start is None else "empty pool at end"
        return out
    from .alignment import TwoLayerNet
    from .numerics import LinearLayer

    g0 = TwoLayerNet(LinearLayer(g_start["G"]["G.W1"]), LinearLayer(g_start["G"]["G.W2"]))
    before = _d_stats(model, X, pools, G=g0)
    after = _d_stats(model, X, pools)
    out["start_epoch"] = g_start["epoch"]
    out["start_running"] = {k: g_start[k] for k in ("d_hq_mean", "d_fake_mean", "w1")}
    out["before"] = before
    out["after"] = after
    return out
