"""Command-line entry point: synth, prepare, embed, train, evaluate, sweep.

Settings resolve in layers: built-in defaults, then the run directory's
``config.txt`` (evaluate only), then ``--config FILE``, then ``--set`` pairs,
then explicit flags. Every command writes the resolved settings next to its
outputs.

A dataset directory doubles as the workspace: ``splits.jsonl`` is written on
first use, and the resume and embedding caches live under ``cache/``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .corpus import load_dataset, sample_eval_candidates, split_equally, write_splits
from .errors import ConfigError, DataError, ExternalServiceError, MissingFileError
from .evaluation import evaluate, fewshot_report, kappa_sweep
from .model import MODES, ModelDims, load_model, save_checkpoint
from .pipeline import MODE_STRATEGY, build_prompts, generate_resumes
from .recommender import TrainConfig, TrainData, train
from .resume_gen import DEFAULT_BUDGET, SRC, IRC, LlmClientConfig, ResumeCache, make_client
from .seeding import derive_seed
from .synth import PROFILES, synth_generate
from .text_embed import EmbedderConfig, EmbeddingCache, embed_texts

log = logging.getLogger("jobrec")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SERVICE = 0, 2, 3, 4
CONFIG_NAME = "config.txt"
CHECKPOINT_NAME = "model.ckpt"
TRAIN_REPORT_NAME = "train_report.json"
METRICS_NAME = "metrics.json"
SWEEP_NAME = "sweep.csv"
RESUME_CACHE = Path("cache") / "resumes.gen.jsonl"
EMBED_CACHE = Path("cache") / "embeddings.emb"


@dataclass
class RunConfig:
    # paths
    data: Optional[str] = None
    out: Optional[str] = None
    checkpoint: Optional[str] = None
    report: Optional[str] = None
    # synthetic data
    users: int = 400
    jobs: int = 300
    profile: str = "longtail"
    # resume completion
    strategy: Optional[str] = None
    llm: str = "mock"
    endpoint: Optional[str] = None
    llm_model_id: Optional[str] = None
    max_retries: int = 3
    max_concurrency: int = 4
    timeout: float = 60.0
    prompt_budget: int = DEFAULT_BUDGET
    # text embedding
    embedder: str = "hash"
    embed_endpoint: Optional[str] = None
    dim: int = 768
    embed_seed: int = 0
    # training
    mode: str = "lgir"
    seed: int = 0
    lr: float = 5e-5
    gan_lr: Optional[float] = None
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
    generator_pool: str = "low"
    classifier_holdout: float = 0.0
    weight_decay: float = 0.0
    dims: str = "full"
    # evaluation
    negatives: int = 20
    eval_k: int = 5
    groups: int = 0
    kappa1_grid: Tuple[int, ...] = (10, 20, 30, 40)
    kappa2_grid: Tuple[int, ...] = (1, 3, 5, 7)

    def train_config(self) -> TrainConfig:
        dims = ModelDims.small(self.dim) if self.dims == "small" else ModelDims(d_text=self.dim)
        return TrainConfig(mode=self.mode, lr=self.lr, gan_lr=self.gan_lr, batch=self.batch, lam=self.lam,
                           kappa1=self.kappa1, kappa2=self.kappa2, k_C=self.k_C, k_D=self.k_D, k_G=self.k_G,
                           k_rec=self.k_rec, patience=self.patience, max_epochs=self.max_epochs, seed=self.seed,
                           generator_pool=self.generator_pool, classifier_holdout=self.classifier_holdout,
                           weight_decay=self.weight_decay, eval_k=self.eval_k, dims=dims)

    def llm_config(self) -> LlmClientConfig:
        return LlmClientConfig(kind=self.llm, endpoint=self.endpoint, timeout=self.timeout,
                               max_retries=self.max_retries, max_concurrency=self.max_concurrency,
                               truncation_limit=self.prompt_budget, model_id=self.llm_model_id)

    def embedder_config(self) -> EmbedderConfig:
        return EmbedderConfig(kind=self.embedder, d=self.dim, endpoint=self.embed_endpoint,
                              seed=self.embed_seed, timeout=self.timeout)

    def validate(self, command: str) -> List[str]:
        problems = []
        if command != "synth":
            problems += self.train_config().validate()
            problems += self.llm_config().validate()
            problems += self.embedder_config().validate()
            if self.dims not in ("full", "small"):
                problems.append(f"dims must be 'full' or 'small', got {self.dims!r}")
            if self.negatives <= 0:
                problems.append("negatives must be positive")
            if self.groups < 0:
                problems.append("groups must be >= 0")
        if command == "synth":
            if not self.out:
                problems.append("synth needs an output directory (--out)")
            if self.profile not in PROFILES:
                problems.append(f"profile must be one of {PROFILES}, got {self.profile!r}")
            if self.users <= 0 or self.jobs <= 0:
                problems.append("users and jobs must be positive")
        else:
            if not self.data:
                problems.append(f"{command} needs a dataset directory (--data)")
            elif not Path(self.data).is_dir():
                problems.append(f"dataset directory {self.data} does not exist")
        if command == "prepare" and self.strategy not in (SRC, IRC):
            problems.append(f"prepare needs --strategy {SRC} or {IRC}, got {self.strategy!r}")
        if command in ("train", "sweep") and not self.out:
            problems.append(f"{command} needs an output directory (--out)")
        if command == "evaluate" and not (self.out or self.checkpoint):
            problems.append("evaluate needs --out (a training run directory) or --checkpoint")
        if command == "sweep":
            for k1 in self.kappa1_grid:
                for k2 in self.kappa2_grid:
                    if k2 >= k1:
                        problems.append(f"sweep cell kappa1={k1}, kappa2={k2} violates kappa2 < kappa1")
        return problems


# --- key-value config files -----------------------------------------------

def _parse_optional(parse):
    def inner(text):
        return None if text.lower() in ("", "none", "null") else parse(text)
    return inner


def _parse_int_tuple(text):
    return tuple(int(p) for p in text.replace(" ", "").split(",") if p)


_PARSERS = {
    "int": int,
    "float": float,
    "str": str,
    "Optional[int]": _parse_optional(int),
    "Optional[float]": _parse_optional(float),
    "Optional[str]": _parse_optional(str),
    "Tuple[int, ...]": _parse_int_tuple,
}
FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def parse_pairs(pairs: Sequence[Tuple[str, str, str]]) -> Tuple[Dict[str, object], List[str]]:
    """Convert (key, raw value, origin) triples; returns values and problems."""
    values, problems = {}, []
    for key, raw, origin in pairs:
        key = key.strip().replace("-", "_")
        if key not in FIELD_TYPES:
            problems.append(f"{origin}: unknown setting {key!r}")
            continue
        try:
            values[key] = _PARSERS[FIELD_TYPES[key]](raw.strip())
        except ValueError:
            problems.append(f"{origin}: cannot parse {key} = {raw.strip()!r} as {FIELD_TYPES[key]}")
    return values, problems


def read_config_file(path) -> Tuple[Dict[str, object], List[str]]:
    path = Path(path)
    if not path.is_file():
        return {}, [f"config file {path} does not exist"]
    pairs, problems = [], []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{path}:{n}: expected 'key = value'")
            continue
        key, raw = line.split("=", 1)
        pairs.append((key, raw, f"{path}:{n}"))
    values, more = parse_pairs(pairs)
    return values, problems + more


def render_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in asdict(cfg).items())


# --- file helpers ---------------------------------------------------------

def atomic_write(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        data = data.encode("utf-8")
    tmp.write_bytes(data)
    tmp.replace(path)


def write_config(cfg: RunConfig, directory, name: str = CONFIG_NAME) -> None:
    atomic_write(Path(directory) / name, render_config(cfg))


def load_split_dataset(cfg: RunConfig):
    """Load the dataset, creating and persisting the equal splits on first use."""
    data = Path(cfg.data)
    users, jobs, store = load_dataset(data)
    if not (data / "splits.jsonl").exists():
        store = split_equally(store, derive_seed(cfg.seed, "split"))
        tmp = data / "splits.jsonl.tmp"
        write_splits(store, tmp)
        tmp.replace(data / "splits.jsonl")
    return users, jobs, store


def generated_texts(cfg: RunConfig, strategy: str, users, jobs, store) -> Dict[str, str]:
    """Cached generations whose prompts match the current data and splits."""
    cache = ResumeCache(Path(cfg.data) / RESUME_CACHE)
    model_id = make_client(cfg.llm_config()).model_id
    out = {}
    for prompt in build_prompts(strategy, users, jobs, store, cfg.prompt_budget):
        hit = cache.get(prompt.source_user, strategy, prompt.prompt_hash, model_id)
        if hit is not None:
            out[prompt.source_user] = hit["text"]
    return out


def text_features(cfg: RunConfig, mode: str, users, jobs, store) -> Tuple[np.ndarray, np.ndarray]:
    strategy = MODE_STRATEGY[mode]
    generated = generated_texts(cfg, strategy, users, jobs, store) if strategy else None
    if strategy and len(generated) < len(users):
        raise ConfigError(f"mode {mode!r} needs generated resumes (strategy {strategy}) for all "
                          f"{len(users)} users, the cache has {len(generated)}; "
                          f"run `jobrec prepare --strategy {strategy}` first")
    if generated is not None:
        user_texts = [generated[u.user_id] for u in users]
    else:
        user_texts = [u.resume_text for u in users]
    ecfg = cfg.embedder_config()
    cache = EmbeddingCache(ecfg.d, Path(cfg.data) / EMBED_CACHE)
    before = len(cache)
    job_text = embed_texts([j.description_text for j in jobs], ecfg, cache)
    user_text = embed_texts(user_texts, ecfg, cache)
    if len(cache) != before:
        cache.save()
    return user_text, job_text


# --- commands -------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> Path:
    out = synth_generate(cfg.out, cfg.users, cfg.jobs, cfg.seed, cfg.profile)
    write_config(cfg, out)
    print(f"wrote synthetic dataset ({cfg.profile}, {cfg.users} users, {cfg.jobs} jobs) to {out}")
    return Path(out)


def cmd_prepare(cfg: RunConfig) -> Path:
    users, jobs, store = load_split_dataset(cfg)
    client = make_client(cfg.llm_config())
    path = Path(cfg.data) / RESUME_CACHE
    cache = ResumeCache(path)
    generate_resumes(cfg.strategy, users, jobs, store, client, cache, cfg.prompt_budget, cfg.max_concurrency)
    print(f"{cfg.strategy}: {len(users)} resumes, {client.calls} new completion call(s); cache {path}")
    return path


def cmd_embed(cfg: RunConfig) -> Path:
    users, jobs, store = load_split_dataset(cfg)
    text_features(cfg, cfg.mode, users, jobs, store)
    path = Path(cfg.data) / EMBED_CACHE
    print(f"embedded {len(users)} user and {len(jobs)} job texts for mode {cfg.mode}; cache {path}")
    return path


def _eval_sets(cfg: RunConfig, store, split: str):
    return sample_eval_candidates(store, split, cfg.negatives, derive_seed(cfg.seed, f"eval-{split}"))


def cmd_train(cfg: RunConfig) -> Path:
    users, jobs, store = load_split_dataset(cfg)
    user_text, job_text = text_features(cfg, cfg.mode, users, jobs, store)
    data = TrainData(store, user_text, job_text, _eval_sets(cfg, store, "valid"))

    def progress(entry):
        log.info("epoch %d %s", entry["epoch"], json.dumps(entry.get("valid", {}), sort_keys=True))

    model, report = train(data, cfg.train_config(), on_epoch=progress)
    out = Path(cfg.out)
    ckpt = Path(cfg.checkpoint) if cfg.checkpoint else out / CHECKPOINT_NAME
    save_checkpoint(model, ckpt, cfg.mode, cfg.seed, extra={"embedder": cfg.embedder_config().embedder_id})
    atomic_write(out / TRAIN_REPORT_NAME, json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n")
    write_config(cfg, out)
    print(f"trained {cfg.mode}: best epoch {report.best_epoch}, {report.stopping_reason}; wrote {ckpt}")
    return ckpt


def cmd_evaluate(cfg: RunConfig) -> Path:
    users, jobs, store = load_split_dataset(cfg)
    ckpt = Path(cfg.checkpoint) if cfg.checkpoint else Path(cfg.out) / CHECKPOINT_NAME
    if not ckpt.is_file():
        raise MissingFileError(f"missing checkpoint: {ckpt}")
    try:
        model, header = load_model(ckpt, store.user_ids, store.job_ids)
    except ValueError as exc:
        raise DataError(f"{ckpt}: {exc}") from None
    model.user_text, model.job_text = text_features(cfg, header["mode"], users, jobs, store)
    sets = _eval_sets(cfg, store, "test")
    if cfg.groups:
        rep = fewshot_report(model, store, sets, cfg.eval_k, cfg.groups)
    else:
        rep = evaluate(model, sets, cfg.eval_k, store.job_ids)
    out = Path(cfg.report) if cfg.report else (Path(cfg.out) if cfg.out else ckpt.parent) / METRICS_NAME
    text = rep.to_json()
    atomic_write(out, text + "\n")
    write_config(cfg, out.parent, f"{out.stem}.config.txt")
    print(text)
    return out


def cmd_sweep(cfg: RunConfig) -> Path:
    users, jobs, store = load_split_dataset(cfg)
    user_text, job_text = text_features(cfg, cfg.mode, users, jobs, store)
    data = TrainData(store, user_text, job_text, _eval_sets(cfg, store, "valid"))
    result = kappa_sweep(data, _eval_sets(cfg, store, "test"), cfg.kappa1_grid, cfg.kappa2_grid,
                         cfg.train_config(), cfg.eval_k)
    out = Path(cfg.out) / SWEEP_NAME
    atomic_write(out, result.to_csv())
    write_config(cfg, cfg.out)
    best = result.best()
    if best is not None:
        print(f"best cell kappa1={best.kappa1} kappa2={best.kappa2} map@{cfg.eval_k}={best.report.map:.4f}")
    print(f"wrote {out}")
    return out


COMMANDS = {"synth": cmd_synth, "prepare": cmd_prepare, "embed": cmd_embed, "train": cmd_train,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep}

# flag -> RunConfig field
FLAGS = {
    "--data": ("data", str), "--out": ("out", str), "--mode": ("mode", str),
    "--strategy": ("strategy", str.upper), "--llm": ("llm", str), "--endpoint": ("endpoint", str),
    "--embedder": ("embedder", str), "--embed-endpoint": ("embed_endpoint", str), "--dim": ("dim", int),
    "--kappa1": ("kappa1", int), "--kappa2": ("kappa2", int), "--seed": ("seed", int),
    "--negatives": ("negatives", int), "--groups": ("groups", int), "--checkpoint": ("checkpoint", str),
    "--report": ("report", str), "--users": ("users", int), "--jobs": ("jobs", int),
    "--profile": ("profile", str), "--max-epochs": ("max_epochs", int), "--lr": ("lr", float),
    "--dims": ("dims", str),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any setting")
    common.add_argument("-v", "--verbose", action="store_true")
    for flag, (dest, typ) in FLAGS.items():
        choices = {"mode": MODES, "strategy": (SRC, IRC), "llm": ("mock", "http"),
                   "embedder": ("hash", "http"), "profile": PROFILES, "dims": ("full", "small")}.get(dest)
        common.add_argument(flag, dest=dest, type=typ, choices=choices)
    parser = argparse.ArgumentParser(prog="jobrec", description="LLM-completed resumes for job recommendation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__ or name)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Layer defaults, run-directory config, config file, --set and flags."""
    ns = vars(args)
    values: Dict[str, object] = {}
    problems: List[str] = []
    if args.command == "evaluate":
        run_dir = Path(ns["checkpoint"]).parent if "checkpoint" in ns else Path(ns.get("out", "."))
        if (run_dir / CONFIG_NAME).is_file():
            v, p = read_config_file(run_dir / CONFIG_NAME)
            # outputs of the training run are not inputs here
            for key in ("out", "checkpoint", "report"):
                v.pop(key, None)
            values.update(v)
            problems += p
    if "config" in ns:
        v, p = read_config_file(ns["config"])
        values.update(v)
        problems += p
    pairs = []
    for item in ns.get("set", []) or []:
        if "=" not in item:
            problems.append(f"--set {item!r}: expected KEY=VALUE")
            continue
        key, raw = item.split("=", 1)
        pairs.append((key, raw, f"--set {item}"))
    v, p = parse_pairs(pairs)
    values.update(v)
    problems += p
    for dest, _ in FLAGS.values():
        if dest in ns:
            values[dest] = ns[dest]
    if isinstance(values.get("strategy"), str):
        values["strategy"] = values["strategy"].upper()
    cfg = RunConfig(**values)
    problems += cfg.validate(args.command)
    if problems:
        raise ConfigError(problems)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ExternalServiceError as exc:
        print(f"external service error: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
