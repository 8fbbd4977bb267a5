"""All trainable tensors of the recommender and the binary checkpoint format."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np

from .alignment import TwoLayerNet, classify, generate
from .encoder import FusionTower, IdEmbeddingTable
from .numerics import LinearLayer

CHECKPOINT_FORMAT = "jobrec-checkpoint"
CHECKPOINT_VERSION = 1
MODES = ("base", "src", "irc", "lgir")


@dataclass
class ModelDims:
    d_id: int = 768
    d_text: int = 768
    d_hidden: int = 128  # tower hidden width d_e'
    d_e: int = 64
    d_c: int = 256
    d_s: int = 256
    d_g: int = 256

    @classmethod
    def small(cls, d_text: int = 128):
        """Laptop preset: ID width equals text width, narrower heads."""
        return cls(d_id=d_text, d_text=d_text, d_hidden=64, d_e=32, d_c=64, d_s=64, d_g=64)


def id_digest(ids: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(ids).encode("utf-8")).hexdigest()[:16]


class Model:
    """Parameter container. ``params`` holds every tensor by name; the layer
    objects wrap the same arrays, so in-place optimiser updates are seen by
    both."""

    def __init__(self, user_ids: Sequence[str], job_ids: Sequence[str], dims: ModelDims,
                 rng: np.random.Generator):
        self.dims = dims
        d = dims
        self.P = IdEmbeddingTable.random(user_ids, d.d_id, rng)
        self.Q = IdEmbeddingTable.random(job_ids, d.d_id, rng)
        self.user_tower = FusionTower.random(d.d_id + d.d_text, d.d_hidden, d.d_e, rng)
        self.job_tower = FusionTower.random(d.d_id + d.d_text, d.d_hidden, d.d_e, rng)
        a = np.sqrt(6.0 / (3 * d.d_e + 1))
        self.W_p = rng.uniform(-a, a, size=3 * d.d_e)
        self.C = TwoLayerNet.random(d.d_e, d.d_c, 1, rng)
        self.D = TwoLayerNet.random(d.d_e, d.d_s, 1, rng)
        if d.d_g >= 2 * d.d_e:
            self.G = TwoLayerNet.near_identity(d.d_e, d.d_g, rng)
        else:
            self.G = TwoLayerNet.random(d.d_e, d.d_g, d.d_e, rng)
        self.params: Dict[str, np.ndarray] = {
            "P": self.P.matrix,
            "Q": self.Q.matrix,
            "user_tower.l1.weight": self.user_tower.l1.weight,
            "user_tower.l1.bias": self.user_tower.l1.bias,
            "user_tower.l2.weight": self.user_tower.l2.weight,
            "user_tower.l2.bias": self.user_tower.l2.bias,
            "job_tower.l1.weight": self.job_tower.l1.weight,
            "job_tower.l1.bias": self.job_tower.l1.bias,
            "job_tower.l2.weight": self.job_tower.l2.weight,
            "job_tower.l2.bias": self.job_tower.l2.bias,
            "W_p": self.W_p,
            "C.W1": self.C.l1.weight,
            "C.W2": self.C.l2.weight,
            "D.W1": self.D.l1.weight,
            "D.W2": self.D.l2.weight,
            "G.W1": self.G.l1.weight,
            "G.W2": self.G.l2.weight,
        }
        self.mode = "base"
        # per-row frozen text features; set by the trainer or loader
        self.user_text = np.zeros((len(user_ids), d.d_text))
        self.job_text = np.zeros((len(job_ids), d.d_text))

    @property
    def user_index(self):
        return self.P.index

    @property
    def job_index(self):
        return self.Q.index

    def encoder_names(self):
        return [n for n in self.params if n in ("P", "Q") or "tower" in n]

    def snapshot(self, names=None) -> Dict[str, np.ndarray]:
        names = self.params if names is None else names
        return {n: self.params[n].copy() for n in names}

    def restore(self, snap: Dict[str, np.ndarray]) -> None:
        for n, v in snap.items():
            np.copyto(self.params[n], v)

    # forward passes without gradient bookkeeping
    def user_reps(self, rows=None) -> np.ndarray:
        rows = slice(None) if rows is None else rows
        return self.user_tower.forward(self.P.matrix[rows], self.user_text[rows])[0]

    def job_reps(self, rows=None) -> np.ndarray:
        rows = slice(None) if rows is None else rows
        return self.job_tower.forward(self.Q.matrix[rows], self.job_text[rows])[0]

    def aligned_user_reps(self, rows=None) -> np.ndarray:
        return route(self.C, self.G, self.user_reps(rows), self.mode)[0]

    def score_pairs(self, user_rows: np.ndarray, job_rows: np.ndarray) -> np.ndarray:
        """Scores for ``user_rows[s]`` against each of ``job_rows[s, :]``."""
        return score_matrix(self.aligned_user_reps(), self.job_reps(), self.W_p)[
            np.asarray(user_rows)[:, None], job_rows]


def route(C: TwoLayerNet, G: TwoLayerNet, x: np.ndarray, mode: str = "lgir") -> Tuple[np.ndarray, np.ndarray]:
    """Aligned representation: x where C(x) >= 0.5, else G(x). Only active in
    lgir mode. Returns (z, routed mask)."""
    x = np.asarray(x, dtype=np.float64)
    if mode != "lgir":
        return x, np.zeros(x.shape[:-1], dtype=bool)
    routed = np.asarray(classify(C, x) < 0.5)
    z = x.copy()
    if x.ndim == 1:
        return (generate(G, x) if routed else z), routed
    if routed.any():
        z[routed] = generate(G, x[routed])
    return z, routed


def features(z: np.ndarray, xj: np.ndarray) -> np.ndarray:
    return np.concatenate([z + xj, z - xj, z * xj], axis=-1)


def score(z: np.ndarray, xj: np.ndarray, W_p: np.ndarray) -> np.ndarray:
    z, xj = np.broadcast_arrays(np.asarray(z, dtype=np.float64), np.asarray(xj, dtype=np.float64))
    if W_p.shape[-1] != 3 * z.shape[-1]:
        raise ValueError(f"scoring head length {W_p.shape[-1]} != 3 * {z.shape[-1]}")
    return features(z, xj) @ W_p


def score_matrix(Z: np.ndarray, XJ: np.ndarray, W_p: np.ndarray) -> np.ndarray:
    """All user-job scores at once; the head splits into user, job and
    interaction terms."""
    d = Z.shape[-1]
    w1, w2, w3 = W_p[:d], W_p[d:2 * d], W_p[2 * d:]
    return (Z @ (w1 + w2))[:, None] + (XJ @ (w1 - w2))[None, :] + (Z * w3) @ XJ.T


# --- checkpoint I/O -------------------------------------------------------

def save_checkpoint(model: Model, path, mode: str, seed: int, extra: dict = None) -> None:
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "mode": mode,
        "seed": seed,
        "dims": asdict(model.dims),
        "n_users": len(model.P.ids),
        "n_jobs": len(model.Q.ids),
        "users_digest": id_digest(model.P.ids),
        "jobs_digest": id_digest(model.Q.ids),
    }
    if extra:
        header.update(extra)
    parts = [json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"]
    for name, arr in model.params.items():
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def read_checkpoint(path) -> Tuple[dict, Dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    nl = data.index(b"\n")
    header = json.loads(data[:nl])
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    tensors: Dict[str, np.ndarray] = {}
    off = nl + 1
    while off < len(data):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        tensors[name] = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
    return header, tensors


def load_model(path, user_ids: Sequence[str], job_ids: Sequence[str]) -> Tuple[Model, dict]:
    header, tensors = read_checkpoint(path)
    if header["users_digest"] != id_digest(user_ids) or header["jobs_digest"] != id_digest(job_ids):
        raise ValueError("checkpoint was trained on a different set of users/jobs")
    model = Model(user_ids, job_ids, ModelDims(**header["dims"]), np.random.default_rng(0))
    for name, arr in tensors.items():
        np.copyto(model.params[name], arr.astype(np.float64))
    model.mode = header["mode"]
    return model, header
