"""ID embedding tables and the two fusion towers.

A user's hybrid representation is ``tower_user([P_i; text_vec])`` and a job's
is ``tower_job([Q_k; text_vec])``; both towers end in the shared latent
width ``d_e``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from .numerics import LinearLayer, Mlp2Cache, ShapeError, mlp2_backward, mlp2_forward


class IdEmbeddingTable:
    def __init__(self, ids: Sequence[str], matrix: np.ndarray):
        if matrix.shape[0] != len(ids):
            raise ShapeError(f"{matrix.shape[0]} rows for {len(ids)} ids")
        self.ids = list(ids)
        self.index = {e: i for i, e in enumerate(self.ids)}
        self.matrix = matrix

    @classmethod
    def random(cls, ids, dim, rng: np.random.Generator, scale=0.1):
        return cls(ids, rng.normal(0.0, scale, size=(len(ids), dim)))

    def row(self, entity_id: str) -> int:
        try:
            return self.index[entity_id]
        except KeyError:
            raise KeyError(f"unknown id {entity_id!r}") from None

    def lookup(self, entity_id: str) -> np.ndarray:
        return self.matrix[self.row(entity_id)]


@dataclass
class FusionTower:
    l1: LinearLayer  # (d_hidden, d_id + d_text)
    l2: LinearLayer  # (d_e, d_hidden)

    @classmethod
    def random(cls, d_in, d_hidden, d_out, rng):
        return cls(LinearLayer.glorot(d_in, d_hidden, rng), LinearLayer.glorot(d_hidden, d_out, rng))

    @property
    def d_out(self) -> int:
        return self.l2.out_dim

    def forward(self, id_vec: np.ndarray, text_vec: np.ndarray) -> Tuple[np.ndarray, Mlp2Cache]:
        if id_vec.shape[-1] + text_vec.shape[-1] != self.l1.in_dim:
            raise ShapeError(
                f"id ({id_vec.shape[-1]}) + text ({text_vec.shape[-1]}) != tower input {self.l1.in_dim}")
        return mlp2_forward(self.l1, self.l2, np.concatenate([id_vec, text_vec], axis=-1))

    def backward(self, cache: Mlp2Cache, grad_out: np.ndarray, d_id: int
                 ) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
        """Returns (layer grads, grad w.r.t. the ID-embedding part of the input)."""
        g, gx = mlp2_backward(cache, grad_out)
        grads = {"l1.weight": g.l1_weight, "l1.bias": g.l1_bias,
                 "l2.weight": g.l2_weight, "l2.bias": g.l2_bias}
        return grads, gx[..., :d_id]


def fuse_user(p_row: np.ndarray, text_vec: np.ndarray, tower: FusionTower) -> np.ndarray:
    return tower.forward(np.asarray(p_row, dtype=np.float64), np.asarray(text_vec, dtype=np.float64))[0]


def fuse_job(q_row: np.ndarray, text_vec: np.ndarray, tower: FusionTower) -> np.ndarray:
    return tower.forward(np.asarray(q_row, dtype=np.float64), np.asarray(text_vec, dtype=np.float64))[0]
