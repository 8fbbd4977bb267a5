"""Fixed-width document vectors for resumes and job descriptions.

Two backends: an HTTP service returning one pooled vector per text, and a
signed feature-hashing bag of words that needs no model files. Vectors are
frozen features; nothing downstream back-propagates into them.
"""

from __future__ import annotations

import hashlib
import re
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, EmbedContractError, EmbedError

MAGIC = b"EMB1"
_TOKEN = re.compile(r"[0-9a-z]+")

# English function words; they dominate raw counts and carry no topic
ENGLISH_STOPWORDS = frozenset("""
a an the and or but if then of to in on at by for with from into over under as is are was
were be been being it its this that these those we you they he she i our your their his her
my me us them who whom which what when where why how all any both each few more most other
some such no nor not only own same so than too very can will just should now also do does did
having have has had about above after again against below between during before through up
down out off further once here there while until within without per via etc
""".split())


@dataclass
class EmbedderConfig:
    kind: str = "hash"
    d: int = 768
    endpoint: Optional[str] = None
    normalize: bool = True
    seed: int = 0
    timeout: float = 60.0
    stopwords: bool = True  # hash backend only

    def validate(self) -> List[str]:
        problems = []
        if self.kind not in ("http", "hash"):
            problems.append(f"embedder kind must be 'http' or 'hash', got {self.kind!r}")
        if self.d <= 0:
            problems.append("embedding dimension d must be positive")
        if self.kind == "http" and not self.endpoint:
            problems.append("http embedder requires an endpoint")
        return problems

    @property
    def embedder_id(self) -> str:
        if self.kind == "hash":
            return (f"hash-d{self.d}-s{self.seed}" + ("" if self.stopwords else "-allwords")
                    + ("" if self.normalize else "-raw"))
        return f"http:{self.endpoint}-d{self.d}" + ("" if self.normalize else "-raw")


@dataclass
class TextEmbedding:
    key: str
    vector: np.ndarray
    embedder_id: str


def tokenize(text: str, stopwords: bool = False) -> List[str]:
    """Lowercase alphanumeric tokens; ``stopwords=True`` drops function words."""
    toks = _TOKEN.findall(text.lower())
    if stopwords:
        toks = [t for t in toks if t not in ENGLISH_STOPWORDS]
    return toks


def _bucket(token: str, d: int, seed: int):
    h = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little")).digest()
    v = int.from_bytes(h, "little")
    return (v >> 1) % d, 1.0 if v & 1 else -1.0


def hash_embed(text: str, d: int, seed: int = 0, stopwords: bool = True) -> np.ndarray:
    """Signed feature hashing of lowercase alphanumeric tokens, L2-normalised.

    With ``stopwords`` set, English function words are skipped so similarity
    reflects content words.
    """
    if d <= 0:
        raise ValueError("d must be positive")
    v = np.zeros(d)
    for tok in tokenize(text, stopwords):
        idx, sign = _bucket(tok, d, seed)
        v[idx] += sign
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cache_key(text: str, embedder_id: str) -> str:
    return hashlib.sha256(f"{embedder_id}\0{text}".encode("utf-8")).hexdigest()[:32]


class EmbeddingCache:
    """In-memory map persisted in the ``EMB1`` binary layout.

    Stored vectors are float32; ``save`` rewrites the whole file atomically.
    """

    def __init__(self, d: int, path=None):
        self.d = d
        self.path = Path(path) if path is not None else None
        self._vectors: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def __len__(self):
        return len(self._vectors)

    def __contains__(self, key):
        return key in self._vectors

    def get(self, key: str) -> Optional[np.ndarray]:
        v = self._vectors.get(key)
        return None if v is None else v.astype(np.float64)

    def put(self, key: str, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (self.d,):
            raise EmbedContractError(f"vector length {vector.shape} != cache width {self.d}")
        with self._lock:
            self._vectors[key] = vector

    def to_bytes(self) -> bytes:
        parts = [MAGIC, struct.pack("<IQ", self.d, len(self._vectors))]
        for key, vec in self._vectors.items():
            kb = key.encode("utf-8")
            parts.append(struct.pack("<H", len(kb)))
            parts.append(kb)
            parts.append(vec.astype("<f4").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, path=None) -> "EmbeddingCache":
        if data[:4] != MAGIC:
            raise EmbedContractError("not an EMB1 embedding cache")
        d, count = struct.unpack_from("<IQ", data, 4)
        cache = cls(d)
        cache.path = Path(path) if path is not None else None
        off = 16
        for _ in range(count):
            (klen,) = struct.unpack_from("<H", data, off)
            off += 2
            key = data[off:off + klen].decode("utf-8")
            off += klen
            cache._vectors[key] = np.frombuffer(data, dtype="<f4", count=d, offset=off).astype(np.float32)
            off += 4 * d
        return cache

    def _load(self):
        loaded = self.from_bytes(self.path.read_bytes())
        if loaded.d != self.d:
            raise EmbedContractError(f"cache {self.path} has width {loaded.d}, expected {self.d}")
        self._vectors = loaded._vectors

    def save(self, path=None) -> None:
        path = Path(path) if path is not None else self.path
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(self.to_bytes())
        tmp.replace(path)


class HttpEmbedder:
    """POST ``{"texts": [...]}`` -> ``{"vectors": [[...], ...]}``."""

    def __init__(self, config: EmbedderConfig):
        import httpx

        self._httpx = httpx
        self.config = config
        self.calls = 0

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        self.calls += 1
        try:
            resp = self._httpx.post(self.config.endpoint, json={"texts": list(texts)},
                                    timeout=self.config.timeout)
        except self._httpx.HTTPError as exc:
            raise EmbedError(f"embedding service unreachable: {exc}") from None
        if not 200 <= resp.status_code < 300:
            raise EmbedError(f"embedding service returned HTTP {resp.status_code}")
        try:
            vectors = resp.json()["vectors"]
        except (ValueError, KeyError, TypeError):
            raise EmbedContractError("embedding response lacks 'vectors'") from None
        if len(vectors) != len(texts):
            raise EmbedContractError(f"expected {len(texts)} vectors, got {len(vectors)}")
        out = np.asarray(vectors, dtype=np.float64)
        if out.ndim != 2 or out.shape[1] != self.config.d:
            raise EmbedContractError(
                f"service returned vectors of width {out.shape[-1] if out.ndim else '?'}, "
                f"expected d={self.config.d}")
        return out


def _finish(vec: np.ndarray, normalize: bool) -> np.ndarray:
    # the value returned is the one that survives a float32 cache round trip
    vec = np.asarray(vec, dtype=np.float32).astype(np.float64)
    if normalize:
        n = np.linalg.norm(vec)
        if n > 0:
            vec = vec / n
    return vec


def _raw_vectors(texts: Sequence[str], config: EmbedderConfig, service) -> np.ndarray:
    if config.kind == "hash":
        return np.stack([hash_embed(t, config.d, config.seed, config.stopwords) for t in texts])
    if service is None:
        service = HttpEmbedder(config)
    return service.embed_batch(texts)


def embed_texts(texts: Sequence[str], config: EmbedderConfig, cache: Optional[EmbeddingCache] = None,
                service=None, batch_size: int = 64) -> np.ndarray:
    """Cache-first embedding of many texts; returns an (n, d) array."""
    problems = config.validate()
    if problems:
        raise ConfigError(problems)
    eid = config.embedder_id
    keys = [cache_key(t, eid) for t in texts]
    out = np.zeros((len(texts), config.d))
    missing: Dict[str, List[int]] = {}
    for i, k in enumerate(keys):
        hit = cache.get(k) if cache is not None else None
        if hit is not None:
            out[i] = _finish(hit, config.normalize)
        else:
            missing.setdefault(k, []).append(i)
    todo = list(missing)
    for start in range(0, len(todo), batch_size):
        chunk = todo[start:start + batch_size]
        raw = _raw_vectors([texts[missing[k][0]] for k in chunk], config, service)
        for k, vec in zip(chunk, raw):
            if config.normalize:
                n = np.linalg.norm(vec)
                vec = vec / n if n > 0 else vec
            if cache is not None:
                cache.put(k, vec)
            for i in missing[k]:
                out[i] = _finish(vec, config.normalize)
    return out


def embed_text(text: str, config: EmbedderConfig, cache: Optional[EmbeddingCache] = None,
               service=None) -> TextEmbedding:
    vec = embed_texts([text], config, cache, service)[0]
    return TextEmbedding(cache_key(text, config.embedder_id), vec, config.embedder_id)
