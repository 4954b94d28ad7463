"""Pseudo-speaker construction by averaging far-away pool embeddings.

A pseudo-vector for a source embedding is the mean of n_avg vectors drawn
at random (seeded per speaker or per utterance) from the n_far pool
vectors farthest from the source.
"""

import hashlib
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

DISTANCES = ("cosine", "plda_simplified")
LEVELS = ("per_speaker", "per_utterance")


@dataclass
class EmbeddingSet:
    """Named vectors: utterance id -> (speaker id, vector), all of one dimension."""

    entries: dict[str, tuple[str, np.ndarray]]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("embedding set is empty")
        cleaned: dict[str, tuple[str, np.ndarray]] = {}
        dim = None
        for utt, (spk, vec) in self.entries.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.ndim != 1:
                raise ValueError(f"{utt}: vector must be 1-D")
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValueError(f"{utt}: dimension {len(vec)} != {dim}")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"{utt}: non-finite vector")
            cleaned[utt] = (spk, vec)
        self.entries = cleaned

    @property
    def dim(self) -> int:
        return len(next(iter(self.entries.values()))[1])

    def __len__(self) -> int:
        return len(self.entries)

    def utt_ids(self) -> list[str]:
        return list(self.entries)

    def speaker_of(self, utt_id: str) -> str:
        return self.entries[utt_id][0]

    def vector_of(self, utt_id: str) -> np.ndarray:
        return self.entries[utt_id][1]


@dataclass(frozen=True)
class AnonPolicy:
    """Pool-averaging policy: pool depth, subset size, distance, keying level."""

    n_far: int = 200
    n_avg: int = 100
    distance: str = "cosine"
    level: str = "per_speaker"
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.n_avg <= self.n_far:
            raise ValueError("need 0 < n_avg <= n_far")
        if self.distance not in DISTANCES:
            raise ValueError(f"unknown distance {self.distance!r}")
        if self.level not in LEVELS:
            raise ValueError(f"unknown level {self.level!r}")


@dataclass
class PldaParams:
    """Two-covariance scorer parameters (global mean, within/between covariances)."""

    mean: np.ndarray
    within: np.ndarray
    between: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.within = np.atleast_2d(np.asarray(self.within, dtype=np.float64))
        self.between = np.atleast_2d(np.asarray(self.between, dtype=np.float64))
        d = len(self.mean)
        tot = self.between + self.within
        same = np.block([[tot, self.between], [self.between, tot]])
        diff = np.block([[tot, np.zeros((d, d))], [np.zeros((d, d)), tot]])
        self._q = np.linalg.inv(same) - np.linalg.inv(diff)
        self._logdet_term = -0.5 * (
            np.linalg.slogdet(same)[1] - np.linalg.slogdet(diff)[1]
        )

    @classmethod
    def from_file(cls, path) -> "PldaParams":
        """Load an .npz file with arrays `mean`, `within`, `between`."""
        with np.load(path) as data:
            return cls(mean=data["mean"], within=data["within"], between=data["between"])

    def llr(self, a: np.ndarray, b: np.ndarray) -> float:
        """Same-speaker vs different-speaker log-likelihood ratio for (a, b)."""
        x = np.concatenate([a - self.mean, b - self.mean])
        return float(-0.5 * x @ self._q @ x + self._logdet_term)


def distance(
    a: np.ndarray, b: np.ndarray, kind: str = "cosine", plda: PldaParams | None = None
) -> float:
    """Embedding distance: cosine (1 - similarity) or negated two-covariance LLR."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if kind == "cosine":
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            return 1.0
        return 1.0 - float(np.dot(a, b) / (na * nb))
    if kind == "plda_simplified":
        if plda is None:
            raise ValueError("plda_simplified distance requires PLDA parameters")
        return -plda.llr(a, b)
    raise ValueError(f"unknown distance {kind!r}")


def rng_key_material(seed: int, key: str) -> tuple[int, ...]:
    """Platform-independent seed words for (policy seed, string key)."""
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    words = tuple(int.from_bytes(digest[i : i + 4], "big") for i in range(0, 16, 4))
    return (int(seed),) + words


def _rng_for(seed: int, key: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(rng_key_material(seed, key)))


def pseudo_vector(
    source: np.ndarray,
    pool: EmbeddingSet,
    policy: AnonPolicy,
    key: str,
    distance_fn: Callable[[np.ndarray, np.ndarray], float] | None = None,
    plda: PldaParams | None = None,
) -> np.ndarray:
    """Mean of n_avg vectors drawn from the n_far pool vectors farthest from source.

    Deterministic given (policy.seed, key): the subset draw is seeded from
    both, and pool ranking breaks distance ties by utterance id.
    """
    source = np.asarray(source, dtype=np.float64)
    if source.shape != (pool.dim,):
        raise ValueError(f"source dimension {source.shape} != pool dimension {pool.dim}")
    if policy.n_far > len(pool):
        raise ValueError(f"pool has {len(pool)} vectors, need at least {policy.n_far}")
    if distance_fn is None:
        distance_fn = lambda a, b: distance(a, b, kind=policy.distance, plda=plda)
    utts = pool.utt_ids()
    dists = np.array([distance_fn(source, pool.vector_of(u)) for u in utts])
    order = sorted(range(len(utts)), key=lambda i: (-dists[i], utts[i]))
    top = order[: policy.n_far]
    rng = _rng_for(policy.seed, key)
    chosen = rng.choice(len(top), size=policy.n_avg, replace=False)
    mat = np.stack([pool.vector_of(utts[top[i]]) for i in chosen])
    return mat.mean(axis=0)


def anonymize_embedding_set(
    trial: EmbeddingSet,
    pool: EmbeddingSet,
    policy: AnonPolicy,
    role: str = "",
    distance_fn: Callable[[np.ndarray, np.ndarray], float] | None = None,
    plda: PldaParams | None = None,
) -> EmbeddingSet:
    """Replace every vector with a pseudo-vector keyed per speaker or utterance.

    At per_speaker level all utterances of one speaker share one
    pseudo-vector and distinct speakers get distinct RNG keys; a non-empty
    role string salts the keys (e.g. "trial" vs "enroll"). If two distinct
    keys happen to produce identical vectors, a warning is emitted.
    """
    cache: dict[str, np.ndarray] = {}
    out: dict[str, tuple[str, np.ndarray]] = {}
    for utt, (spk, vec) in trial.entries.items():
        base = spk if policy.level == "per_speaker" else utt
        key = f"{role}:{base}" if role else base
        if key not in cache:
            cache[key] = pseudo_vector(
                vec, pool, policy, key, distance_fn=distance_fn, plda=plda
            )
        out[utt] = (spk, cache[key])
    keys = list(cache)
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            if np.array_equal(cache[keys[i]], cache[keys[j]]):
                warnings.warn(
                    f"pseudo-vectors for keys {keys[i]!r} and {keys[j]!r} collide"
                )
    return EmbeddingSet(out)


def load_embeddings(path) -> EmbeddingSet:
    """Read `utt_id<SP>speaker_id<SP>v1,v2,...,vd` lines."""
    entries: dict[str, tuple[str, np.ndarray]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                utt, spk, values = line.split(" ", 2)
                vec = np.array([float(v) for v in values.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed embedding line") from exc
            if utt in entries:
                raise ValueError(f"{path}:{lineno}: duplicate utterance id {utt!r}")
            entries[utt] = (spk, vec)
    return EmbeddingSet(entries)


def save_embeddings(path, embeddings: EmbeddingSet) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for utt, (spk, vec) in embeddings.entries.items():
            values = ",".join(f"{v:.12g}" for v in vec)
            fh.write(f"{utt} {spk} {values}\n")
