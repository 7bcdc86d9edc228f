"""Synthetic target/draft language models.

Every distribution is a pure function of ``(seed, context)``: the context
suffix keys a SHAKE-128 stream that supplies the Gaussians of a scaled
softmax.  Nothing is memoized on the instance, so oracles are immutable values
that can be shared freely.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

# models condition on at most this many trailing tokens; callers may trim contexts to it
MAX_CONTEXT = 64

# xor-ed into the seed to derive the draft's independent noise distribution
_DRAFT_NOISE_SALT = 0x5DEECE66D


class OracleKind(str, enum.Enum):
    TARGET = "target"
    DRAFT = "draft"


class TokenModel(Protocol):
    vocab_size: int

    def next_token_dist(self, context: Sequence[int]) -> np.ndarray: ...


def _hash_normals(seed: int, context: tuple[int, ...], n: int) -> np.ndarray:
    """``n`` standard normals from a SHAKE-128 stream keyed by (seed, context)."""
    h = hashlib.shake_128(struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF))
    h.update(struct.pack(f"<{len(context)}q", *context))
    words = np.frombuffer(h.digest(16 * n), dtype="<u8")
    # 53-bit uniforms in (0, 1]; Box-Muller on pairs
    u = ((words >> np.uint64(11)).astype(float) + 1.0) * 2.0 ** -53
    return np.sqrt(-2.0 * np.log(u[:n])) * np.cos(2.0 * np.pi * u[n:])


@lru_cache(maxsize=1 << 18)
def _base_dist(seed: int, vocab_size: int, sharpness: float, context: tuple[int, ...]) -> np.ndarray:
    z = _hash_normals(seed, context, vocab_size) * sharpness
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    p.flags.writeable = False
    return p


@lru_cache(maxsize=1 << 18)
def _mixed_dist(seed: int, vocab_size: int, sharpness: float, drift: float,
                context: tuple[int, ...]) -> np.ndarray:
    p = _base_dist(seed, vocab_size, sharpness, context)
    u = _base_dist(seed ^ _DRAFT_NOISE_SALT, vocab_size, sharpness, context)
    q = (1.0 - drift) * p + drift * u
    q /= q.sum()
    q.flags.writeable = False
    return q


@dataclass(frozen=True)
class LmOracle:
    """Seeded context-conditioned categorical model over ``range(vocab_size)``.

    ``window`` bounds how many trailing context tokens condition the
    distribution (an n-gram style model); ``drift`` only matters for drafts.
    """

    vocab_size: int
    seed: int
    sharpness: float = 1.0
    kind: OracleKind = OracleKind.TARGET
    drift: float = 0.0
    window: int = 4

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.sharpness <= 0:
            raise ValueError(f"sharpness must be positive, got {self.sharpness}")
        if not 0.0 <= self.drift <= 1.0:
            raise ValueError(f"drift must lie in [0, 1], got {self.drift}")
        if not 1 <= self.window <= MAX_CONTEXT:
            raise ValueError(f"window must lie in [1, {MAX_CONTEXT}], got {self.window}")
        object.__setattr__(self, "kind", OracleKind(self.kind))

    def draft(self, drift: float) -> "LmOracle":
        """Draft model approximating this target: ``(1 - drift) p + drift u``."""
        return LmOracle(self.vocab_size, self.seed, self.sharpness, OracleKind.DRAFT, drift, self.window)

    def next_token_dist(self, context: Sequence[int]) -> np.ndarray:
        if len(context) == 0:
            raise ValueError("context must be non-empty")
        ctx = tuple(int(t) for t in context[-self.window:])
        if self.kind is OracleKind.DRAFT and self.drift > 0.0:
            return _mixed_dist(self.seed, self.vocab_size, self.sharpness, self.drift, ctx)
        return _base_dist(self.seed, self.vocab_size, self.sharpness, ctx)


@dataclass(frozen=True)
class TableOracle:
    """Hand-specified model: looks up the longest matching context suffix.

    Contexts missing from ``table`` fall back to ``fallback`` if given, else to
    the uniform distribution.  Used for golden scenarios and degenerate cases.
    """

    vocab_size: int
    table: Mapping[tuple[int, ...], Sequence[float]] = field(default_factory=dict)
    fallback: Optional[TokenModel] = None

    def __post_init__(self):
        frozen = {}
        for ctx, probs in self.table.items():
            p = np.asarray(probs, dtype=float)
            if p.shape != (self.vocab_size,) or (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError(f"invalid distribution for context {ctx}")
            p.flags.writeable = False
            frozen[tuple(ctx)] = p
        object.__setattr__(self, "table", frozen)
        object.__setattr__(self, "_max_len", max((len(c) for c in frozen), default=0))

    def next_token_dist(self, context: Sequence[int]) -> np.ndarray:
        ctx = tuple(int(t) for t in context)
        for k in range(min(len(ctx), self._max_len), 0, -1):
            hit = self.table.get(ctx[-k:])
            if hit is not None:
                return hit
        if self.fallback is not None:
            return self.fallback.next_token_dist(ctx)
        return np.full(self.vocab_size, 1.0 / self.vocab_size)


def point_mass(vocab_size: int, token: int) -> list[float]:
    p = [0.0] * vocab_size
    p[token] = 1.0
    return p


def next_token_dist(oracle: TokenModel, context: Sequence[int]) -> np.ndarray:
    return oracle.next_token_dist(context)


def sample_from(dist: np.ndarray, u: float) -> int:
    """Inverse-CDF draw of one token given a uniform ``u`` in [0, 1)."""
    idx = int(np.searchsorted(np.cumsum(dist), u, side="right"))
    # cumsum can land a hair under 1.0
    return min(idx, len(dist) - 1)


def sample_token(oracle: TokenModel, context: Sequence[int], rng: np.random.Generator) -> int:
    return sample_from(oracle.next_token_dist(context), rng.random())


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
