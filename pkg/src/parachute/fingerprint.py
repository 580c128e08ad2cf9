"""Byte-space partitions and string fingerprints.

A fingerprint is the set of clusters hit by the UTF-8 bytes of a string, one
bit per cluster. A LIKE pattern can only match strings whose fingerprint is a
superset of the pattern's mask.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

MAX_CLUSTERS = 256
LIKE_WILDCARDS = "%_"
# ASCII characters that also appear in the lowercase of a non-ASCII character
# (U+212A KELVIN SIGN -> "k", U+0130 -> "i" + combining dot)
_NON_ASCII_FOLDS = frozenset(
    ch for c in map(chr, range(128, 0x10000)) for ch in c.lower() if ch.isascii()
)

StrOrBytes = Union[str, bytes]


def _as_bytes(value: StrOrBytes) -> bytes:
    return value if isinstance(value, bytes) else value.encode("utf-8")


@dataclass(frozen=True)
class Fingerprint:
    mask: int
    pbw: int

    def __post_init__(self):
        if self.mask < 0 or self.mask >> self.pbw:
            raise ValueError(f"mask {self.mask:#x} has bits above pbw={self.pbw}")

    def __or__(self, other: 'Fingerprint') -> 'Fingerprint':
        if other.pbw != self.pbw:
            raise ValueError("cannot combine fingerprints of different widths")
        return Fingerprint(self.mask | other.mask, self.pbw)

    def covers(self, pmask: 'Fingerprint') -> bool:
        return mask_matches(self, pmask)

    def to_bitstring(self) -> str:
        """Render cluster 0 leftmost."""
        return "".join("1" if self.mask >> c & 1 else "0" for c in range(self.pbw))


@dataclass(frozen=True)
class BytePartition:
    """Assignment of all 256 byte values to ``pbw`` clusters."""

    cluster_of: Tuple[int, ...]
    pbw: int
    strategy: str = "custom"

    def __post_init__(self):
        if not 1 <= self.pbw <= MAX_CLUSTERS:
            raise ValueError(f"pbw must be in [1, {MAX_CLUSTERS}], got {self.pbw}")
        if len(self.cluster_of) != 256:
            raise ValueError(f"a byte partition needs 256 entries, got {len(self.cluster_of)}")
        if any(not 0 <= c < self.pbw for c in self.cluster_of):
            raise ValueError(f"cluster ids must lie in [0, {self.pbw})")
        if len(set(self.cluster_of)) != self.pbw:
            raise ValueError("every cluster must receive at least one byte")
        object.__setattr__(self, "_bits", tuple(1 << c for c in self.cluster_of))

    @classmethod
    def from_groups(cls, groups: Dict[int, Iterable[StrOrBytes]], pbw: int) -> 'BytePartition':
        """Partition with explicit groups; bytes not named fall back to ``b mod pbw``."""
        cluster_of = [b % pbw for b in range(256)]
        for cluster, members in groups.items():
            for member in members:
                for b in _as_bytes(member):
                    cluster_of[b] = cluster
        return cls(tuple(cluster_of), pbw)

    def bit(self, byte: int) -> int:
        return self._bits[byte]

    def to_list(self) -> list:
        return list(self.cluster_of)

    def to_dict(self) -> Dict[str, Any]:
        return {"pbw": self.pbw, "strategy": self.strategy, "cluster_of": self.to_list()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BytePartition':
        return cls(tuple(data["cluster_of"]), data["pbw"], data.get("strategy", "custom"))


class PartitionStrategy(ABC):
    """Chooses a byte partition for a given number of clusters."""

    name: str = "abstract"

    @abstractmethod
    def partition(self, pbw: int, sample: Optional[Sequence[str]] = None) -> BytePartition:
        """Return a partition into ``pbw`` clusters.

        Args:
            pbw: Number of clusters
            sample: Optional sample of column values a data-aware strategy may use
        """
        pass


class RoundRobinStrategy(PartitionStrategy):
    name = "round-robin"

    def partition(self, pbw: int, sample: Optional[Sequence[str]] = None) -> BytePartition:
        return BytePartition(tuple(b % pbw for b in range(256)), pbw, self.name)


STRATEGIES = {RoundRobinStrategy.name: RoundRobinStrategy}


def round_robin_partition(pbw: int) -> BytePartition:
    return RoundRobinStrategy().partition(pbw)


def fingerprint(partition: BytePartition, s: StrOrBytes) -> Fingerprint:
    """OR of the cluster bits of every byte of ``s``."""
    mask = 0
    for b in set(_as_bytes(s)):
        mask |= partition.bit(b)
    return Fingerprint(mask, partition.pbw)


def fingerprint_column(partition: BytePartition, values: Sequence[Any], nulls: Optional[np.ndarray] = None) -> np.ndarray:
    """Fingerprint masks for a string column; NULL rows get mask 0."""
    if partition.pbw > 64:
        raise ValueError(f"column fingerprints are stored in 64 bits, pbw={partition.pbw}")
    cache: Dict[Any, int] = {}
    out = np.zeros(len(values), dtype=np.uint64)
    for i, value in enumerate(values):
        if value is None or (nulls is not None and nulls[i]):
            continue
        mask = cache.get(value)
        if mask is None:
            mask = cache[value] = fingerprint(partition, value).mask
        out[i] = mask
    return out


def strip_wildcards(pattern: str) -> str:
    return "".join(c for c in pattern if c not in LIKE_WILDCARDS)


def pattern_mask(partition: BytePartition, pattern: str, case_insensitive: bool = False) -> Fingerprint:
    """Mask every qualifying string must cover.

    LIKE: fingerprint of the pattern without ``%`` and ``_``.
    ILIKE: fingerprint(lower) OR fingerprint(upper), over the characters
    that are ASCII and not produced by lowercasing a non-ASCII character;
    every other character contributes nothing. Sound only when case pairs share clusters, see
    ``co_clusters_case_pairs``.
    """
    literal = strip_wildcards(pattern)
    if not case_insensitive:
        return fingerprint(partition, literal)
    kept = "".join(
        c for c in literal
        if c.isascii() and c.lower() not in _NON_ASCII_FOLDS
    )
    return fingerprint(partition, kept.lower()) | fingerprint(partition, kept.upper())


def mask_matches(fp: Fingerprint, pmask: Fingerprint) -> bool:
    return (fp.mask & pmask.mask) == pmask.mask


def co_clusters_case_pairs(partition: BytePartition) -> bool:
    """True iff every ASCII letter shares its cluster with its other case."""
    return all(
        partition.cluster_of[ord(c)] == partition.cluster_of[ord(c.upper())]
        for c in "abcdefghijklmnopqrstuvwxyz"
    )
