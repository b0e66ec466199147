"""Interferogram networks: which date pairs were formed."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np


class NetworkError(ValueError):
    def __init__(self, message, components=None):
        super().__init__(message)
        self.components = components


@dataclass(frozen=True)
class IfgNetwork:
    """Date pairs ``(a, b)`` with ``a < b`` indexing into ``dates``."""

    pairs: tuple[tuple[int, int], ...]
    dates: tuple[float, ...]

    def __post_init__(self):
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        dates = tuple(float(d) for d in self.dates)
        n = len(dates)
        if any(b2 <= b1 for b1, b2 in zip(dates, dates[1:])):
            raise NetworkError("network dates must be strictly increasing")
        if len(set(pairs)) != len(pairs):
            raise NetworkError("duplicate pairs in network")
        for a, b in pairs:
            if not (0 <= a < b < n):
                raise NetworkError(f"pair ({a}, {b}) invalid for {n} dates")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "dates", dates)

    @classmethod
    def all_pairs(cls, dates) -> "IfgNetwork":
        return cls(tuple(combinations(range(len(dates)), 2)), tuple(dates))

    @classmethod
    def sequential(cls, dates, max_step: int = 1) -> "IfgNetwork":
        n = len(dates)
        pairs = tuple((a, b) for a in range(n) for b in range(a + 1, min(a + max_step, n - 1) + 1))
        return cls(pairs, tuple(dates))

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def index(self, a: int, b: int) -> int:
        return self.pairs.index((a, b))

    def components(self) -> list[list[int]]:
        """Connected groups of date indices (union-find)."""
        parent = list(range(self.n_dates))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in self.pairs:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        groups: dict[int, list[int]] = {}
        for i in range(self.n_dates):
            groups.setdefault(find(i), []).append(i)
        return sorted(groups.values())

    def is_connected(self) -> bool:
        return len(self.components()) == 1

    def triplets(self) -> list[tuple[int, int, int]]:
        """Every ``(i, j, k)`` with ``i < j < k`` whose three pairs are all present."""
        have = set(self.pairs)
        return [t for t in combinations(range(self.n_dates), 3)
                if (t[0], t[1]) in have and (t[1], t[2]) in have and (t[0], t[2]) in have]

    def closure_matrix(self) -> np.ndarray:
        """``(n_triplets, n_pairs)`` with +1 for ij and jk, -1 for ik."""
        trip = self.triplets()
        C = np.zeros((len(trip), self.n_pairs), dtype=np.int64)
        for t, (i, j, k) in enumerate(trip):
            C[t, self.index(i, j)] += 1
            C[t, self.index(j, k)] += 1
            C[t, self.index(i, k)] -= 1
        return C

    def to_dict(self) -> dict:
        return {"dates": list(self.dates), "pairs": [list(p) for p in self.pairs]}
