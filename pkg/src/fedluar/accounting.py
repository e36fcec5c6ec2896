"""Communication and server-memory bookkeeping.

All costs are counted in scalars; byte figures assume 4-byte floats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

BYTES_PER_SCALAR = 4


@dataclass
class CommLedger:
    layer_sizes: list[int]
    uploads: list[int] = field(default_factory=list)          # scalars uploaded, per round
    recycled_scalars: list[int] = field(default_factory=list)  # a * sum of recycled layer sizes
    downloads: list[int] = field(default_factory=list)         # model broadcast, per round
    control_ints: list[int] = field(default_factory=list)      # recycled-layer ids sent
    active: list[int] = field(default_factory=list)
    per_layer_counts: list[int] = None                         # cumulative aggregations

    def __post_init__(self):
        if self.per_layer_counts is None:
            self.per_layer_counts = [0] * len(self.layer_sizes)

    @property
    def d(self) -> int:
        return sum(self.layer_sizes)

    @property
    def rounds(self) -> int:
        return len(self.uploads)

    def record_round(self, n_active: int, recycled: Iterable[int]) -> int:
        recycled = set(recycled)
        kept = sum(n for l, n in enumerate(self.layer_sizes) if l not in recycled)
        rec = self.d - kept
        self.uploads.append(n_active * kept)
        self.recycled_scalars.append(n_active * rec)
        self.downloads.append(n_active * self.d)
        self.control_ints.append(n_active * len(recycled))
        self.active.append(n_active)
        for l in range(len(self.layer_sizes)):
            if l not in recycled:
                self.per_layer_counts[l] += 1
        return n_active * kept

    def fedavg_total(self) -> int:
        return sum(a * self.d for a in self.active)

    def normalized_cost_exact(self) -> Fraction:
        if not self.uploads:
            raise ValueError("no rounds recorded")
        return Fraction(sum(self.uploads), self.fedavg_total())

    @property
    def normalized_cost(self) -> float:
        return float(self.normalized_cost_exact())

    @property
    def upload_bytes(self) -> int:
        return BYTES_PER_SCALAR * sum(self.uploads)

    @property
    def download_bytes(self) -> int:
        # control ids shipped as 32-bit integers alongside the model
        return BYTES_PER_SCALAR * (sum(self.downloads) + sum(self.control_ints))


def comm_normalized_cost(ledger: CommLedger) -> float:
    """Uploaded scalars relative to FedAvg uploading every layer every round."""
    return ledger.normalized_cost


def comm_cost_from_sets(layer_sizes: Sequence[int], recycled_sets: Sequence[Iterable[int]]) -> Fraction:
    """Exact cost for a sequence of recycling sets (the active-client factor cancels)."""
    d = sum(layer_sizes)
    if not recycled_sets:
        raise ValueError("need at least one round")
    kept = 0
    for r in recycled_sets:
        r = set(r)
        kept += sum(n for l, n in enumerate(layer_sizes) if l not in r)
    return Fraction(kept, len(recycled_sets) * d)


def memory_footprint_model(a: int, layer_sizes: Sequence[int],
                           recycled_set: Iterable[int]) -> tuple[int, int]:
    """Peak server buffer size in scalars: ``(a*d, a*(d-k) + k)``.

    ``k`` is the total size of the recycled layers, kept once as last
    round's update instead of ``a`` times as client uploads.
    """
    if a < 1:
        raise ValueError("a must be >= 1")
    d = sum(layer_sizes)
    k = sum(layer_sizes[l] for l in set(recycled_set))
    return a * d, a * (d - k) + k
