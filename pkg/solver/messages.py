"""
Log of the messages agents exchange during a decentralized solve.
"""
import csv
from collections import Counter
from pathlib import Path
from typing import List, Set, Tuple, Union

from core.errors import CoopMpcError
from core.graph import Graph

BYTES_PER_FLOAT = 8


class MessageLog:
    """Append-only record of (round, sender, receiver, floats)."""

    def __init__(self):
        self.rounds = 0
        self._entries: List[Tuple[int, int, int, int]] = []

    def __len__(self) -> int:
        return len(self._entries)

    def next_round(self) -> int:
        self.rounds += 1
        return self.rounds - 1

    def record(self, round_index: int, sender: int, receiver: int, floats: int):
        if sender == receiver:
            return
        self._entries.append((round_index, sender, receiver, int(floats)))

    def extend(self, other: "MessageLog"):
        """Append another log, renumbering its rounds after ours."""
        offset = self.rounds
        self._entries.extend((r + offset, s, d, f) for r, s, d, f in other._entries)
        self.rounds += other.rounds

    def pairs(self) -> Set[Tuple[int, int]]:
        return {(s, d) for _, s, d, _ in self._entries}

    @property
    def total_floats(self) -> int:
        return sum(f for *_, f in self._entries)

    @property
    def total_bytes(self) -> int:
        return BYTES_PER_FLOAT * self.total_floats

    def per_pair_bytes(self) -> Counter:
        totals = Counter()
        for _, s, d, f in self._entries:
            totals[(s, d)] += BYTES_PER_FLOAT * f
        return totals

    def check_locality(self, graph: Graph):
        stray = sorted(p for p in self.pairs() if not graph.has_edge(*p))
        if stray:
            raise CoopMpcError(f"messages exchanged outside the communication graph: {stray}")

    def to_csv(self, path: Union[str, Path]):
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["round", "sender", "receiver", "bytes"])
            for r, s, d, f in self._entries:
                writer.writerow([r, s, d, BYTES_PER_FLOAT * f])
