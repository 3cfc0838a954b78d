"""
Undirected communication graph between agents.
"""
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple, TypeVar

from core.errors import ConfigurationError

T = TypeVar("T")

Edge = Tuple[int, int]


@dataclass(frozen=True)
class Graph:
    """
    Undirected graph on agents 0..m-1.

    Edges are stored normalised as (i, j) with i < j. Neighbor lists are
    derived once and always sorted ascending.
    """

    m: int
    edges: Tuple[Edge, ...] = ()
    _neighbors: Tuple[Tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 0:
            raise ConfigurationError("agent count must be non-negative", "graph.m")
        normalised = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ConfigurationError(f"self-loop on agent {i}", "graph.edges")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise ConfigurationError(f"edge ({i}, {j}) outside 0..{self.m - 1}", "graph.edges")
            normalised.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(normalised)))

        neighbors: List[List[int]] = [[] for _ in range(self.m)]
        for i, j in self.edges:
            neighbors[i].append(j)
            neighbors[j].append(i)
        object.__setattr__(self, "_neighbors", tuple(tuple(sorted(n)) for n in neighbors))

    @classmethod
    def path(cls, m: int) -> "Graph":
        return cls(m, tuple((i, i + 1) for i in range(m - 1)))

    @classmethod
    def complete(cls, m: int) -> "Graph":
        return cls(m, tuple((i, j) for i in range(m) for j in range(i + 1, m)))

    @classmethod
    def empty(cls, m: int) -> "Graph":
        return cls(m, ())

    def neighbors(self, i: int) -> Tuple[int, ...]:
        """Neighbors of agent i in ascending index order."""
        self._check_index(i)
        return self._neighbors[i]

    def has_edge(self, i: int, j: int) -> bool:
        return j in self.neighbors(i)

    def scope(self, i: int) -> Tuple[int, ...]:
        """Agent i together with its neighbors, ascending."""
        return tuple(sorted((i,) + self.neighbors(i)))

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))

    def remove_agents(self, removed: Iterable[int], reconnect: str = "keep") -> "Graph":
        """
        Drop agents and re-index the survivors in their original order.

        Args:
            removed: Indices of agents to drop
            reconnect: "keep" for the induced subgraph, "path" to chain the
                survivors in index order, "complete" for all-to-all

        Returns:
            Graph on the remaining agents
        """
        removed = set(removed)
        for i in removed:
            self._check_index(i)
        survivors = [i for i in range(self.m) if i not in removed]
        new_index = {old: new for new, old in enumerate(survivors)}
        m = len(survivors)
        if reconnect == "path":
            return Graph.path(m)
        if reconnect == "complete":
            return Graph.complete(m)
        if reconnect != "keep":
            raise ConfigurationError(f"unknown reconnect rule '{reconnect}'", "event.reconnect")
        edges = tuple(
            (new_index[i], new_index[j])
            for i, j in self.edges
            if i in new_index and j in new_index
        )
        return Graph(m, edges)

    def _check_index(self, i: int):
        if not 0 <= i < self.m:
            raise IndexError(f"agent index {i} out of range for m={self.m}")


def neighbor_slice(graph: Graph, i: int, stacked: Sequence[T]) -> List[T]:
    """
    Pick the entries of a per-agent sequence that belong to the neighbors of i.

    Args:
        graph: Communication graph
        i: Agent index
        stacked: One value per agent

    Returns:
        Values of N_i in ascending agent order
    """
    if len(stacked) != graph.m:
        raise IndexError(f"expected {graph.m} per-agent values, got {len(stacked)}")
    return [stacked[j] for j in graph.neighbors(i)]
