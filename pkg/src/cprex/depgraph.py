"""Sentence dependency graph: shortest paths between a mention pair, v-walks, e-walks.

The graph has one edge per non-ROOT token (the token's incoming edge). Traversal
is undirected; the original head->dependent direction is kept for rendering in
arrow notation, e.g.

    Gemfibrozil <- nsubj <- inhibits -> dobj -> induction -> nmod:of -> synthase

where arrows point from head to dependent.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .corpus import ROOT, EntityMention, Sentence

LEFT_ARROW = "←"   # <-
RIGHT_ARROW = "→"  # ->
WALK_SEP = " – "   # " - " with an en dash, the notation used for walk strings


@dataclass(frozen=True)
class DepEdge:
    head: int
    dependent: int
    label: str


@dataclass(frozen=True)
class PathStep:
    """One traversed edge: `forward` is True when the traversal runs with the
    dependency arrow (head first), False when it runs against it."""

    label: str
    forward: bool


@dataclass(frozen=True)
class DepPath:
    nodes: tuple[int, ...]
    steps: tuple[PathStep, ...]

    def __len__(self) -> int:
        return len(self.steps)


class DepGraph:
    def __init__(self, n_nodes: int, edges: list[DepEdge]):
        self.n_nodes = n_nodes
        self.edges = tuple(edges)
        self._adj: dict[int, list[tuple[int, DepEdge]]] = {i: [] for i in range(n_nodes)}
        for e in self.edges:
            if e.head == e.dependent:
                raise ValueError("self-loop at token %d" % e.head)
            self._adj[e.head].append((e.dependent, e))
            self._adj[e.dependent].append((e.head, e))

    def neighbors(self, node: int) -> list[int]:
        return sorted({nb for nb, _ in self._adj[node]})

    def edge_between(self, a: int, b: int) -> tuple[DepEdge, bool] | None:
        """Edge connecting a and b plus the traversal direction a->b.

        If both orientations exist (malformed parse), the head->dependent
        orientation wins, deterministically.
        """
        forward = backward = None
        for nb, e in self._adj[a]:
            if nb != b:
                continue
            if e.head == a:
                forward = e
            else:
                backward = e
        if forward is not None:
            return forward, True
        if backward is not None:
            return backward, False
        return None


def build_graph(sentence: Sentence) -> DepGraph:
    edges = [
        DepEdge(head=tok.dep_head, dependent=i, label=tok.dep_label)
        for i, tok in enumerate(sentence)
        if tok.dep_head != ROOT
    ]
    return DepGraph(len(sentence), edges)


def shortest_path(graph: DepGraph, src: int, dst: int) -> DepPath | None:
    """Breadth-first shortest path over undirected edges, or None when the pair
    is disconnected. Among equal-length paths the lexicographically smallest
    node-index sequence is returned. src == dst gives the empty path."""
    if not (0 <= src < graph.n_nodes and 0 <= dst < graph.n_nodes):
        raise IndexError("path endpoints (%d, %d) outside graph of %d nodes"
                         % (src, dst, graph.n_nodes))
    if src == dst:
        return DepPath(nodes=(src,), steps=())

    # distance-to-target; then greedily walk from src picking the smallest
    # neighbor index that still lies on a shortest path
    dist = {dst: 0}
    queue = deque([dst])
    while queue:
        cur = queue.popleft()
        for nb in graph.neighbors(cur):
            if nb not in dist:
                dist[nb] = dist[cur] + 1
                queue.append(nb)
    if src not in dist:
        return None

    nodes = [src]
    steps = []
    cur = src
    while cur != dst:
        nxt = min(nb for nb in graph.neighbors(cur) if dist.get(nb, -1) == dist[cur] - 1)
        edge, forward = graph.edge_between(cur, nxt)
        steps.append(PathStep(label=edge.label, forward=forward))
        nodes.append(nxt)
        cur = nxt
    return DepPath(nodes=tuple(nodes), steps=tuple(steps))


def render_path(path: DepPath, words) -> str:
    """Arrow notation over the given word sequence (indexable by token index)."""
    if not path.steps:
        return words[path.nodes[0]] if path.nodes else ""
    parts = [words[path.nodes[0]]]
    for i, step in enumerate(path.steps):
        arrow = RIGHT_ARROW if step.forward else LEFT_ARROW
        parts.append(" %s %s %s %s" % (arrow, step.label, arrow, words[path.nodes[i + 1]]))
    return "".join(parts)


def v_walks(path: DepPath, words) -> list[str]:
    """One `word - dep - word` string per path edge, in path order."""
    return [
        words[path.nodes[i]] + WALK_SEP + step.label + WALK_SEP + words[path.nodes[i + 1]]
        for i, step in enumerate(path.steps)
    ]


def e_walks(path: DepPath, words) -> list[str]:
    """One `dep - word - dep` string per interior path node."""
    return [
        path.steps[i].label + WALK_SEP + words[path.nodes[i + 1]] + WALK_SEP + path.steps[i + 1].label
        for i in range(len(path.steps) - 1)
    ]


def mention_head_token(sentence: Sentence, mention: EntityMention) -> int:
    """Representative token of a mention span: the span token whose dependency
    head lies outside the span (fallback: last token)."""
    first, last = mention.first_token, mention.last_token
    for i in range(first, last + 1):
        head = sentence[i].dep_head
        if head == ROOT or not (first <= head <= last):
            return i
    return last
