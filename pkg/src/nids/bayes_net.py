"""Discrete Bayesian networks: K2 structure search, CPT fitting and junction-tree inference.

Node ``i < n_features`` is feature ``i``; node ``n_features`` is the class.
All variables must be nominal, so numeric features are discretized first.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .dataset import Dataset, FeatureSchema, Record, SchemaError


class InconsistentEvidence(ValueError):
    """Evidence has zero probability under the model."""


def node_data(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Integer matrix with one column per node (class last) and the node cardinalities."""
    if not ds.schema.nominal_mask.all():
        bad = [f.name for f in ds.schema.features if not f.is_nominal]
        raise SchemaError(f"numeric features must be discretized first: {bad[:5]}")
    data = np.column_stack([ds.X.astype(np.int64), ds.y])
    cards = np.append(ds.schema.cardinalities, ds.schema.n_classes)
    return data, cards


def family_counts(data: np.ndarray, cards: np.ndarray, node: int, parents) -> np.ndarray:
    """Counts N_jk with shape ``(q, r)``: parent configuration j (mixed radix, first parent slowest)."""
    r = int(cards[node])
    config = np.zeros(data.shape[0], dtype=np.int64)
    q = 1
    for p in parents:
        config = config * cards[p] + data[:, p]
        q *= int(cards[p])
    return np.bincount(config * r + data[:, node], minlength=q * r).reshape(q, r)


def _score_counts(counts: np.ndarray, alpha: float) -> float:
    r = counts.shape[1]
    nj = counts.sum(axis=1)
    observed = nj > 0
    # unobserved configurations contribute exactly zero
    c = counts[observed]
    return float(
        np.sum(gammaln(r * alpha) - gammaln(nj[observed] + r * alpha))
        + np.sum(gammaln(c + alpha) - gammaln(alpha))
    )


def k2_score(ds: Dataset, node: int, parents, alpha: float = 1.0) -> float:
    """Log Cooper-Herskovits marginal likelihood of ``node`` given ``parents``."""
    data, cards = node_data(ds)
    parents = tuple(parents)
    if not 0 <= node < cards.size or any(not 0 <= p < cards.size for p in parents):
        raise IndexError("node index out of range")
    if node in parents:
        raise ValueError("a node cannot be its own parent")
    return _score_counts(family_counts(data, cards, node, parents), alpha)


@dataclass(frozen=True)
class NetworkStructure:
    node_count: int
    ordering: tuple[int, ...]
    parents: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if sorted(self.ordering) != list(range(self.node_count)):
            raise ValueError("ordering must be a permutation of the nodes")
        if len(self.parents) != self.node_count:
            raise ValueError("one parent list per node required")
        rank = {v: i for i, v in enumerate(self.ordering)}
        for v, ps in enumerate(self.parents):
            if list(ps) != sorted(set(ps)):
                raise ValueError(f"parents of node {v} must be sorted and unique")
            if any(rank[p] >= rank[v] for p in ps):
                raise ValueError(f"node {v} has a parent that does not precede it")

    def family(self, node: int) -> tuple[int, ...]:
        return tuple(sorted(self.parents[node] + (node,)))

    @classmethod
    def naive(cls, n_features: int) -> "NetworkStructure":
        """Class node parent of every feature."""
        cls_node = n_features
        return cls(
            n_features + 1,
            (cls_node,) + tuple(range(n_features)),
            tuple((cls_node,) for _ in range(n_features)) + ((),),
        )


def default_ordering(n_features: int) -> tuple[int, ...]:
    return (n_features,) + tuple(range(n_features))


def k2_parents(data, cards, node, candidates, max_parents, alpha, initial=()):
    """Greedy K2 parent selection for one node.

    Returns the parent tuple and the score trajectory (one entry per
    accepted parent, starting with the score of ``initial``).
    """
    parents = list(initial)
    best = _score_counts(family_counts(data, cards, node, sorted(parents)), alpha)
    trajectory = [best]
    pool = sorted(set(candidates) - set(parents))
    while len(parents) - len(initial) < max_parents and pool:
        choice, choice_score = None, best
        for p in pool:
            s = _score_counts(family_counts(data, cards, node, sorted(parents + [p])), alpha)
            if s > choice_score:
                choice, choice_score = p, s
        if choice is None:
            break
        parents.append(choice)
        pool.remove(choice)
        best = choice_score
        trajectory.append(best)
    return tuple(sorted(parents)), trajectory


def k2_search(
    ds: Dataset,
    ordering=None,
    max_parents: int = 2,
    alpha: float = 1.0,
    class_parent: bool = False,
) -> NetworkStructure:
    """K2 search over a fixed node ordering.

    With ``class_parent`` every feature starts with the class as a parent
    and ``max_parents`` counts only the parents added on top of it.
    """
    data, cards = node_data(ds)
    n = cards.size
    class_node = n - 1
    ordering = tuple(default_ordering(n - 1) if ordering is None else ordering)
    if sorted(ordering) != list(range(n)):
        raise ValueError("ordering must be a permutation of the nodes")
    if max_parents < 0:
        raise ValueError("max_parents must be non-negative")
    parents: list[tuple[int, ...]] = [()] * n
    for pos, node in enumerate(ordering):
        preceding = ordering[:pos]
        initial = ()
        if class_parent and node != class_node and class_node in preceding:
            initial = (class_node,)
        parents[node], _ = k2_parents(data, cards, node, preceding, max_parents, alpha, initial)
    return NetworkStructure(n, ordering, tuple(parents))


@dataclass(frozen=True, eq=False)
class BayesNetModel:
    """Structure plus CPTs. ``cpts[v]`` has axes (sorted parents..., v)."""

    structure: NetworkStructure
    cpts: tuple[np.ndarray, ...]
    cardinalities: np.ndarray
    alpha: float
    schema: FeatureSchema | None = None

    @property
    def class_node(self) -> int:
        return self.structure.node_count - 1

    def factor(self, node: int) -> tuple[tuple[int, ...], np.ndarray]:
        """The CPT of ``node`` as a factor over its family in sorted node order."""
        ps = self.structure.parents[node]
        axes = ps + (node,)
        fam = tuple(sorted(axes))
        return fam, np.transpose(self.cpts[node], [axes.index(v) for v in fam])

    def predict_proba(self, X) -> np.ndarray:
        """Class posteriors given every feature observed, vectorized over records.

        Only CPTs whose family contains the class depend on it; the rest
        cancel in the normalization.
        """
        X = np.asarray(X)
        cn = self.class_node
        if X.ndim != 2 or X.shape[1] != cn:
            raise SchemaError(f"expected records with {cn} values")
        data = X.astype(np.int64)
        if data.size and (
            (data < 0).any() or (data >= self.cardinalities[None, :cn]).any()
        ):
            raise SchemaError("evidence value outside a node's cardinality")
        C = int(self.cardinalities[cn])
        logp = np.zeros((X.shape[0], C))
        with np.errstate(divide="ignore"):
            for v in range(self.structure.node_count):
                ps = self.structure.parents[v]
                if v != cn and cn not in ps:
                    continue
                table = np.log(self.cpts[v])
                for c in range(C):
                    idx = tuple(
                        np.full(X.shape[0], c) if u == cn else data[:, u] for u in ps + (v,)
                    )
                    logp[:, c] += table[idx]
        top = logp.max(axis=1, keepdims=True)
        if not np.all(np.isfinite(top)):
            raise InconsistentEvidence("evidence has zero probability under the model")
        p = np.exp(logp - top)
        return p / p.sum(axis=1, keepdims=True)


def fit_cpts(ds: Dataset, structure: NetworkStructure, alpha: float = 1.0) -> BayesNetModel:
    data, cards = node_data(ds)
    if cards.size != structure.node_count:
        raise SchemaError("structure node count does not match the dataset")
    cpts = []
    for v in range(structure.node_count):
        ps = structure.parents[v]
        counts = family_counts(data, cards, v, ps).astype(np.float64)
        r = counts.shape[1]
        smoothed = counts + alpha
        totals = smoothed.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            table = np.where(totals > 0, smoothed / totals, 1.0 / r)
        cpts.append(table.reshape(tuple(int(cards[p]) for p in ps) + (r,)))
    return BayesNetModel(structure, tuple(cpts), cards, alpha, ds.schema)


# --- junction tree ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JunctionTree:
    cliques: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...]
    separators: tuple[tuple[int, ...], ...]
    family_clique: tuple[int, ...]  # node -> clique holding its CPT
    potentials: tuple[np.ndarray, ...] | None = field(default=None)

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def clique_containing(self, node: int) -> int:
        for i, c in enumerate(self.cliques):
            if node in c:
                return i
        raise KeyError(node)

    def with_potentials(self, model: BayesNetModel) -> "JunctionTree":
        return JunctionTree(
            self.cliques, self.edges, self.separators, self.family_clique,
            initial_potentials(self, model),
        )


def moral_graph(structure: NetworkStructure) -> list[set[int]]:
    adj = [set() for _ in range(structure.node_count)]
    for v, ps in enumerate(structure.parents):
        for p in ps:
            adj[v].add(p)
            adj[p].add(v)
        for a, b in itertools.combinations(ps, 2):
            adj[a].add(b)
            adj[b].add(a)
    return adj


def triangulate(adj: list[set[int]]) -> tuple[list[tuple[int, ...]], list[set[int]]]:
    """Min-fill elimination (ties to the lowest index).

    Returns the maximal elimination cliques and the chordal (filled) graph.
    """
    work = [set(a) for a in adj]
    filled = [set(a) for a in adj]
    remaining = set(range(len(adj)))
    cliques: list[frozenset] = []
    while remaining:
        best, best_fill = None, None
        for v in sorted(remaining):
            nb = sorted(work[v])
            fill = sum(1 for a, b in itertools.combinations(nb, 2) if b not in work[a])
            if best_fill is None or fill < best_fill:
                best, best_fill = v, fill
        nb = sorted(work[best])
        for a, b in itertools.combinations(nb, 2):
            if b not in work[a]:
                work[a].add(b)
                work[b].add(a)
                filled[a].add(b)
                filled[b].add(a)
        cliques.append(frozenset(nb + [best]))
        for u in nb:
            work[u].discard(best)
        remaining.discard(best)
        work[best] = set()
    maximal = []
    for i, c in enumerate(cliques):
        if any(c < d or (c == d and j < i) for j, d in enumerate(cliques) if j != i):
            continue
        maximal.append(tuple(sorted(c)))
    return maximal, filled


def build_junction_tree(structure: NetworkStructure) -> JunctionTree:
    """Moralize, triangulate, and join maximal cliques by a maximum-weight spanning tree."""
    cliques, _ = triangulate(moral_graph(structure))
    candidates = []
    for i, j in itertools.combinations(range(len(cliques)), 2):
        w = len(set(cliques[i]) & set(cliques[j]))
        candidates.append((-w, i, j))
    candidates.sort()
    root = list(range(len(cliques)))

    def find(x):
        while root[x] != x:
            root[x] = root[root[x]]
            x = root[x]
        return x

    edges, seps = [], []
    for _, i, j in candidates:
        ri, rj = find(i), find(j)
        if ri != rj:
            root[ri] = rj
            edges.append((i, j))
            seps.append(tuple(sorted(set(cliques[i]) & set(cliques[j]))))
    family_clique = []
    for v in range(structure.node_count):
        fam = set(structure.family(v))
        family_clique.append(next(i for i, c in enumerate(cliques) if fam <= set(c)))
    return JunctionTree(tuple(cliques), tuple(edges), tuple(seps), tuple(family_clique))


def running_intersection_holds(jt: JunctionTree, node_count: int) -> bool:
    for v in range(node_count):
        holding = {i for i, c in enumerate(jt.cliques) if v in c}
        if not holding:
            return False
        start = min(holding)
        seen, frontier = {start}, [start]
        while frontier:
            i = frontier.pop()
            for j in jt.neighbors(i):
                if j in holding and j not in seen:
                    seen.add(j)
                    frontier.append(j)
        if seen != holding:
            return False
    return True


def _expand(vars_from, table, vars_to):
    """Reshape ``table`` (axes ``vars_from``, a sorted subset of ``vars_to``) for broadcasting."""
    shape = [table.shape[vars_from.index(v)] if v in vars_from else 1 for v in vars_to]
    return table.reshape(shape)


def initial_potentials(jt: JunctionTree, model: BayesNetModel) -> tuple[np.ndarray, ...]:
    cards = model.cardinalities
    pots = [np.ones(tuple(int(cards[v]) for v in c)) for c in jt.cliques]
    for v in range(model.structure.node_count):
        fam, table = model.factor(v)
        i = jt.family_clique[v]
        pots[i] = pots[i] * _expand(fam, table, jt.cliques[i])
    return tuple(pots)


def calibrate(jt: JunctionTree, potentials) -> list[np.ndarray]:
    """Two-pass (collect then distribute) sum-product; returns unnormalized clique beliefs."""
    n = len(jt.cliques)
    adjacency = {i: jt.neighbors(i) for i in range(n)}
    sep_of = {}
    for (a, b), s in zip(jt.edges, jt.separators):
        sep_of[(a, b)] = sep_of[(b, a)] = s
    # traversal order from root 0, covering every component
    order, parent = [], {}
    for r in range(n):
        if r in parent:
            continue
        parent[r] = None
        stack = [r]
        while stack:
            i = stack.pop()
            order.append(i)
            for j in adjacency[i]:
                if j not in parent:
                    parent[j] = i
                    stack.append(j)
    messages: dict[tuple[int, int], np.ndarray] = {}

    def send(i, j):
        table = potentials[i]
        for k in adjacency[i]:
            if k != j:
                table = table * _expand(sep_of[(k, i)], messages[(k, i)], jt.cliques[i])
        sep = sep_of[(i, j)]
        drop = tuple(ax for ax, v in enumerate(jt.cliques[i]) if v not in sep)
        msg = table.sum(axis=drop) if drop else table
        scale = msg.max()
        messages[(i, j)] = msg / scale if scale > 0 else msg

    for i in reversed(order):
        if parent[i] is not None:
            send(i, parent[i])
    for i in order:
        for j in adjacency[i]:
            if parent.get(j) == i:
                send(i, j)
    beliefs = []
    for i in range(n):
        b = potentials[i]
        for k in adjacency[i]:
            b = b * _expand(sep_of[(k, i)], messages[(k, i)], jt.cliques[i])
        beliefs.append(b)
    return beliefs


def query_marginal(model: BayesNetModel, jt: JunctionTree, evidence, node: int) -> np.ndarray:
    """Posterior marginal of ``node`` given ``evidence`` (sequence with ``None`` for unobserved)."""
    cards = model.cardinalities
    if len(evidence) != model.structure.node_count:
        raise SchemaError("evidence must list one entry per node")
    if evidence[node] is not None:
        raise ValueError("query node must be unobserved")
    pots = list(jt.potentials if jt.potentials is not None else initial_potentials(jt, model))
    for v, val in enumerate(evidence):
        if val is None:
            continue
        val = int(val)
        if not 0 <= val < cards[v]:
            raise SchemaError(f"evidence value {val} outside the cardinality of node {v}")
        i = jt.clique_containing(v)
        mask = np.zeros(int(cards[v]))
        mask[val] = 1.0
        pots[i] = pots[i] * _expand((v,), mask, jt.cliques[i])
    beliefs = calibrate(jt, pots)
    i = jt.clique_containing(node)
    clique = jt.cliques[i]
    drop = tuple(ax for ax, v in enumerate(clique) if v != node)
    marginal = beliefs[i].sum(axis=drop) if drop else beliefs[i]
    total = marginal.sum()
    if not total > 0:
        raise InconsistentEvidence("evidence has zero probability under the model")
    return marginal / total


def query_class_marginal(model: BayesNetModel, jt: JunctionTree, evidence, class_node=None) -> np.ndarray:
    if class_node is None:
        class_node = model.class_node
    return query_marginal(model, jt, evidence, class_node)


def predict_bn(model: BayesNetModel, jt: JunctionTree, record) -> np.ndarray:
    """Class distribution with every feature of ``record`` entered as evidence."""
    values = record.values if isinstance(record, Record) else record
    values = np.asarray(values)
    if values.shape != (model.class_node,):
        raise SchemaError(f"expected {model.class_node} feature values")
    evidence = [int(v) for v in values] + [None]
    return query_class_marginal(model, jt, evidence)
