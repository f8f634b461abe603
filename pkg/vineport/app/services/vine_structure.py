"""
Vine structures as nested edge lists.

Tree t (0-based) holds d - 1 - t edges. An edge in tree t >= 1 joins two
edges of tree t - 1 that share a parent (proximity condition); its
conditioned pair is the symmetric difference of the parents' member sets
and its conditioning set is their intersection. Tree 0 edges name their
two variables as parents.
"""

from itertools import combinations
from typing import Dict, FrozenSet, List, Sequence, Tuple

import networkx as nx
import numpy as np

from ...exceptions import DimensionError, ParameterError
from ...schemas import VineEdge, VineStructure

EdgeId = Tuple[int, int]


def _members(edge: VineEdge) -> FrozenSet[int]:
    return frozenset(edge.conditioned) | frozenset(edge.conditioning)


def join_edges(tree: int, left: VineEdge, right: VineEdge, left_index: int, right_index: int) -> VineEdge:
    """Edge of tree `tree` joining two edges of the previous tree"""
    lm, rm = _members(left), _members(right)
    common = lm & rm
    a, b = sorted(lm - rm), sorted(rm - lm)
    if len(a) != 1 or len(b) != 1:
        raise ParameterError(f"edges {left_index} and {right_index} of tree {tree} cannot be joined")
    return VineEdge(
        tree=tree,
        conditioned=(a[0], b[0]),
        conditioning=tuple(sorted(common)),
        parents=(left_index, right_index),
    )


def is_admissible(left: VineEdge, right: VineEdge) -> bool:
    """Proximity plus each exclusive element sitting in its parent's conditioned pair"""
    if left.tree == 0:
        shared = set(left.conditioned) & set(right.conditioned)
        if len(shared) != 1:
            return False
    elif not set(left.parents) & set(right.parents):
        return False
    lm, rm = _members(left), _members(right)
    a, b = lm - rm, rm - lm
    if len(a) != 1 or len(b) != 1:
        return False
    return next(iter(a)) in left.conditioned and next(iter(b)) in right.conditioned


def _from_pairs(d: int, first_tree: List[Tuple[int, int]], joins: List[List[Tuple[int, int]]]) -> List[List[VineEdge]]:
    trees = [[VineEdge(tree=0, conditioned=(a, b), parents=(a, b)) for a, b in first_tree]]
    for t, pairs in enumerate(joins, start=1):
        prev = trees[-1]
        trees.append([join_edges(t, prev[i], prev[j], i, j) for i, j in pairs])
    return trees


def build_cvine(order: Sequence[int]) -> VineStructure:
    """Canonical vine: tree t is a star around order[t]"""
    order = [int(x) for x in order]
    d = len(order)
    if d < 2 or sorted(order) != list(range(d)):
        raise DimensionError(f"C-vine order must be a permutation of 0..{d - 1}")
    first = [(order[0], order[j]) for j in range(1, d)]
    # in tree t, edge 0 holds the next pivot; it joins every other edge of that tree
    joins = [[(0, j) for j in range(1, d - t)] for t in range(1, d - 1)]
    return VineStructure(kind="cvine", dim=d, order=order, trees=_from_pairs(d, first, joins))


def build_dvine(order: Sequence[int]) -> VineStructure:
    """Drawable vine: every tree is a path along `order`"""
    order = [int(x) for x in order]
    d = len(order)
    if d < 2 or sorted(order) != list(range(d)):
        raise DimensionError(f"D-vine order must be a permutation of 0..{d - 1}")
    first = [(order[i], order[i + 1]) for i in range(d - 1)]
    joins = [[(i, i + 1) for i in range(d - 1 - t)] for t in range(1, d - 1)]
    return VineStructure(kind="dvine", dim=d, order=order, trees=_from_pairs(d, first, joins))


def edge_at(structure: VineStructure, edge_id: EdgeId) -> VineEdge:
    return structure.trees[edge_id[0]][edge_id[1]]


def check_proximity(structure: VineStructure) -> bool:
    """Raise if `structure` is not a regular vine on its dimension"""
    d = structure.dim
    if len(structure.trees) != d - 1:
        raise ParameterError(f"vine on {d} variables needs {d - 1} trees, got {len(structure.trees)}")
    for t, tree in enumerate(structure.trees):
        if len(tree) != d - 1 - t:
            raise ParameterError(f"tree {t + 1} needs {d - 1 - t} edges, got {len(tree)}")
        graph = nx.Graph()
        if t == 0:
            graph.add_nodes_from(range(d))
            for edge in tree:
                if edge.conditioning or set(edge.parents) != set(edge.conditioned):
                    raise ParameterError(f"malformed first-tree edge {edge.conditioned}")
                graph.add_edge(*edge.parents)
        else:
            prev = structure.trees[t - 1]
            graph.add_nodes_from(range(len(prev)))
            for edge in tree:
                left, right = prev[edge.parents[0]], prev[edge.parents[1]]
                if not is_admissible(left, right):
                    raise ParameterError(f"tree {t + 1} edge {edge.conditioned}|{edge.conditioning} violates proximity")
                joined = join_edges(t, left, right, *edge.parents)
                if set(joined.conditioned) != set(edge.conditioned) or set(joined.conditioning) != set(edge.conditioning):
                    raise ParameterError(f"tree {t + 1} edge labels disagree with its parents")
                graph.add_edge(*edge.parents)
        if not nx.is_tree(graph):
            raise ParameterError(f"tree {t + 1} is not a spanning tree")
    return True


def peel(structure: VineStructure) -> List[Tuple[int, List[EdgeId]]]:
    """
    Variables in peeling order with their chains of edges (tree 1 upward).

    Each step takes an element of the conditioned pair of the top remaining
    edge; that variable is conditioned in exactly one remaining edge per
    tree, and removing those edges leaves a regular vine on the others.
    Simulation runs the list backwards.
    """
    d = structure.dim
    alive = {(t, i) for t, tree in enumerate(structure.trees) for i in range(len(tree))}
    steps: List[Tuple[int, List[EdgeId]]] = []
    remaining = set(range(d))
    for depth in range(d - 1, 0, -1):
        top = [(t, i) for t, i in alive if t == depth - 1]
        if len(top) != 1:
            raise ParameterError("vine cannot be peeled; structure is not regular")
        x = edge_at(structure, top[0]).conditioned[0]
        chain: List[EdgeId] = []
        for t in range(depth):
            hits = [(tt, i) for tt, i in alive if tt == t and x in edge_at(structure, (tt, i)).conditioned]
            if len(hits) != 1:
                raise ParameterError(f"variable {x} is conditioned in {len(hits)} edges of tree {t + 1}")
            chain.append(hits[0])
        alive -= set(chain)
        remaining.discard(x)
        steps.append((x, chain))
    steps.append((remaining.pop(), []))
    return steps


def structure_matrix(structure: VineStructure) -> np.ndarray:
    """
    Lower-triangular matrix with 1-based variable labels.

    Column j carries the j-th peeled variable on the diagonal; row d-1-t
    holds its partner in tree t, so the bottom row is the first tree.
    """
    d = structure.dim
    matrix = np.zeros((d, d), dtype=int)
    for j, (x, chain) in enumerate(peel(structure)):
        matrix[j, j] = x + 1
        for t, edge_id in enumerate(chain):
            edge = edge_at(structure, edge_id)
            partner = edge.conditioned[1] if edge.conditioned[0] == x else edge.conditioned[0]
            matrix[d - 1 - t, j] = partner + 1
    return matrix


def from_structure_matrix(matrix: np.ndarray, kind: str = "rvine") -> VineStructure:
    matrix = np.asarray(matrix, dtype=int)
    d = matrix.shape[0]
    if matrix.shape != (d, d) or d < 2:
        raise DimensionError(f"structure matrix must be square with d >= 2, got {matrix.shape}")
    by_tree: List[List[Tuple[Tuple[int, int], Tuple[int, ...]]]] = [[] for _ in range(d - 1)]
    for j in range(d - 1):
        x = matrix[j, j] - 1
        for t in range(d - 1 - j):
            partner = matrix[d - 1 - t, j] - 1
            conditioning = tuple(sorted(int(matrix[d - 1 - s, j] - 1) for s in range(t)))
            by_tree[t].append(((int(x), int(partner)), conditioning))
    trees: List[List[VineEdge]] = []
    for t, labels in enumerate(by_tree):
        tree = []
        for (a, b), cond in labels:
            if t == 0:
                tree.append(VineEdge(tree=0, conditioned=(a, b), parents=(a, b)))
                continue
            index: Dict[FrozenSet[int], int] = {_members(e): i for i, e in enumerate(trees[t - 1])}
            left = index.get(frozenset(cond) | {a})
            right = index.get(frozenset(cond) | {b})
            if left is None or right is None:
                raise ParameterError(f"structure matrix column for variable {a + 1} is not regular")
            tree.append(VineEdge(tree=t, conditioned=(a, b), conditioning=cond, parents=(left, right)))
        trees.append(tree)
    structure = VineStructure(kind=kind, dim=d, trees=trees)
    check_proximity(structure)
    return structure


def cvine_order(weights: np.ndarray) -> List[int]:
    """Descending total dependence, root first"""
    scores = np.abs(weights).sum(axis=1) - np.abs(np.diag(weights))
    return [int(i) for i in np.argsort(-scores, kind="stable")]


def dvine_order(weights: np.ndarray) -> List[int]:
    """Greedy path grown from the strongest pair toward the strongest neighbour at either end"""
    w = np.abs(np.array(weights, dtype=float))
    d = w.shape[0]
    np.fill_diagonal(w, -np.inf)
    i, j = np.unravel_index(int(np.argmax(w)), w.shape)
    path = [int(min(i, j)), int(max(i, j))]
    left = set(range(d)) - set(path)
    while left:
        rest = sorted(left)
        head = max(rest, key=lambda k: w[path[0], k])
        tail = max(rest, key=lambda k: w[path[-1], k])
        if w[path[0], head] > w[path[-1], tail]:
            path.insert(0, head)
            left.discard(head)
        else:
            path.append(tail)
            left.discard(tail)
    return path


def maximum_spanning_pairs(n_nodes: int, weights: Dict[Tuple[int, int], float]) -> List[Tuple[int, int]]:
    graph = nx.Graph()
    graph.add_nodes_from(range(n_nodes))
    for (i, j), value in sorted(weights.items()):
        graph.add_edge(i, j, weight=abs(value))
    tree = nx.maximum_spanning_tree(graph, weight="weight", algorithm="kruskal")
    return sorted(tuple(sorted((int(i), int(j)))) for i, j in tree.edges())


def admissible_pairs(tree: List[VineEdge]) -> List[Tuple[int, int]]:
    return [(i, j) for i, j in combinations(range(len(tree)), 2) if is_admissible(tree[i], tree[j])]
