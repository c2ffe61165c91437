"""Meta-paths: count encodings, reachability, subgraphs, neighbor sampling.

A meta-path is a chain of relation ids. Its fixed-length encoding counts
relation multiplicities; a set of paths is encoded as the L2-normalized
sum of member encodings. Reachability composes per-relation adjacency as
boolean sparse matrices, so only connectivity matters, never instance
counts.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .hin import HinGraph, HinSchema

USER_SYMMETRIC = "user-symmetric"
ITEM_SYMMETRIC = "item-symmetric"
USER_TO_ITEM = "user-to-item"
PATH_FORMS = (USER_SYMMETRIC, ITEM_SYMMETRIC, USER_TO_ITEM)

DEFAULT_MAX_PATH_LEN = 8


class MetaPathError(ValueError):
    pass


@dataclass(frozen=True)
class MetaPath:
    relation_ids: tuple[int, ...]
    node_types: tuple[str, ...]

    def __post_init__(self):
        if not self.relation_ids:
            raise MetaPathError("meta-path needs at least one relation")
        if len(self.node_types) != len(self.relation_ids) + 1:
            raise MetaPathError("node type sequence length must be relation count + 1")

    @classmethod
    def from_relations(cls, schema: HinSchema, relation_ids) -> "MetaPath":
        rids = tuple(int(r) for r in relation_ids)
        types = [schema.relation(rids[0]).head]
        for rid in rids:
            rel = schema.relation(rid)
            if rel.head != types[-1]:
                raise MetaPathError(
                    f"relations do not chain: {rel.name} starts at {rel.head}, path is at {types[-1]}"
                )
            types.append(rel.tail)
        return cls(rids, tuple(types))

    def __len__(self) -> int:
        return len(self.relation_ids)

    @property
    def start_type(self) -> str:
        return self.node_types[0]

    @property
    def end_type(self) -> str:
        return self.node_types[-1]

    @property
    def is_symmetric(self) -> bool:
        return self.start_type == self.end_type

    def label(self) -> str:
        """Node-type-initial string, e.g. UMAMU."""
        return "".join(t[0].upper() for t in self.node_types)


def _form_ok(path: MetaPath, form: str | None, schema: HinSchema) -> bool:
    if form is None:
        return True
    if form == USER_SYMMETRIC:
        return path.start_type == path.end_type == schema.user_type
    if form == ITEM_SYMMETRIC:
        return path.start_type == path.end_type == schema.item_type
    if form == USER_TO_ITEM:
        return path.start_type == schema.user_type and path.end_type == schema.item_type
    raise MetaPathError(f"unknown path form {form!r}")


@dataclass(frozen=True)
class MetaPathSet:
    """Ordered, duplicate-free meta-path collection under one form constraint."""

    paths: tuple[MetaPath, ...]
    form: str | None = None
    schema: HinSchema | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        keys = [p.relation_ids for p in self.paths]
        if len(set(keys)) != len(keys):
            raise MetaPathError("duplicate meta-paths in set")
        if self.form is not None:
            if self.schema is None:
                raise MetaPathError("a form-constrained set needs its schema")
            for p in self.paths:
                if not _form_ok(p, self.form, self.schema):
                    raise MetaPathError(f"path {p.label()} violates form {self.form!r}")

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def key(self) -> tuple[tuple[int, ...], ...]:
        return tuple(p.relation_ids for p in self.paths)

    def labels(self) -> list[str]:
        return [p.label() for p in self.paths]

    def contains(self, relation_ids) -> bool:
        return tuple(int(r) for r in relation_ids) in set(self.key())

    def replace(self, paths: tuple[MetaPath, ...]) -> "MetaPathSet":
        return MetaPathSet(paths, self.form, self.schema)


def encode_metapath(schema: HinSchema, path: MetaPath) -> np.ndarray:
    """Relation-multiplicity vector of length n."""
    counts = np.zeros(schema.n_relations, dtype=np.int64)
    for rid in path.relation_ids:
        counts[rid - 1] += 1
    return counts


def encode_set(schema: HinSchema, paths) -> np.ndarray:
    """L2-normalized sum of the member encodings; empty set maps to zero."""
    total = np.zeros(schema.n_relations, dtype=np.float64)
    for path in paths:
        total += encode_metapath(schema, path)
    norm = np.linalg.norm(total)
    if norm == 0.0:
        return total
    return total / norm


def metapath_neighbors(graph: HinGraph, path: MetaPath, v: int) -> np.ndarray:
    """Sorted nodes reachable from v along some instance of the path."""
    if graph.node_type(v) != path.start_type:
        return np.empty(0, dtype=np.int64)
    frontier = np.asarray([v], dtype=np.int64)
    for rid in path.relation_ids:
        indptr, indices = graph.adjacency(rid)
        if len(frontier) == 0:
            return frontier
        chunks = [indices[indptr[u] : indptr[u + 1]] for u in frontier]
        frontier = np.unique(np.concatenate(chunks)) if chunks else frontier[:0]
    return frontier


def path_reachability(graph: HinGraph, path: MetaPath) -> sp.csr_matrix:
    """Boolean reachability over all node pairs, composed relation by relation."""
    mat = graph.relation_matrix(path.relation_ids[0])
    for rid in path.relation_ids[1:]:
        mat = mat @ graph.relation_matrix(rid)
        mat.data.fill(1.0)  # keep boolean semantics; instance counts are irrelevant
    mat.eliminate_zeros()
    return mat


@dataclass(frozen=True)
class MetaPathSubgraph:
    """Homogeneous graph over the path's end type: edges are meta-path neighbor pairs.

    Node ids are type-local. Rows of non-isolated nodes always include the
    self-loop so a node can attend to itself during aggregation; isolated
    nodes have empty rows. Density counts directed non-self edges over
    m*(m-1).
    """

    path: MetaPath
    node_type: str
    m: int
    indptr: np.ndarray = field(repr=False)
    dst: np.ndarray = field(repr=False)
    density: float = 0.0

    def neighbors(self, v: int) -> np.ndarray:
        return self.dst[self.indptr[v] : self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])


def materialize_subgraph(
    graph: HinGraph,
    path: MetaPath,
    threshold: float | None = 0.5,
    self_loops: bool = True,
) -> MetaPathSubgraph | None:
    """Build the meta-path subgraph, or None when its density exceeds the threshold.

    Requires a symmetric path (same start and end node type). With
    ``threshold=None`` the density filter is disabled.
    """
    if not path.is_symmetric:
        raise MetaPathError(f"subgraph requires symmetric meta-path, got {path.label()}")
    t_idx = graph.schema.type_index(path.node_types[0])
    lo, hi = int(graph.type_offsets[t_idx]), int(graph.type_offsets[t_idx + 1])
    m = hi - lo

    reach = path_reachability(graph, path)[lo:hi, lo:hi].tocsr()
    src = np.repeat(np.arange(m), np.diff(reach.indptr))
    dst = reach.indices.astype(np.int64)
    n_plain = int(np.sum(src != dst))
    density = n_plain / (m * (m - 1)) if m > 1 else 0.0
    if threshold is not None and density > threshold:
        return None

    if self_loops and m:
        has_out = np.zeros(m, dtype=bool)
        has_out[src] = True
        loops = np.flatnonzero(has_out)
        src = np.concatenate([src, loops])
        dst = np.concatenate([dst, loops])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        keep = np.ones(len(src), dtype=bool)
        keep[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        src, dst = src[keep], dst[keep]

    indptr = np.zeros(m + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return MetaPathSubgraph(path, path.node_types[0], m, indptr, dst, density)


def sample_neighbors(
    subgraph: MetaPathSubgraph, v: int, fanout: int, rng: np.random.Generator
) -> np.ndarray:
    """Up to ``fanout`` neighbors of v, uniform without replacement, self always kept."""
    if fanout <= 0:
        raise MetaPathError("fanout must be a positive integer")
    row = subgraph.neighbors(v)
    if len(row) <= fanout:
        return row.copy()
    if np.any(row == v):
        picked = rng.choice(row[row != v], size=fanout - 1, replace=False)
        picked = np.concatenate([[v], picked])
    else:
        picked = rng.choice(row, size=fanout, replace=False)
    return np.sort(picked.astype(np.int64))


@dataclass(frozen=True)
class SampledView:
    """One epoch's sampled neighborhood: grouped edge arrays over m nodes.

    Every node has at least one edge; nodes isolated in the subgraph fall
    back to a self-only neighborhood.
    """

    m: int
    indptr: np.ndarray = field(repr=False)
    src: np.ndarray = field(repr=False)
    dst: np.ndarray = field(repr=False)


def sample_view(subgraph: MetaPathSubgraph, fanout: int, rng: np.random.Generator) -> SampledView:
    if fanout <= 0:
        raise MetaPathError("fanout must be a positive integer")
    m = subgraph.m
    degrees = np.diff(subgraph.indptr)
    rows: list[np.ndarray] = []
    for v in range(m):
        if degrees[v] == 0:
            rows.append(np.asarray([v], dtype=np.int64))
        elif degrees[v] <= fanout:
            rows.append(subgraph.neighbors(v))
        else:
            rows.append(sample_neighbors(subgraph, v, fanout, rng))
    counts = np.asarray([len(r) for r in rows], dtype=np.int64)
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    dst = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    src = np.repeat(np.arange(m), counts)
    return SampledView(m, indptr, src, dst)
