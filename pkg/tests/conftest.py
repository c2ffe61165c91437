import numpy as np
import pytest

from hinrec.hin import HinGraph, HinSchema, load_graph
from hinrec.synth import write_dataset
from hinrec.util import derive_rng, read_json

MOVIE_SCHEMA_TEXT = """\
# movie HIN
node_types: User, Movie, Actor, Director
watch: User -> Movie ~ watched
act: Actor -> Movie ~ acted
direct: Director -> Movie ~ directed
interaction_relation: watch
"""

WATCH, WATCHED, ACT, ACTED, DIRECT, DIRECTED = 1, 2, 3, 4, 5, 6


@pytest.fixture(scope="session")
def movie_schema():
    return HinSchema.parse(MOVIE_SCHEMA_TEXT)


def graph_from(schema, nodes, edges):
    """Build a graph from (string_id, type) nodes and (src, rel_name, dst) edges."""
    order = {sid: k for k, (sid, _) in enumerate(sorted(nodes, key=lambda nt: schema.type_index(nt[1])))}
    dense_edges = [
        (schema.by_name(rel).rid, order[src], order[dst]) for src, rel, dst in edges
    ]
    return HinGraph.from_edges(schema, sorted(nodes, key=lambda nt: schema.type_index(nt[1])), dense_edges)


@pytest.fixture
def small_movie_graph(movie_schema):
    """Two users, three movies, two actors, one director.

    U0 watches M0, M1; U1 watches M1, M2. A0 acts in M0, M1, M2; A1 in M2.
    D0 directs all movies.
    """
    nodes = [
        ("U0", "User"), ("U1", "User"),
        ("M0", "Movie"), ("M1", "Movie"), ("M2", "Movie"),
        ("A0", "Actor"), ("A1", "Actor"),
        ("D0", "Director"),
    ]
    edges = [
        ("U0", "watch", "M0"), ("U0", "watch", "M1"),
        ("U1", "watch", "M1"), ("U1", "watch", "M2"),
        ("A0", "act", "M0"), ("A0", "act", "M1"), ("A0", "act", "M2"),
        ("A1", "act", "M2"),
        ("D0", "direct", "M0"), ("D0", "direct", "M1"), ("D0", "direct", "M2"),
    ]
    return graph_from(movie_schema, nodes, edges)


@pytest.fixture(scope="session")
def small_planted(tmp_path_factory):
    """A tiny planted-MAM dataset: (graph, split, manifest)."""
    from hinrec.evaluation import split_leave_one_out

    out = tmp_path_factory.mktemp("planted-small")
    write_dataset(out, "planted-mam-small", seed=11)
    schema = HinSchema.from_file(out / "schema.txt")
    graph = load_graph(out / "nodes.tsv", out / "edges.tsv", schema)
    split = split_leave_one_out(graph.interactions(), derive_rng(11, "split"))
    return graph, split, read_json(out / "manifest.json")


def brute_force_metapath_neighbors(graph, path, v):
    """Oracle: enumerate every node sequence following the path, via raw edge lists."""
    adj = {}
    for rel in graph.schema.relations:
        src, dst = graph.edges(rel.rid)
        table = {}
        for s, d in zip(src.tolist(), dst.tolist()):
            table.setdefault(s, []).append(d)
        adj[rel.rid] = table
    if graph.node_type(v) != path.start_type:
        return []
    sequences = [[v]]
    for rid in path.relation_ids:
        nxt = []
        for seq in sequences:
            for w in adj[rid].get(seq[-1], []):
                nxt.append(seq + [w])
        sequences = nxt
    return sorted({seq[-1] for seq in sequences})


def random_hin(rng, max_nodes=50, max_base_relations=3):
    """A random schema plus random edges, for oracle-equivalence sweeps."""
    n_types = int(rng.integers(2, 4))
    type_names = [f"T{k}" for k in range(n_types)]
    n_base = int(rng.integers(1, max_base_relations + 1))
    lines = ["node_types: " + ", ".join(type_names)]
    for b in range(n_base):
        head = type_names[int(rng.integers(n_types))]
        tail = type_names[int(rng.integers(n_types))]
        if head == tail and rng.random() < 0.3:
            lines.append(f"r{b}: {head} -> {tail} ~ r{b}")
        else:
            lines.append(f"r{b}: {head} -> {tail} ~ r{b}x")
    schema = HinSchema.parse("\n".join(lines))

    per_type = rng.integers(2, max(3, max_nodes // n_types + 1), size=n_types)
    nodes = [(f"{t}_{i}", t) for k, t in enumerate(type_names) for i in range(int(per_type[k]))]
    order = {sid: idx for idx, (sid, _) in enumerate(nodes)}
    by_type = {t: [sid for sid, tt in nodes if tt == t] for t in type_names}

    edges = []
    seen_rids = set()
    for rel in schema.relations:
        if rel.rid in seen_rids:
            continue
        seen_rids.update((rel.rid, rel.comp))
        heads, tails = by_type[rel.head], by_type[rel.tail]
        p = rng.uniform(0.05, 0.35)
        for h in heads:
            for t in tails:
                if rng.random() < p:
                    edges.append((rel.rid, order[h], order[t]))
    return HinGraph.from_edges(schema, nodes, edges)


def random_path(schema, rng, max_len=4):
    """A random chained relation sequence, or None if the draw dead-ends."""
    from hinrec.metapath import MetaPath

    rids = [int(rng.integers(1, schema.n_relations + 1))]
    length = int(rng.integers(1, max_len + 1))
    while len(rids) < length:
        tail = schema.relation(rids[-1]).tail
        options = [r.rid for r in schema.relations if r.head == tail]
        if not options:
            break
        rids.append(int(options[int(rng.integers(len(options)))]))
    return MetaPath.from_relations(schema, rids)
