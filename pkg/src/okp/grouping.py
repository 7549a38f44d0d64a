"""Edge-based grouping of candidate keypoints into object instances.

Candidates form the vertices of a graph whose edges are scored by comparing
the feature distribution along the candidate segment with the corresponding
support edge prototype.  Low-similarity and conflicting edges are pruned,
and each remaining connected component is one instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, ValidationError, ZeroVector
from .features import FeatureMap, GridIndex
from .matching import CandidateKeypoint, cosine_similarity
from .prototypes import PrototypeStore, edge_descriptor


@dataclass(frozen=True)
class GroupConfig:
    tau_e: float = 0.3
    min_keypoints_override: int | None = None

    def __post_init__(self) -> None:
        if not -1.0 <= self.tau_e <= 1.0:
            raise ValidationError("tau_e must lie in [-1, 1]")


@dataclass(frozen=True)
class GraphEdge:
    a: int  # vertex index
    b: int
    phi: float


@dataclass
class InstanceGraph:
    vertices: list[CandidateKeypoint]
    edges: list[GraphEdge]
    w_f: int  # query grid width, for flat-index ordering


@dataclass
class Instance:
    keypoints: dict[int, tuple[GridIndex, float]]  # identity -> (cell, score)
    cohesion: float = 0.0


def min_keypoints_rule(n_kp: int) -> int:
    """Minimum valid keypoints for a surviving instance."""
    return max(2, n_kp - 1) if n_kp <= 4 else 4


def edge_similarity(cand_desc: np.ndarray, proto_desc: np.ndarray) -> float:
    """Mean per-segment cosine between a candidate edge and its prototype.

    Zero-vector segments contribute -1.
    """
    if cand_desc.shape != proto_desc.shape:
        raise ShapeMismatch(
            f"descriptor shapes differ: {cand_desc.shape} vs {proto_desc.shape}"
        )
    total = 0.0
    for cd, pd in zip(cand_desc, proto_desc):
        try:
            total += cosine_similarity(cd, pd)
        except ZeroVector:
            total += -1.0
    return total / len(cand_desc)


def build_initial_graph(
    cands: list[CandidateKeypoint],
    store: PrototypeStore,
    query_enhanced: FeatureMap,
) -> InstanceGraph:
    """Score an edge for every candidate pair whose identity pair has a prototype."""
    edges: list[GraphEdge] = []
    for ia in range(len(cands)):
        for ib in range(ia + 1, len(cands)):
            va, vb = cands[ia], cands[ib]
            if va.identity == vb.identity:
                continue
            if va.identity > vb.identity:
                va, vb = vb, va
                lo, hi = ib, ia
            else:
                lo, hi = ia, ib
            proto = store.edges.get((va.identity, vb.identity))
            if proto is None:
                continue
            cand_desc = edge_descriptor(
                query_enhanced, va.cell, vb.cell, store.n_seg
            )
            edges.append(GraphEdge(lo, hi, edge_similarity(cand_desc, proto)))
    return InstanceGraph(list(cands), edges, query_enhanced.w_f)


def prune(graph: InstanceGraph, cfg: GroupConfig) -> InstanceGraph:
    """Drop weak edges, then resolve same-identity conflicts at every vertex.

    After thresholding, an edge survives only if it is the best-scoring edge
    in both of its (vertex, other-endpoint-identity) groups; ties prefer the
    edge whose other endpoint has the smaller flat cell index.
    """
    strong = [e for e in graph.edges if e.phi >= cfg.tau_e]
    w = graph.w_f

    def group_best(
        groups: dict[tuple[int, int], GraphEdge], vertex: int, other: int, e: GraphEdge
    ) -> None:
        ident = graph.vertices[other].identity
        key = (vertex, ident)
        cur = groups.get(key)
        if cur is None:
            groups[key] = e
            return
        cur_other = cur.b if cur.a == vertex else cur.a
        if (-e.phi, graph.vertices[other].cell.flat(w)) < (
            -cur.phi,
            graph.vertices[cur_other].cell.flat(w),
        ):
            groups[key] = e

    best: dict[tuple[int, int], GraphEdge] = {}
    for e in strong:
        group_best(best, e.a, e.b, e)
        group_best(best, e.b, e.a, e)
    kept = [
        e
        for e in strong
        if best[(e.a, graph.vertices[e.b].identity)] is e
        and best[(e.b, graph.vertices[e.a].identity)] is e
    ]
    return InstanceGraph(graph.vertices, kept, graph.w_f)


def connected_components(graph: InstanceGraph) -> list[InstanceGraph]:
    """Undirected components (isolated vertices become singletons).

    Components are ordered by the smallest flat cell index they contain;
    vertices within a component keep their original relative order.
    """
    n = len(graph.vertices)
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in graph.edges:
        ra, rb = find(e.a), find(e.b)
        if ra != rb:
            parent[rb] = ra

    members: dict[int, list[int]] = {}
    for v in range(n):
        members.setdefault(find(v), []).append(v)

    w = graph.w_f
    comps = []
    for verts in members.values():
        index_of = {v: i for i, v in enumerate(verts)}
        edges = [
            GraphEdge(index_of[e.a], index_of[e.b], e.phi)
            for e in graph.edges
            if e.a in index_of
        ]
        comps.append(InstanceGraph([graph.vertices[v] for v in verts], edges, w))
    comps.sort(key=lambda g: min(v.cell.flat(w) for v in g.vertices))
    return comps


def assemble_instances(
    components: list[InstanceGraph], store: PrototypeStore, cfg: GroupConfig
) -> list[Instance]:
    """Resolve residual same-identity vertices and apply the minimum-keypoint filter."""
    min_kp = (
        cfg.min_keypoints_override
        if cfg.min_keypoints_override is not None
        else min_keypoints_rule(store.n_kp)
    )
    instances: list[Instance] = []
    for comp in components:
        w = comp.w_f
        total_phi = [0.0] * len(comp.vertices)
        for e in comp.edges:
            total_phi[e.a] += e.phi
            total_phi[e.b] += e.phi
        chosen: dict[int, int] = {}
        for i, v in enumerate(comp.vertices):
            cur = chosen.get(v.identity)
            if cur is None or (
                -total_phi[i],
                -v.score,
                v.cell.flat(w),
            ) < (-total_phi[cur], -comp.vertices[cur].score, comp.vertices[cur].cell.flat(w)):
                chosen[v.identity] = i
        if len(chosen) < min_kp:
            continue
        kept = set(chosen.values())
        internal = [e.phi for e in comp.edges if e.a in kept and e.b in kept]
        cohesion = float(np.mean(internal)) if internal else 0.0
        instances.append(
            Instance(
                keypoints={
                    k: (comp.vertices[i].cell, comp.vertices[i].score)
                    for k, i in sorted(chosen.items())
                },
                cohesion=cohesion,
            )
        )
    return instances


def group_candidates(
    cands: list[CandidateKeypoint],
    store: PrototypeStore,
    query_enhanced: FeatureMap,
    cfg: GroupConfig,
) -> list[Instance]:
    """Full grouping stage: graph -> prune -> components -> instances."""
    graph = build_initial_graph(cands, store, query_enhanced)
    pruned = prune(graph, cfg)
    return assemble_instances(connected_components(pruned), store, cfg)
