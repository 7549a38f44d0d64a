"""Best-prototype-pair candidate extraction.

Every query cell is paired with the support cell maximizing cosine
similarity over the enhanced feature space.  Query cells whose best
prototype is an annotated keypoint cell (or one of its four adjacent
cells) become candidate keypoints of that identity; the rest are
rejected as background.  One-to-many by construction, so multiple
instances yield multiple candidates per identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelMismatch, ShapeMismatch, ValidationError, ZeroVector
from .features import FeatureMap, GridIndex
from .prototypes import PrototypeStore

# Channel-block width for the blocked inner-product kernel.
SIM_BLOCK = 1024


@dataclass(frozen=True)
class MatchConfig:
    cand_threshold: float = 0.0
    nms_radius: int = 2

    def __post_init__(self) -> None:
        if self.nms_radius < 0:
            raise ValidationError("nms_radius must be >= 0")


@dataclass(frozen=True)
class CandidateKeypoint:
    identity: int
    cell: GridIndex
    score: float


def cosine_similarity(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeMismatch(f"length mismatch {x.shape} vs {y.shape}")
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise ZeroVector("cosine similarity of a zero vector")
    return float(np.dot(x, y) / (nx * ny))


def _normalized_rows(fmap: FeatureMap) -> tuple[np.ndarray, np.ndarray]:
    """L2-normalized (P, C) rows plus a mask of zero-norm cells."""
    flat = fmap.flat_view().astype(np.float32, copy=True)
    norms = np.linalg.norm(flat, axis=1)
    zero = norms == 0.0
    norms[zero] = 1.0
    flat /= norms[:, None]
    return flat, zero


def similarity_matrix(support: FeatureMap, query: FeatureMap) -> np.ndarray:
    """(P_s, P_q) matrix of cosine similarities between cell descriptors.

    Rows are pre-normalized and the inner products are accumulated over
    channel blocks.  Zero-norm cells (degenerate descriptors) get -1
    everywhere so they can never win an argmax.
    """
    if support.c != query.c:
        raise ChannelMismatch(f"channels differ: {support.c} vs {query.c}")
    a, a_zero = _normalized_rows(support)
    b, b_zero = _normalized_rows(query)
    s = np.zeros((a.shape[0], b.shape[0]), dtype=np.float32)
    for start in range(0, a.shape[1], SIM_BLOCK):
        stop = start + SIM_BLOCK
        s += a[:, start:stop] @ b[:, start:stop].T
    np.clip(s, -1.0, 1.0, out=s)
    s[a_zero, :] = -1.0
    s[:, b_zero] = -1.0
    return s


def best_prototypes(s: np.ndarray) -> np.ndarray:
    """Per-query-column argmax over support rows (ties: smallest row)."""
    return np.argmax(s, axis=0)


def nms(cands: list[CandidateKeypoint], radius: int) -> list[CandidateKeypoint]:
    """Greedy Chebyshev non-maximum suppression over one identity's candidates."""
    ordered = sorted(cands, key=lambda c: (-c.score, c.cell.row, c.cell.col))
    kept: list[CandidateKeypoint] = []
    for cand in ordered:
        suppressed = any(
            max(abs(cand.cell.row - k.cell.row), abs(cand.cell.col - k.cell.col))
            <= radius
            for k in kept
        )
        if not suppressed:
            kept.append(cand)
    return kept


def extract_candidates(
    store: PrototypeStore, query_enhanced: FeatureMap, cfg: MatchConfig
) -> list[CandidateKeypoint]:
    """BPP extraction + weak threshold + per-identity NMS.

    A candidate's score is its cosine similarity to the identity's primary
    keypoint cell (not to the possibly-adjacent matched cell), so the best
    localized cell ranks first in NMS.
    """
    zsb = store.enhanced_support
    if zsb.c != query_enhanced.c:
        raise ChannelMismatch(
            f"channels differ: {zsb.c} vs {query_enhanced.c}"
        )
    s = similarity_matrix(zsb, query_enhanced)
    ibpp = best_prototypes(s)
    w_s = zsb.w_f
    w_q = query_enhanced.w_f

    targets: dict[int, list[int]] = {}
    kp_flat: dict[int, int] = {}
    for k in sorted(store.keypoints):
        proto = store.keypoints[k]
        kp_flat[k] = proto.cell.flat(w_s)
        cells = {proto.cell.flat(w_s)}
        cells.update(c.flat(w_s) for c in proto.adjacent_cells)
        for f in cells:
            targets.setdefault(f, []).append(k)

    per_identity: dict[int, list[CandidateKeypoint]] = {k: [] for k in kp_flat}
    for j, i in enumerate(ibpp):
        for k in targets.get(int(i), ()):
            score = float(s[kp_flat[k], j])
            if score > cfg.cand_threshold:
                per_identity[k].append(
                    CandidateKeypoint(k, GridIndex(j // w_q, j % w_q), score)
                )

    out: list[CandidateKeypoint] = []
    for k in sorted(per_identity):
        out.extend(nms(per_identity[k], cfg.nms_radius))
    return out
