"""Positioned incremental affinity propagation over face embeddings.

Plain affinity propagation elects exemplars by exchanging responsibilities
``R`` and availabilities ``A`` over a similarity matrix ``S``. The positioned
variant pins every same-frame pair to the minimum similarity and makes
same-frame peers push each other away in the availability update, so one
frame never contributes two faces to one identity. The incremental variant
keeps ``R`` and ``A`` between segments and seeds the rows and columns of new
vectors from their nearest already-clustered neighbor.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from .model import FaceVector

log = logging.getLogger(__name__)


def default_preference(S: np.ndarray) -> float:
    """Median of the off-diagonal similarities."""
    m = S.shape[0]
    if m < 2:
        return 0.0
    off = S[~np.eye(m, dtype=bool)]
    return float(np.median(off))


def similarity_matrix(embeddings: np.ndarray, frame_of: np.ndarray,
                      preference: float | None = None) -> np.ndarray:
    """Cosine similarity shifted into [-1, 0]; same-frame pairs pinned to -1.

    The diagonal holds the preference, the median off-diagonal value unless
    given explicitly.
    """
    E = np.asarray(embeddings, dtype=float)
    norms = np.linalg.norm(E, axis=1, keepdims=True)
    E = E / norms
    S = E @ E.T - 1.0
    np.clip(S, -1.0, 0.0, out=S)
    frame_of = np.asarray(frame_of)
    S[frame_of[:, None] == frame_of[None, :]] = -1.0
    if preference is None:
        preference = default_preference(S)
    np.fill_diagonal(S, preference)
    return S


def update_responsibilities(S: np.ndarray, R: np.ndarray, A: np.ndarray,
                            damping: float = 0.5) -> np.ndarray:
    m = S.shape[0]
    if m == 1:
        # no competing exemplar: the max term is empty
        R_new = S.copy()
    else:
        rows = np.arange(m)
        AS = A + S
        best = np.argmax(AS, axis=1)
        first = AS[rows, best]
        AS[rows, best] = -np.inf
        second = AS.max(axis=1)
        R_new = S - first[:, None]
        R_new[rows, best] = S[rows, best] - second
    return damping * R + (1.0 - damping) * R_new


def _frame_indicator(frame_of: np.ndarray) -> tuple[sparse.csr_matrix, np.ndarray]:
    _, inv = np.unique(frame_of, return_inverse=True)
    m = len(frame_of)
    G = sparse.csr_matrix((np.ones(m), (inv, np.arange(m))), shape=(inv.max() + 1 if m else 0, m))
    return G, inv


def update_availabilities(R: np.ndarray, A: np.ndarray, frame_of: np.ndarray,
                          damping: float = 0.5, positioned: bool = True) -> np.ndarray:
    """Availability update with same-frame repulsion.

    Off the diagonal, positive responsibilities from ``i``'s same-frame peers
    toward ``k`` are subtracted rather than added. The diagonal is the plain
    sum of positive incoming responsibilities.
    """
    Rp = np.maximum(R, 0.0)
    np.fill_diagonal(Rp, 0.0)
    colsum = Rp.sum(axis=0)
    A_new = np.diag(R)[None, :] + colsum[None, :] - Rp
    if positioned:
        G, inv = _frame_indicator(np.asarray(frame_of))
        # peers of i toward k, i itself excluded; Rp[k, k] == 0 so k drops out too
        peer = np.asarray(G @ Rp)[inv] - Rp
        A_new -= 2.0 * peer
    np.minimum(A_new, 0.0, out=A_new)
    np.fill_diagonal(A_new, colsum)
    return damping * A + (1.0 - damping) * A_new


def assign_exemplars(R: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Row-wise argmax of ``A + R``; ties go to the lowest index."""
    return np.argmax(A + R, axis=1)


def message_passing(S: np.ndarray, R: np.ndarray, A: np.ndarray, frame_of: np.ndarray,
                    damping: float = 0.5, max_iters: int = 200, stable_iters: int = 10,
                    positioned: bool = True, tol: float = 1e-3, patience: int = 20,
                    max_damping: float = 0.9):
    """Iterate until the consensus holds or the iteration cap is reached.

    Consensus means: exemplar assignments unchanged for ``stable_iters``
    rounds, at least one point electing itself with positive evidence, and
    the largest message change below ``tol`` (relative to the largest
    message). Every ``patience`` rounds without consensus the damping factor
    rises by 0.1, up to ``max_damping``, which breaks the oscillations that
    tight clusters of near-duplicate vectors otherwise sustain.

    Returns ``(R, A, iterations, converged)``.
    """
    prev = None
    stable = 0
    converged = False
    it = 0
    since = 0
    for it in range(1, max_iters + 1):
        R_new = update_responsibilities(S, R, A, damping)
        A_new = update_availabilities(R_new, A, frame_of, damping, positioned)
        scale = max(1.0, float(np.abs(R_new).max()), float(np.abs(A_new).max()))
        change = max(float(np.abs(R_new - R).max()), float(np.abs(A_new - A).max())) / scale
        R, A = R_new, A_new
        c = assign_exemplars(R, A)
        elected = bool(np.any(np.diag(A) + np.diag(R) > 0))
        if elected and prev is not None and np.array_equal(c, prev):
            stable += 1
        else:
            stable = 0
        prev = c
        if stable >= stable_iters and change < tol:
            converged = True
            break
        since += 1
        if since >= patience and damping < max_damping:
            damping = min(max_damping, damping + 0.1)
            since = 0
            log.debug("raising damping to %.1f at iteration %d", damping, it)
    if not (np.all(np.isfinite(R)) and np.all(np.isfinite(A))):
        raise FloatingPointError("non-finite message values")
    return R, A, it, converged


def resolve_exemplars(R: np.ndarray, A: np.ndarray, S: np.ndarray,
                      frame_of: np.ndarray) -> tuple[np.ndarray, int]:
    """Turn row-wise argmax choices into a consistent, exclusion-safe labeling.

    Points whose chosen exemplar did not elect itself move to the elected
    exemplar they are most similar to. When two points of one frame still
    share an exemplar, the weaker one takes its next-best free exemplar or
    stands alone. Returns ``(exemplar_of, repairs)``.
    """
    m = S.shape[0]
    if m == 0:
        return np.zeros(0, dtype=int), 0
    C = A + R
    choice = np.argmax(C, axis=1)
    idx = np.arange(m)
    exemplars = idx[choice == idx]
    if exemplars.size == 0:
        exemplars = np.array([int(np.argmax(np.diag(C)))])
    ex_set = set(exemplars.tolist())
    out = choice.copy()
    for i in idx:
        if out[i] not in ex_set:
            out[i] = exemplars[int(np.argmax(S[i, exemplars]))]

    repairs = 0
    frame_of = np.asarray(frame_of)
    order = np.argsort(frame_of, kind="stable")
    bounds = np.flatnonzero(np.diff(frame_of[order])) + 1
    for members in np.split(order, bounds):
        if members.size < 2:
            continue
        # exemplars hold themselves first, then strongest ties
        ranked = sorted(members.tolist(), key=lambda i: (out[i] != i, -S[i, out[i]], i))
        used: set[int] = set()
        for i in ranked:
            e = int(out[i])
            if e in used:
                repairs += 1
                alts = [k for k in exemplars.tolist()
                        if k not in used and frame_of[k] != frame_of[i] and S[i, k] > S[i, i]]
                e = max(alts, key=lambda k: (S[i, k], -k)) if alts else int(i)
                out[i] = e
            used.add(e)
    return out, repairs


def positioned_ap(embeddings: np.ndarray, frame_of: Sequence[int], damping: float = 0.5,
                  max_iters: int = 200, stable_iters: int = 10, preference: float | None = None,
                  positioned: bool = True):
    """Cluster a pooled set from scratch. Returns ``(exemplar_of, iterations, converged)``."""
    frame_of = np.asarray(frame_of)
    S = similarity_matrix(embeddings, frame_of, preference)
    if not positioned:
        S = np.asarray(embeddings) @ np.asarray(embeddings).T - 1.0
        np.clip(S, -1.0, 0.0, out=S)
        np.fill_diagonal(S, default_preference(S) if preference is None else preference)
    m = S.shape[0]
    R = np.zeros((m, m))
    A = np.zeros((m, m))
    R, A, it, conv = message_passing(S, R, A, frame_of, damping, max_iters, stable_iters,
                                     positioned)
    ex, _ = resolve_exemplars(R, A, S, frame_of)
    return ex, it, conv


@dataclass
class MessageState:
    """Message matrices over every vector still held in memory."""

    S: np.ndarray
    R: np.ndarray
    A: np.ndarray
    embeddings: np.ndarray
    frame_of: np.ndarray
    segment_of: np.ndarray
    person_of: np.ndarray
    exemplar_of: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @classmethod
    def empty(cls, dim: int) -> "MessageState":
        z = np.zeros((0, 0))
        e = np.zeros(0, dtype=int)
        return cls(z, z.copy(), z.copy(), np.zeros((0, dim)), e, e.copy(), e.copy(), e.copy())

    @property
    def size(self) -> int:
        return self.R.shape[0]

    def keep(self, mask: np.ndarray) -> "MessageState":
        ix = np.flatnonzero(mask)
        sub = np.ix_(ix, ix)
        # exemplar indices are renumbered; evicted exemplars are dropped
        remap = -np.ones(self.size, dtype=int)
        remap[ix] = np.arange(ix.size)
        ex = remap[self.exemplar_of[ix]] if self.exemplar_of.size else self.exemplar_of
        return MessageState(self.S[sub], self.R[sub], self.A[sub], self.embeddings[ix],
                            self.frame_of[ix], self.segment_of[ix], self.person_of[ix], ex)


def warm_start(state: MessageState, new_embeddings: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Grow ``R`` and ``A`` for ``p`` new vectors.

    Old-old blocks are copied verbatim. A new row copies the row of its
    nearest old vector (by cosine) and the new-new block starts at zero.
    With no old vectors both matrices start at zero.

    A new column copies the column of the nearest old vector that is not an
    elected exemplar. Copying an exemplar's column would enter every
    near-duplicate newcomer as a rival exemplar with full support, and the
    resulting competition dissolves the whole cluster into singletons for
    dozens of rounds. A member's column describes what a newcomer is at
    convergence: a point nobody picks.

    Copying row or column ``i'`` carries ``A(i', i')`` into the off-diagonal
    cells ``A(new, i')`` and ``A(i', new)``. The diagonal availability is an
    unclipped sum of support, while off-diagonal availabilities are never
    positive, so those cells are clipped at zero. Left unclipped, an elected
    exemplar sees its own copies as overwhelmingly available and abandons
    itself, dissolving its cluster.
    """
    m_old = state.size
    p = len(new_embeddings)
    m = m_old + p
    R = np.zeros((m, m))
    A = np.zeros((m, m))
    if m_old == 0 or p == 0:
        R[:m_old, :m_old] = state.R
        A[:m_old, :m_old] = state.A
        return R, A
    new = np.asarray(new_embeddings, dtype=float)
    new = new / np.linalg.norm(new, axis=1, keepdims=True)
    sim = new @ state.embeddings.T
    nearest = np.argmax(sim, axis=1)
    col_src = nearest
    ex = state.exemplar_of
    if ex.size == m_old:
        is_ex = ex == np.arange(m_old)
        if not is_ex.all():
            col_src = np.argmax(np.where(is_ex[None, :], -np.inf, sim), axis=1)
    R[:m_old, :m_old] = state.R
    A[:m_old, :m_old] = state.A
    R[m_old:, :m_old] = state.R[nearest, :]
    A[m_old:, :m_old] = state.A[nearest, :]
    R[:m_old, m_old:] = state.R[:, col_src]
    A[:m_old, m_old:] = state.A[:, col_src]
    np.minimum(A[m_old:, :m_old], 0.0, out=A[m_old:, :m_old])
    np.minimum(A[:m_old, m_old:], 0.0, out=A[:m_old, m_old:])
    return R, A


@dataclass
class SegmentClustering:
    person_ids: list[int]
    iterations: int
    converged: bool
    repairs: int
    n_clusters: int


class PIAP:
    """Stateful per-stream clusterer; one call per segment.

    Person ids are persistent: a cluster inherits the id held by most of its
    already-labelled members, and ids once handed out never change.
    """

    def __init__(self, dim: int = 512, damping: float = 0.5, max_iters: int = 200,
                 stable_iters: int = 10, eviction_segments: int | None = 10):
        self.damping = damping
        self.max_iters = max_iters
        self.stable_iters = stable_iters
        self.eviction_segments = eviction_segments
        self.state = MessageState.empty(dim)
        self._next_person = 0
        self.total_iterations = 0

    def _evict(self, segment_index: int) -> None:
        if self.eviction_segments is None or self.state.size == 0:
            return
        mask = self.state.segment_of > segment_index - self.eviction_segments
        if not mask.all():
            log.debug("evicting %d vectors", int((~mask).sum()))
            self.state = self.state.keep(mask)

    def cluster_segment(self, vectors: Sequence[FaceVector], segment_index: int) -> SegmentClustering:
        if not vectors:
            return SegmentClustering([], 0, True, 0, 0)
        self._evict(segment_index)
        st = self.state
        m_old = st.size
        new_emb = np.stack([fv.embedding for fv in vectors])
        R, A = warm_start(st, new_emb)
        emb = np.vstack([st.embeddings, new_emb])
        frame_of = np.concatenate([st.frame_of, [fv.frame_index for fv in vectors]]).astype(int)
        segment_of = np.concatenate([st.segment_of, np.full(len(vectors), segment_index)]).astype(int)
        S = similarity_matrix(emb, frame_of)
        R, A, it, conv = message_passing(S, R, A, frame_of, self.damping, self.max_iters,
                                         self.stable_iters)
        if not conv:
            log.warning("segment %d: message passing hit the %d-iteration cap",
                        segment_index, self.max_iters)
        exemplar_of, repairs = resolve_exemplars(R, A, S, frame_of)
        person_of = np.concatenate([st.person_of, -np.ones(len(vectors), dtype=int)])
        self._label(exemplar_of, person_of, m_old)
        self.state = MessageState(S, R, A, emb, frame_of, segment_of, person_of, exemplar_of)
        self.total_iterations += it
        return SegmentClustering(person_of[m_old:].tolist(), it, conv, repairs,
                                 len(set(exemplar_of.tolist())))

    def _label(self, exemplar_of: np.ndarray, person_of: np.ndarray, m_old: int) -> None:
        clusters: dict[int, list[int]] = {}
        for i, e in enumerate(exemplar_of.tolist()):
            clusters.setdefault(e, []).append(i)
        votes = []
        for e, members in clusters.items():
            old = [person_of[i] for i in members if i < m_old]
            ids, counts = np.unique(old, return_counts=True) if old else ([], [])
            for pid, cnt in zip(ids, counts):
                votes.append((-int(cnt), int(pid), min(members), e))
        votes.sort()
        taken_person: set[int] = set()
        cluster_person: dict[int, int] = {}
        for _, pid, _, e in votes:
            if e in cluster_person or pid in taken_person:
                continue
            cluster_person[e] = pid
            taken_person.add(pid)
        for e in sorted(clusters, key=lambda e: min(clusters[e])):
            if e not in cluster_person and any(i >= m_old for i in clusters[e]):
                cluster_person[e] = self._next_person
                self._next_person += 1
        for i in range(m_old, len(person_of)):
            person_of[i] = cluster_person[int(exemplar_of[i])]
