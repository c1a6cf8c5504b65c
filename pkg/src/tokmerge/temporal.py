"""Temporal stage: redundancy masks, optimal segmentation, merge-to-first.

A token slot is temporally redundant between consecutive frames when the
cosine similarity of its embeddings exceeds ``tau``. A segment ``[t_s, t_e)``
(1-based, half-open) prunes ``N(t_s, t_e) * (t_e - t_s - 1)`` token
occurrences, where ``N`` counts slots redundant across every consecutive
pair inside the segment; the segmentation maximizing the total prunable
count is found by dynamic programming over all ``O(B^2)`` spans.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import dp_segment
from .core import TEMPORAL_MERGE_MODES, DataError, VideoTokenStream

_WORD_BITS = 64


def _pack_rows(rows: np.ndarray) -> np.ndarray:
    """Pack a (R, N) bool matrix into (R, ceil(N/64)) uint64 bitset rows."""
    rows = np.ascontiguousarray(rows, dtype=bool)
    r, n = rows.shape
    n_words = max((n + _WORD_BITS - 1) // _WORD_BITS, 1)
    packed = np.packbits(rows, axis=1, bitorder="little")
    buf = np.zeros((r, n_words * 8), dtype=np.uint8)
    buf[:, : packed.shape[1]] = packed
    return np.ascontiguousarray(buf.view(np.uint64))


@dataclass(frozen=True)
class RedundancyMask:
    """Per frame-pair redundancy bitsets.

    Row ``m`` (0-based) covers the pair (frame m+1, frame m+2) in 1-based
    numbering; bit ``k`` is set when slot ``k`` is redundant across the pair.
    """

    words: np.ndarray  # (B-1, W) uint64
    n_tokens: int
    n_frames: int

    def __post_init__(self):
        words = np.ascontiguousarray(self.words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[0] != self.n_frames - 1:
            raise DataError(
                f"mask shape {words.shape} inconsistent with {self.n_frames} frames")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @classmethod
    def from_bool(cls, rows: np.ndarray, n_tokens: int | None = None) -> "RedundancyMask":
        rows = np.atleast_2d(np.asarray(rows, dtype=bool))
        if n_tokens is None:
            n_tokens = rows.shape[1]
        return cls(_pack_rows(rows) if rows.size else
                   np.zeros((rows.shape[0], max((n_tokens + 63) // 64, 1)),
                            dtype=np.uint64),
                   n_tokens=int(n_tokens), n_frames=rows.shape[0] + 1)

    def to_bool(self) -> np.ndarray:
        bits = np.unpackbits(self.words.view(np.uint8), axis=1, bitorder="little")
        return bits[:, : self.n_tokens].astype(bool)


def pairwise_redundancy(stream: VideoTokenStream, tau: float) -> RedundancyMask:
    """Mask of slots whose consecutive-frame cosine similarity exceeds tau.

    Zero-norm vectors compare as similarity 0; similarities are clipped to
    [-1, 1] so tau = 1 never marks anything. B = 1 yields an empty mask.
    """
    x = stream.data
    b, n_v, _ = x.shape
    if b == 1:
        return RedundancyMask.from_bool(np.zeros((0, n_v), dtype=bool), n_v)
    norms = np.sqrt(np.einsum("bkd,bkd->bk", x, x, dtype=np.float64))
    dots = np.einsum("bkd,bkd->bk", x[:-1], x[1:], dtype=np.float64)
    denom = norms[:-1] * norms[1:]
    sim = np.zeros_like(dots)
    nz = denom > 0
    sim[nz] = np.clip(dots[nz] / denom[nz], -1.0, 1.0)
    return RedundancyMask.from_bool(sim > tau, n_v)


def _check_span(mask: RedundancyMask, t_s: int, t_e: int) -> None:
    if not 1 <= t_s < t_e <= mask.n_frames + 1:
        raise DataError(
            f"span [{t_s}, {t_e}) out of range for {mask.n_frames} frames")


def _persistent_words(mask: RedundancyMask, t_s: int, t_e: int) -> np.ndarray:
    """AND of mask rows covering pairs (t_s, t_s+1) .. (t_e-2, t_e-1).

    Callers guarantee t_e - t_s >= 2 (the reduction is never empty).
    """
    return np.bitwise_and.reduce(mask.words[t_s - 1 : t_e - 2], axis=0)


def segment_gain(mask: RedundancyMask, t_s: int, t_e: int) -> int:
    """Prunable-token count of span [t_s, t_e): N(t_s, t_e) * (t_e - t_s - 1)."""
    _check_span(mask, t_s, t_e)
    if t_e - t_s == 1:
        return 0
    n = int(np.bitwise_count(_persistent_words(mask, t_s, t_e)).sum())
    return n * (t_e - t_s - 1)


@dataclass(frozen=True)
class SegmentPlan:
    """Optimal segmentation with its DP tables.

    ``boundaries`` is the ascending 1-based list t_1=1 < ... < t_{K+1}=B+1;
    ``dp``/``prev`` are indexed by frame number (entries 1..B+1 are
    meaningful). ``gains[i]`` is the prunable count of segment
    [boundaries[i], boundaries[i+1]).
    """

    boundaries: tuple[int, ...]
    dp: np.ndarray
    prev: np.ndarray
    gains: tuple[int, ...]
    total_gain: int

    def __post_init__(self):
        b_plus_1 = self.boundaries[-1]
        if self.boundaries[0] != 1 or list(self.boundaries) != sorted(set(self.boundaries)):
            raise DataError(f"invalid boundaries {self.boundaries}")
        if sum(self.gains) != self.total_gain or self.total_gain != int(self.dp[b_plus_1]):
            raise DataError("segment gains inconsistent with dp table")
        for arr in (self.dp, self.prev):
            arr.setflags(write=False)

    @property
    def n_segments(self) -> int:
        return len(self.boundaries) - 1

    def segments(self) -> tuple[tuple[int, int], ...]:
        return tuple(zip(self.boundaries[:-1], self.boundaries[1:]))


def optimal_segmentation(mask: RedundancyMask) -> SegmentPlan:
    """Globally optimal segmentation by DP; argmax ties go to the smallest start."""
    b = mask.n_frames
    dp, prev = dp_segment(mask.words, b)
    bounds = [b + 1]
    while bounds[-1] > 1:
        bounds.append(int(prev[bounds[-1]]))
    bounds.reverse()
    gains = tuple(segment_gain(mask, s, e) for s, e in zip(bounds[:-1], bounds[1:]))
    return SegmentPlan(
        boundaries=tuple(bounds),
        dp=dp,
        prev=prev,
        gains=gains,
        total_gain=int(dp[b + 1]),
    )


@dataclass(frozen=True)
class SegmentMerge:
    """Merged view of one segment [start, end), 1-based half-open.

    ``redundant_idx`` are the slots persistent across the whole segment
    (empty for single-frame segments); ``merged_values`` are their
    first-frame representatives after merging; ``survivor_idx`` is the
    complement, which survives untouched in every frame of the segment.
    """

    start: int
    end: int
    redundant_idx: np.ndarray
    merged_values: np.ndarray
    survivor_idx: np.ndarray

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class TemporalMergeResult:
    stream: VideoTokenStream
    segments: tuple[SegmentMerge, ...]
    original_count: int
    pruned_count: int

    @property
    def survivor_count(self) -> int:
        return self.original_count - self.pruned_count


def apply_temporal_merge(
    stream: VideoTokenStream,
    plan: SegmentPlan,
    mask: RedundancyMask,
    mode: str = "mean",
) -> TemporalMergeResult:
    """Merge each segment's persistent slots into their first occurrence.

    mode="mean" replaces the first-frame value with the arithmetic mean of
    all occurrences in the segment; mode="first" keeps it verbatim. The
    number of removed occurrences equals ``plan.total_gain``.
    """
    if mode not in TEMPORAL_MERGE_MODES:
        raise DataError(f"unknown merge mode {mode!r}")
    b, n_v = stream.frames, stream.tokens_per_frame
    if mask.n_frames != b or mask.n_tokens != n_v:
        raise DataError(
            f"mask for {mask.n_frames}x{mask.n_tokens} does not match "
            f"stream {b}x{n_v}")
    if plan.boundaries[-1] != b + 1:
        raise DataError(
            f"plan covers {plan.boundaries[-1] - 1} frames, stream has {b}")

    data = stream.data
    segments = []
    pruned = 0
    all_slots = np.arange(n_v)
    for s, e in plan.segments():
        if e - s == 1:
            red = np.empty(0, dtype=np.int64)
        else:
            persistent = _persistent_words(mask, s, e)
            bits = np.unpackbits(persistent.view(np.uint8), bitorder="little")
            red = np.flatnonzero(bits[:n_v]).astype(np.int64)
        surv = np.setdiff1d(all_slots, red, assume_unique=True)
        if red.size:
            occ = data[s - 1 : e - 1, red, :]
            if mode == "mean":
                merged = occ.mean(axis=0, dtype=np.float64).astype(np.float32)
            else:
                merged = occ[0].copy()
        else:
            merged = np.empty((0, stream.dim), dtype=np.float32)
        pruned += red.size * (e - s - 1)
        for arr in (red, merged, surv):
            arr.setflags(write=False)
        segments.append(SegmentMerge(start=s, end=e, redundant_idx=red,
                                     merged_values=merged, survivor_idx=surv))

    if pruned != plan.total_gain:
        raise DataError(
            f"pruned {pruned} occurrences but plan promised {plan.total_gain}; "
            "plan/mask mismatch")
    return TemporalMergeResult(
        stream=stream,
        segments=tuple(segments),
        original_count=b * n_v,
        pruned_count=pruned,
    )
