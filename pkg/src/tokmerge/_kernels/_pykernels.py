"""Pure-numpy fallback for the hot segmentation kernel.

Same contract as the native extension; used automatically when the compiled
module is unavailable.
"""

from __future__ import annotations

import numpy as np


def dp_segment(words: np.ndarray, n_frames: int):
    """Optimal-gain segmentation over packed redundancy rows.

    ``words`` is the ``(B-1, W)`` uint64 bitset matrix (row m = frame pair
    (m+1, m+2), 1-based). Returns ``(dp, prev)`` as int64 arrays of length
    ``B + 2`` indexed by 1-based frame number: ``dp[i]`` is the maximum
    prunable-token count over frames ``[1, i)`` and ``prev[i]`` the start of
    the final segment, ties broken toward the smallest start.
    """
    b = int(n_frames)
    if words.shape[0] != max(b - 1, 0):
        raise ValueError(
            f"mask has {words.shape[0]} rows, expected {b - 1} for {b} frames")
    dp = np.zeros(b + 2, dtype=np.int64)
    prev = np.zeros(b + 2, dtype=np.int64)
    for i in range(2, b + 2):
        best = int(dp[i - 1])  # j = i-1: single-frame segment, gain 0
        best_j = i - 1
        if i >= 3:
            # AND-suffixes of rows 0..i-3: acc[t] = AND of rows t..i-3,
            # so N(j, i) = popcount(acc[j-1]) for j = 1..i-2.
            rows = words[: i - 2]
            acc = np.bitwise_and.accumulate(rows[::-1], axis=0)[::-1]
            counts = np.bitwise_count(acc).sum(axis=1).astype(np.int64)
            js = np.arange(1, i - 1, dtype=np.int64)
            cand = dp[1 : i - 1] + counts * (i - js - 1)
            top = int(cand.max())
            if top >= best:
                best = top
                best_j = int(js[int(np.argmax(cand))])
        dp[i] = best
        prev[i] = best_j
    prev[1] = 0
    return dp, prev
