"""ROUGE-1, ROUGE-L and exact-match METEOR.

All three lowercase and split on anything that is not a letter or digit.
METEOR uses exact unigram matches only (no stemming or synonyms), so its
values are comparable only with other runs of this implementation.
"""

from __future__ import annotations

import re
from collections import Counter

import numpy as np

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def _f1(overlap: int, n_cand: int, n_ref: int) -> float:
    if overlap == 0:
        return 0.0
    p = overlap / n_cand
    r = overlap / n_ref
    return 2 * p * r / (p + r)


def rouge1(candidate: str, reference: str) -> float:
    c, r = tokenize(candidate), tokenize(reference)
    if not c and not r:
        return 1.0
    if not c or not r:
        return 0.0
    overlap = sum((Counter(c) & Counter(r)).values())
    return _f1(overlap, len(c), len(r))


def lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rougeL(candidate: str, reference: str) -> float:
    c, r = tokenize(candidate), tokenize(reference)
    if not c and not r:
        return 1.0
    if not c or not r:
        return 0.0
    return _f1(lcs_length(c, r), len(c), len(r))


def count_chunks(pairs: list[tuple[int, int]]) -> int:
    """Runs of matches contiguous in both candidate and reference."""
    if not pairs:
        return 0
    pairs = sorted(pairs)
    chunks = 1
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    return chunks


def _min_chunk_alignment(c: list[str], r: list[str], matches: int) -> list[tuple[int, int]]:
    """Alignment with ``matches`` pairs and the fewest chunks, solved as a MILP."""
    from scipy.optimize import LinearConstraint, milp
    from scipy.sparse import lil_matrix

    pairs = [(i, j) for i, w in enumerate(c) for j, v in enumerate(r) if w == v]
    index = {p: k for k, p in enumerate(pairs)}
    conts = [(index[(i, j)], index[(i + 1, j + 1)]) for (i, j) in pairs if (i + 1, j + 1) in index]
    nx, ny = len(pairs), len(conts)
    n = nx + ny
    rows = len(c) + len(r) + 1 + 2 * ny
    A = lil_matrix((rows, n))
    lo = np.full(rows, -np.inf)
    hi = np.zeros(rows)
    for k, (i, j) in enumerate(pairs):
        A[i, k] = 1
        A[len(c) + j, k] = 1
    hi[: len(c) + len(r)] = 1
    row = len(c) + len(r)
    A[row, :nx] = 1
    lo[row] = hi[row] = matches
    for t, (a, b) in enumerate(conts):
        A[row + 1 + 2 * t, nx + t] = 1
        A[row + 1 + 2 * t, a] = -1
        A[row + 2 + 2 * t, nx + t] = 1
        A[row + 2 + 2 * t, b] = -1
    cost = np.concatenate([np.zeros(nx), -np.ones(ny)])
    res = milp(
        cost,
        constraints=LinearConstraint(A.tocsr(), lo, hi),
        integrality=np.ones(n),
        bounds=(0, 1),
    )
    if res.x is None:
        raise RuntimeError(f"METEOR alignment solver failed: {res.message}")
    return [pairs[k] for k in range(nx) if res.x[k] > 0.5]


def align(c: list[str], r: list[str]) -> tuple[int, int]:
    """(matches, chunks) for the maximum-match, minimum-chunk alignment."""
    cc, rc = Counter(c), Counter(r)
    matches = sum((cc & rc).values())
    if matches == 0:
        return 0, 0
    if all(cc[w] == 1 and rc[w] == 1 for w in cc & rc):
        # every matched word occurs once per side: the alignment is forced
        pos_r = {w: j for j, w in enumerate(r)}
        pairs = [(i, pos_r[w]) for i, w in enumerate(c) if w in rc]
        return matches, count_chunks(pairs)
    return matches, count_chunks(_min_chunk_alignment(c, r, matches))


def meteor(candidate: str, reference: str, alpha: float = 0.9, beta: float = 3.0, gamma: float = 0.5) -> float:
    c, r = tokenize(candidate), tokenize(reference)
    m, chunks = align(c, r)
    if m == 0:
        return 0.0
    p = m / len(c)
    rec = m / len(r)
    fmean = p * rec / (alpha * p + (1 - alpha) * rec)
    penalty = gamma * (chunks / m) ** beta
    return fmean * (1 - penalty)
