"""Slow reference implementations used to check the fast code paths."""

from functools import lru_cache
from itertools import combinations


def is_subsequence(sub, seq) -> bool:
    it = iter(seq)
    return all(ch in it for ch in sub)


def lcs_brute(a: str, b: str) -> int:
    """Longest common subsequence by trying every subsequence of the shorter input."""
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    for k in range(len(short), 0, -1):
        for idx in combinations(range(len(short)), k):
            if is_subsequence([short[i] for i in idx], long_):
                return k
    return 0


def edit_distance_brute(a: str, b: str) -> int:
    """Textbook recursion over prefixes (memoised only to keep run time sane)."""
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))
    return d(len(a), len(b))
