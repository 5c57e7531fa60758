"""Exact covers of fixed-weight bit strings by sets that are bijective on k positions.

Bit strings are integers; copy 0 is the most significant of the N bits.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

from .errors import DesignSearchError

MAX_N = 8


def bits(s: int, N: int) -> str:
    return format(s, f"0{N}b") if N else ""


def parse_bits(text: str) -> int:
    return int(text, 2) if text else 0


def bit_at(s: int, pos: int, N: int) -> int:
    return (s >> (N - 1 - pos)) & 1


def pattern(s: int, positions, N: int) -> int:
    """Bits of ``s`` at ``positions``, read as a k-bit integer."""
    out = 0
    for p in positions:
        out = (out << 1) | bit_at(s, p, N)
    return out


def is_bijective(strings, positions, N: int) -> bool:
    k = len(positions)
    return len(strings) == 1 << k and len({pattern(s, positions, N) for s in strings}) == 1 << k


def first_bijective_positions(strings, N: int, k: int) -> tuple[int, ...] | None:
    """Lexicographically first k-subset of copies on which ``strings`` is bijective."""
    for K in itertools.combinations(range(N), k):
        if is_bijective(strings, K, N):
            return K
    return None


def design_parameters(N: int, j: int) -> tuple[int, int, int]:
    """(k, n, L) for weight-j strings on N copies."""
    k = min(j, N - j)
    c = math.comb(N, j)
    lcm = math.lcm(1 << k, c)
    return k, lcm // c, lcm >> k


@dataclass(frozen=True)
class CoveringDesign:
    N: int
    j: int
    k: int
    sets: tuple[tuple[int, ...], ...]
    n: int
    kept_positions: tuple[tuple[int, ...], ...]

    @property
    def L(self) -> int:
        return len(self.sets)

    def multiplicities(self) -> dict[int, int]:
        counts = {s: 0 for s in range(1 << self.N) if bin(s).count("1") == self.j}
        for block in self.sets:
            for s in block:
                counts[s] = counts.get(s, 0) + 1
        return counts

    def violations(self) -> list[str]:
        """Human-readable list of broken invariants (empty when valid)."""
        out = []
        k, n, L = design_parameters(self.N, self.j)
        if (self.k, self.n, self.L) != (k, n, L):
            out.append(f"(k, n, L) = {(self.k, self.n, self.L)}, expected {(k, n, L)}")
        for s, m in self.multiplicities().items():
            if bin(s).count("1") != self.j:
                out.append(f"{bits(s, self.N)} has the wrong weight")
            elif m != self.n:
                out.append(f"{bits(s, self.N)} appears {m} times")
        if len(self.kept_positions) != len(self.sets):
            out.append("kept_positions and sets differ in length")
        for block, K in zip(self.sets, self.kept_positions):
            if len(set(block)) != len(block):
                out.append(f"set {block} repeats a string")
            if len(K) != self.k or not is_bijective(block, K, self.N):
                out.append(f"set {[bits(s, self.N) for s in block]} not bijective on {K}")
        return out

    def as_strings(self) -> list[list[str]]:
        return [[bits(s, self.N) for s in block] for block in self.sets]

    @classmethod
    def from_sets(cls, N: int, j: int, sets) -> "CoveringDesign":
        """Design from explicit sets (ints or bit strings); kept positions are derived."""
        k, n, _ = design_parameters(N, j)
        blocks = tuple(tuple(parse_bits(s) if isinstance(s, str) else int(s) for s in b)
                       for b in sets)
        kept = []
        for b in blocks:
            K = first_bijective_positions(b, N, k)
            if K is None:
                raise DesignSearchError(f"set {[bits(s, N) for s in b]} is bijective on no {k} copies")
            kept.append(K)
        return cls(N, j, k, blocks, n, tuple(kept))


def _search(N: int, j: int, k: int) -> list[list[int]] | None:
    """Depth-first search over families of distinct k-subsets with b-matching.

    A family of L subsets K_1 < ... < K_L (lexicographic) is extended one
    subset at a time.  Each subset contributes 2^k slots, one per pattern
    on K; a slot must be filled by a weight-j string carrying that pattern
    and every string may fill at most n slots.  Feasibility of a partial
    family is decided exactly by augmenting paths, which prunes the
    search; a full family with a complete assignment is an exact cover.
    """
    strings = [s for s in range(1 << N) if bin(s).count("1") == j]
    C = len(strings)
    _, n, L = design_parameters(N, j)
    subsets = list(itertools.combinations(range(N), k))
    groups = []
    for K in subsets:
        g = [[] for _ in range(1 << k)]
        for i, s in enumerate(strings):
            g[pattern(s, K, N)].append(i)
        # descending candidate order
        groups.append([x[::-1] for x in g])

    def match(family):
        slots = [groups[ki][q] for ki in family for q in range(1 << k)]
        owner: list[list[int]] = [[] for _ in range(C)]
        assign = [-1] * len(slots)

        def augment(si, seen):
            for x in slots[si]:
                if x in seen:
                    continue
                seen.add(x)
                if len(owner[x]) < n:
                    owner[x].append(si)
                    assign[si] = x
                    return True
                for sj in list(owner[x]):
                    if augment(sj, seen):
                        owner[x].remove(sj)
                        owner[x].append(si)
                        assign[si] = x
                        return True
            return False

        for si in range(len(slots)):
            if not augment(si, set()):
                return None
        return assign

    family: list[int] = []

    def extend(start):
        assign = match(family)
        if assign is None:
            return None
        if len(family) == L:
            return assign
        for ki in range(start, len(subsets) - (L - len(family) - 1)):
            family.append(ki)
            found = extend(ki + 1)
            if found is not None:
                return found
            family.pop()
        return None

    assign = extend(0)
    if assign is None:
        return None
    return [[strings[assign[b * (1 << k) + q]] for q in range(1 << k)] for b in range(L)]


@lru_cache(maxsize=None)
def build_covering_design(N: int, j: int, k: int | None = None,
                          max_n: int = MAX_N) -> CoveringDesign:
    """Deterministic exact cover for weight-j strings on N copies.

    Raises DesignSearchError when the search space is exhausted.
    """
    if not 0 <= j <= N:
        raise ValueError(f"need 0 <= j <= N, got j={j}, N={N}")
    if N > max_n:
        raise ValueError(f"N={N} exceeds the supported bound {max_n}")
    k_expected = min(j, N - j)
    if k is None:
        k = k_expected
    if k != k_expected:
        raise ValueError(f"k must equal min(j, N-j) = {k_expected}, got {k}")
    blocks = _search(N, j, k)
    if blocks is None:
        raise DesignSearchError(f"no design found for N={N}, j={j}, k={k}")
    design = CoveringDesign.from_sets(N, j, blocks)
    bad = design.violations()
    if bad:
        raise DesignSearchError("search returned an invalid design: " + "; ".join(bad))
    return design


def equivalent_up_to_relabeling(a: CoveringDesign, b: CoveringDesign,
                                allow_complement: bool = True) -> bool:
    """Whether some permutation of copies (and optionally a global bit flip)
    maps the set family of ``a`` onto that of ``b``, ignoring set order."""
    if (a.N, a.j, a.L) != (b.N, b.j, b.L):
        return False
    N = a.N
    target = sorted(sorted(block) for block in b.sets)
    full = (1 << N) - 1
    for perm in itertools.permutations(range(N)):
        for flip in ((0, full) if allow_complement else (0,)):
            def image(s):
                out = 0
                for new_pos in range(N):
                    out = (out << 1) | bit_at(s, perm[new_pos], N)
                return out ^ flip
            mapped = sorted(sorted(image(s) for s in block) for block in a.sets)
            if mapped == target:
                return True
    return False
