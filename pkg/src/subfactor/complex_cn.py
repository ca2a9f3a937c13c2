"""The graph of rank-1 free factor classes: vertices are primitive
conjugacy classes, edges join classes with representatives spanning a
rank-2 free factor.  Includes the X_A sets of vertices disjoint from a
factor A, bounded distance estimation, and the chain-progress verifier.

The graph is locally infinite, so every enumeration here is complexity
bounded and every negative answer at a search budget is flagged as such.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import gcd

from .projection import (
    colors_meet,
    factor_distance,
    farey_adjacent,
    find_disjoint_conjugator,
    primitive_vector,
    project_factor,
)
from .stallings import (
    contained_up_to_conjugacy,
    factor_class,
    is_free_factor,
)
from .words import (
    Word,
    abelianize,
    cyclic_reduce,
    free_reduce,
    is_cyclically_reduced,
)


def is_primitive(w):
    """Whether the cyclic class of w generates a rank-1 free factor."""
    if not w:
        raise ValueError("trivial word")
    if not is_cyclically_reduced(w):
        raise ValueError("expect a cyclically reduced word")
    if _gcd_vec(abelianize(w)) != 1:
        return False
    return is_free_factor(factor_class([w])).is_factor


def _gcd_vec(vec):
    g = 0
    for x in vec:
        g = gcd(g, abs(x))
    return g


def cvertex(w):
    """The rank-1 factor class of a primitive word."""
    if not is_primitive(w):
        raise ValueError("word is not primitive")
    return factor_class([w])


@dataclass(eq=False)
class EdgeResult:
    connected: bool
    certified: bool  # False only when the search budget ran out
    conjugator: Word = None

    def __bool__(self):
        return self.connected


_edge_cache = {}


def is_cn_edge(u, v, conj_len=6):
    """Edge test: do u and v admit representatives spanning a rank-2 free
    factor?  A positive answer carries a conjugator certificate; a negative
    one is certified only when an obstruction rules disjointness out.
    Results are memoized by class codes (searches dominate BFS cost)."""
    if u.rank != 1 or v.rank != 1:
        raise ValueError("vertices must be rank-1 factors")
    if u == v:
        raise ValueError("same class")
    if u.rank_ambient != v.rank_ambient:
        raise ValueError("ambient rank mismatch")
    n = u.rank_ambient
    key = (n, conj_len) + tuple(sorted((u.code, v.code)))
    hit = _edge_cache.get(key)
    if hit is not None:
        return hit
    if 2 > n:
        res = EdgeResult(False, True)
    elif colors_meet(u, v):
        res = EdgeResult(False, True)
    else:
        got = find_disjoint_conjugator(u, v, max_conj_len=conj_len)
        if got is not None:
            res = EdgeResult(True, True, got[0])
        else:
            res = EdgeResult(False, False)
    _edge_cache[key] = res
    return res


def farey_edge_matches(u, v):
    """In rank-2 ambient coordinates the edge relation is Farey adjacency."""
    return farey_adjacent(primitive_vector(u), primitive_vector(v))


# ---------------------------------------------------------------------------
# enumeration of small vertices


def enumerate_cvertices(rank, max_len, cap=None):
    """Primitive classes with cyclic word length <= max_len, deduplicated
    by canonical code, in deterministic order."""
    seen = set()
    out = []
    for length in range(1, max_len + 1):
        for letters in itertools.product(
            [x for s in range(1, rank + 1) for x in (s, -s)], repeat=length
        ):
            if free_reduce(letters) != letters:
                continue
            if length >= 2 and letters[0] == -letters[-1]:
                continue
            if _cyclic_normal(letters) != letters:
                continue
            w = Word(rank, letters)
            if _gcd_vec(abelianize(w)) != 1:
                continue
            F = factor_class([w])
            if F.code in seen:
                continue
            seen.add(F.code)
            if is_free_factor(F).is_factor:
                out.append((F, w))
                if cap is not None and len(out) >= cap:
                    return out
    return out


def _cyclic_normal(letters):
    """Least rotation among the word and its inverse (class representative)."""
    n = len(letters)
    inv = tuple(-x for x in reversed(letters))
    best = letters
    for base in (letters, inv):
        for i in range(n):
            rot = base[i:] + base[:i]
            if rot < best:
                best = rot
    return best


# ---------------------------------------------------------------------------
# X_A


@dataclass(eq=False)
class XSet:
    factor: object  # FactorClass A
    complexity_bound: int
    members: list = field(default_factory=list)  # (vertex, conjugator)

    def vertices(self):
        return [v for v, _ in self.members]

    def diameter_upper(self, hub=None):
        """Upper bound on the pairwise distance of members: every member is
        adjacent to any rank-1 factor of A (its disjointness conjugator is
        reused as the edge certificate), so the diameter is at most 2."""
        if len(self.members) < 2:
            return 0
        if hub is None:
            hub = factor_class([self.factor.gens()[0]])
        for v, c in self.members:
            if not _hub_edge_ok(hub, self.factor, v, c):
                return None
        return 2 if len({v.code for v, _ in self.members}) > 1 else 0


def _hub_edge_ok(hub, A, v, c):
    """Certify hub -- v adjacency: hub lies in A and A * v^c is free, so
    <hub, v^c> spans a rank-2 free factor."""
    gens = list(hub.gens()) + [c * w * ~c for w in v.gens()]
    H = factor_class(gens)
    if H.rank != 2:
        return False
    if H.rank == H.rank_ambient:
        return True
    return is_free_factor(H).is_factor


def x_set(A, s=8, cap=24, conj_len=4):
    """Vertices disjoint from A, each with a verified splitting conjugator,
    enumerated over cyclic words of length <= s (up to the member cap).

    When A has corank 1 the candidates are pre-filtered by the exact
    crossing test (the witness image of a disjoint class crosses the last
    letter exactly once), so only genuine members reach the certificate
    search."""
    if A.rank < 2:
        raise ValueError("rank(A) >= 2 required")
    n = A.rank_ambient
    if A.rank + 1 > n:
        return XSet(A, s, [])
    fast = None
    if A.rank == n - 1:
        res = is_free_factor(A)
        if res.is_factor:
            phi = res.witness

            def fast(w):
                img, _ = cyclic_reduce(phi(w))
                return sum(1 for x in img.letters if abs(x) == n) == 1

    members = []
    for length in range(1, s + 1):
        for letters in itertools.product(
            [x for t in range(1, n + 1) for x in (t, -t)], repeat=length
        ):
            if free_reduce(letters) != letters:
                continue
            if length >= 2 and letters[0] == -letters[-1]:
                continue
            if _cyclic_normal(letters) != letters:
                continue
            w = Word(n, letters)
            if _gcd_vec(abelianize(w)) != 1:
                continue
            if fast is not None and not fast(w):
                continue
            F = factor_class([w])
            if any(F == v for v, _ in members):
                continue
            if fast is None:
                if contained_up_to_conjugacy(F, A) or colors_meet(A, F):
                    continue
            got = find_disjoint_conjugator(A, F, max_conj_len=conj_len)
            if got is None:
                continue
            members.append((F, got[0]))
            if len(members) >= cap:
                return XSet(A, s, members)
    return XSet(A, s, members)


# ---------------------------------------------------------------------------
# bounded distance


def cn_distance_bounds(u, v, s=6, conj_len=4, pool=None, chain_links=0):
    """(lower, upper, path) distance bounds between two vertices.

    The upper bound comes from a BFS over a bounded pool of vertices using
    certified edges only; the path of classes achieving it is returned.
    The lower bound is 0 or 1, or chain_links when the caller has verified
    a progress chain separating the vertices.
    """
    if u == v:
        return 0, 0, [u]
    e = is_cn_edge(u, v, conj_len=conj_len)
    if e:
        return 1, 1, [u, v]
    lower = max(1, chain_links)
    if pool is None:
        pool = [F for F, _ in enumerate_cvertices(u.rank_ambient, s, cap=30)]
    verts = {F.code: F for F in pool}
    verts[u.code] = u
    verts[v.code] = v
    items = sorted(verts.values(), key=lambda F: F.code)
    from collections import deque

    q = deque([(u, [u])])
    seen = {u.code}
    while q:
        cur, path = q.popleft()
        for F in items:
            if F.code in seen or F.code == cur.code:
                continue
            if not is_cn_edge(cur, F, conj_len=conj_len):
                continue
            if F.code == v.code:
                return lower, len(path), path + [F]
            seen.add(F.code)
            q.append((F, path + [F]))
    return lower, None, None


# ---------------------------------------------------------------------------
# chain progress


@dataclass(eq=False)
class ChainReport:
    ok: bool
    links: int
    failures: list
    details: list

    def lower_bound_token(self):
        """On success, the progress conclusion: every geodesic between the
        end X-sets meets all the intermediate ones, so the chain length is a
        distance lower bound."""
        return self.links if self.ok else None


def chain_progress_verify(factors, s=5, m_emp=10, cap=10, conj_len=3,
                          samples=4, seed=0, xsets=None):
    """Verify the progress hypotheses on a chain of factors A_1..A_m:
    (1) consecutive X-sets share no vertex (on the sampled sets), and
    (2) for interior i, the projection distance d_{A_i} between members of
    the neighboring X-sets exceeds 2*m_emp.  The symbol for the projection
    target in hypothesis (2) is read as A_i.

    Callers holding certified X-sets already (for instance translated along
    an automorphism orbit, where direct enumeration finds no short members)
    can pass them as xsets, aligned with factors."""
    if len(factors) < 2:
        raise ValueError("need at least two factors")
    failures = []
    details = []
    if xsets is None:
        xsets = [x_set(A, s=s, cap=cap, conj_len=conj_len) for A in factors]
    if len(xsets) != len(factors):
        raise ValueError("xsets must align with factors")
    for i in range(len(factors) - 1):
        codes_a = {v.code for v in xsets[i].vertices()}
        codes_b = {v.code for v in xsets[i + 1].vertices()}
        shared = codes_a & codes_b
        if shared:
            failures.append((i, "X-sets share a vertex"))
        details.append(("disjoint-xsets", i, len(shared)))
    for i in range(1, len(factors) - 1):
        A = factors[i]
        prev_members = xsets[i - 1].vertices()
        next_members = xsets[i + 1].vertices()
        if not prev_members or not next_members:
            failures.append((i, "empty X-set sample"))
            continue
        x_prev, x_next = prev_members[0], next_members[0]
        pa = project_factor(A, x_prev, samples=samples, seed=seed)
        pb = project_factor(A, x_next, samples=samples, seed=seed)
        if not pa or not pb:
            failures.append((i, "empty projection"))
            continue
        lo, hi = factor_distance(A, pa, pb)
        details.append(("projection-gap", i, lo, hi))
        if lo <= 2 * m_emp:
            failures.append((i, f"projection gap {lo} <= {2 * m_emp}"))
    return ChainReport(not failures, len(factors) - 1, failures, details)
