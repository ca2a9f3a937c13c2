"""Subfactor projections: exact Farey distances in rank 2, the projection
pi_A(B) of one free factor into the factor complex of another, disjointness
certificates via jointly-embedded marked graphs, classification of factor
pairs, and the Behrstock-style consistency check.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from math import gcd

from .marked import (
    Immersion,
    MarkedGraph,
    MarkingError,
    adapted_rose,
    cover_core,
    one_edge_collapse_factors,
    transformed,
)
from .stallings import (
    apply_to_factor,
    contained_up_to_conjugacy,
    factor_class,
    is_free_factor,
    mod2_span,
)
from .words import Automorphism, Word, abelianize, free_reduce


# ---------------------------------------------------------------------------
# the Farey graph: rank-one free factors of F_2


def primitive_vector(F):
    """Abelianization of a rank-1 free factor of F_2 as a normalized
    coprime pair (sign chosen so the first nonzero entry is positive)."""
    if F.rank_ambient != 2 or F.rank != 1:
        raise ValueError("need a rank-1 factor of F_2")
    p, q = abelianize(F.gens()[0])
    if gcd(p, q) != 1:
        raise ValueError("not a primitive class")
    if p < 0 or (p == 0 and q < 0):
        p, q = -p, -q
    return (p, q)


def farey_adjacent(v, w):
    p, q = v
    r, s = w
    return abs(p * s - q * r) == 1


@lru_cache(maxsize=None)
def _dist_to_infinity(r, s):
    """Distance from (r, s) to (1, 0) in the Farey graph, by branching
    over the two nearest-integer continued fraction steps."""
    if s < 0:
        r, s = -r, -s
    if s == 0:
        return 0
    if s == 1:
        return 1
    best = None
    for n in {r // s, -((-r) // s)}:
        d = 1 + _dist_to_infinity(s, r - n * s)
        if best is None or d < best:
            best = d
    return best


def farey_distance(v, w):
    """Exact distance between primitive classes in the Farey graph."""
    p, q = v
    r, s = w
    if gcd(p, q) != 1 or gcd(r, s) != 1:
        raise ValueError("vectors must be primitive")
    if (p, q) in ((r, s), (-r, -s)):
        return 0
    # move v to (1, 0) by an integer matrix of determinant 1
    g, x, y = _xgcd(p, q)
    assert g == 1
    r2, s2 = x * r + y * s, -q * r + p * s
    return _dist_to_infinity(r2, s2)


def _xgcd(a, b):
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        quo = old_r // r
        old_r, r = r, old_r - quo * r
        old_s, s = s, old_s - quo * s
        old_t, t = t, old_t - quo * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def farey_distance_classes(F1, F2):
    return farey_distance(primitive_vector(F1), primitive_vector(F2))


def farey_diameter(factors):
    """Diameter of a set of rank-1 factors of F_2 in the Farey graph."""
    vecs = [primitive_vector(F) for F in factors]
    best = 0
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            best = max(best, farey_distance(vecs[i], vecs[j]))
    return best


# ---------------------------------------------------------------------------
# mod-2 homology colors


def mod2_color(F):
    """The subspace of H_1(F_n; Z/2) spanned by F, as canonical row masks."""
    return mod2_span(F.gens())


def colors_meet(A, B):
    """Whether the mod-2 colors intersect nontrivially.  Disjoint factors
    always have transverse colors, so a nontrivial intersection rules
    disjointness out."""
    ca, cb = mod2_color(A), mod2_color(B)
    joint = mod2_span(
        [_mask_word(A.rank_ambient, m) for m in ca]
        + [_mask_word(A.rank_ambient, m) for m in cb]
    )
    return len(ca) + len(cb) > len(joint)


def _mask_word(rank, mask):
    letters = [i + 1 for i in range(rank) if mask >> i & 1]
    return Word(rank, tuple(letters))


# ---------------------------------------------------------------------------
# double-covered edges and near-embeddings


@dataclass(eq=False)
class OmegaData:
    immersion: Immersion
    omega_eids: frozenset  # target edges covered at least twice
    omega_tilde: tuple  # their preimage edges in the domain core
    eb: tuple = None  # domain edges over an embedded B-subgraph, if given

    def is_embedded(self):
        return not self.omega_eids

    def is_nearly_embedded(self):
        core = self.immersion.core()
        return _is_forest(core.vertex_set(), self.omega_tilde)


def omega_data(A, G, b_eids=None):
    imm = cover_core(A, G)
    mult = imm.multiplicities()
    omega = frozenset(e for e, m in mult.items() if m >= 2)
    core = imm.core()
    tilde = tuple(
        (u, v, label)
        for u, v, label in core.edges
        if imm.eid_of_label(label) in omega
    )
    eb = None
    if b_eids is not None:
        eb = tuple(
            (u, v, label)
            for u, v, label in core.edges
            if imm.eid_of_label(label) in b_eids
        )
    return OmegaData(imm, omega, tilde, eb)


def _is_forest(vertices, edges):
    parent = {v: v for v in vertices}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v, _ in edges:
        ru, rv = find(u), find(v)
        if ru == rv:
            return False
        parent[ru] = rv
    return True


def near_embedding(A, G):
    return omega_data(A, G).is_nearly_embedded()


# ---------------------------------------------------------------------------
# jointly embedded certificates


@dataclass(eq=False)
class DisjointWitness:
    """A marked graph containing edge-disjoint embedded subgraphs whose
    classes are A and B."""

    graph: MarkedGraph
    a_eids: frozenset
    b_eids: frozenset

    def verify(self, A, B):
        self.graph.validate(require_core=False)
        if self.a_eids & self.b_eids:
            raise MarkingError("witness subgraphs share an edge")
        if _subgraph_class(self.graph, self.a_eids) != A:
            raise MarkingError("A-side subgraph has the wrong class")
        if _subgraph_class(self.graph, self.b_eids) != B:
            raise MarkingError("B-side subgraph has the wrong class")
        return True


def _subgraph_class(G, eids):
    """Conjugacy class of the fundamental group of a connected subgraph."""
    sub = [e for e in G.edges if e[0] in eids]
    verts = {u for _, u, _ in sub} | {v for _, _, v in sub}
    H = MarkedGraph(G.rank, tuple(sub), {e: G.marking[e] for e, _, _ in sub})
    if not H.is_connected():
        raise MarkingError("witness subgraph is not connected")
    gens = [w for w in H.loop_basis() if w]
    if not gens:
        raise MarkingError("witness subgraph has trivial class")
    return factor_class(gens)


def joint_embedding(A, B, G):
    """If B is embedded in G and Omega-tilde together with the edges of A|G
    over B|G forms a forest, build the wedge graph where A and B embed
    disjointly.  Returns a verified DisjointWitness, or None."""
    immB = cover_core(B, G)
    if not immB.is_embedding():
        return None
    b_eids = immB.image_eids()
    od = omega_data(A, G, b_eids=b_eids)
    immA = od.immersion
    core = immA.core()
    if not core.edges:
        return None
    forest = set(od.omega_tilde) | set(od.eb)
    if not _is_forest(core.vertex_set(), forest):
        return None
    tree = _extend_to_spanning_tree(core.vertex_set(), core.edges, forest)
    outside = [e for e in core.edges if e not in tree]
    p_outside = [immA.eid_of_label(label) for _, _, label in outside]
    if len(set(p_outside)) != len(p_outside):
        # the outside edges must map bijectively; cannot happen over a forest
        return None
    removed = set(p_outside)
    # wedge A|G (with fresh edge ids) onto G minus the removed open edges
    offset_v = max(G.vertex_set()) + 1
    next_eid = max(G.eids()) + 1
    vimg = immA.vertex_image()
    wedge = min(core.vertex_set())
    edges = []
    marking = {}
    keep = []
    for eid, u, v in G.edges:
        if eid in removed:
            continue
        edges.append((eid, u, v))
        marking[eid] = G.marking[eid]
        keep.append(eid)

    def vmap(x):
        if x == wedge:
            return vimg[wedge]
        return x + offset_v

    a_eids = []
    for u, v, label in core.edges:
        edges.append((next_eid, vmap(u), vmap(v)))
        marking[next_eid] = G.marking[immA.eid_of_label(label)]
        a_eids.append(next_eid)
        next_eid += 1
    W = MarkedGraph(G.rank, tuple(edges), marking)
    witness = DisjointWitness(W, frozenset(a_eids), frozenset(b_eids))
    witness.verify(A, B)
    return witness


def _extend_to_spanning_tree(vertices, edges, forest):
    parent = {v: v for v in vertices}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree = set()
    for e in sorted(forest):
        u, v, _ = e
        ru, rv = find(u), find(v)
        assert ru != rv
        parent[ru] = rv
        tree.add(e)
    for e in sorted(edges):
        if e in tree:
            continue
        u, v, _ = e
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            tree.add(e)
    return tree


def splitting_witness(A, B, conj, comp_words):
    """Witness graph for an explicit splitting F_n = A * B^conj * C: petals
    for A and C at one vertex, petals for B^conj at another, joined by an
    edge."""
    n = A.rank_ambient
    a_words = A.gens()
    b_words = [conj * w * ~conj for w in B.gens()]
    edges = []
    marking = {}
    eid = 1
    a_eids, b_eids = [], []
    for w in a_words:
        edges.append((eid, 0, 0))
        marking[eid] = w
        a_eids.append(eid)
        eid += 1
    for w in comp_words:
        edges.append((eid, 0, 0))
        marking[eid] = w
        eid += 1
    for w in b_words:
        edges.append((eid, 1, 1))
        marking[eid] = w
        b_eids.append(eid)
        eid += 1
    edges.append((eid, 0, 1))
    marking[eid] = Word.identity(n)
    W = MarkedGraph(n, tuple(edges), marking)
    witness = DisjointWitness(W, frozenset(a_eids), frozenset(b_eids))
    witness.verify(A, B)
    return witness


def find_disjoint_conjugator(A, B, max_conj_len=4, plateau_depth=2):
    """Search for a conjugator c with <A, B^c> = A * B^c a free factor.

    Because free groups are Hopfian, rank(<A, B^c>) = rank A + rank B forces
    the product to be free, and a free factor containing both then splits as
    required.  Returns (c, complement_basis) or None.
    """
    n = A.rank_ambient
    target = A.rank + B.rank
    if target > n:
        return None
    for c in _short_words(n, max_conj_len):
        gens = list(A.gens()) + [c * w * ~c for w in B.gens()]
        H = factor_class(gens)
        if H.rank != target:
            continue
        if H.rank == n:
            if H != factor_class([Word(n, (i,)) for i in range(1, n + 1)]):
                continue
            comp = []
        else:
            res = is_free_factor(H, plateau_depth=plateau_depth)
            if not res.is_factor:
                continue
            inv = res.witness_inverse
            comp = [inv.images[i] for i in range(H.rank, n)]
        return c, comp
    return None


def disjoint_by_conjugation(A, B, max_conj_len=4, plateau_depth=2):
    """DisjointWitness built from find_disjoint_conjugator, or None."""
    got = find_disjoint_conjugator(A, B, max_conj_len, plateau_depth)
    if got is None:
        return None
    c, comp = got
    try:
        return splitting_witness(A, B, c, comp)
    except MarkingError:
        return None


def _short_words(rank, max_len):
    out = [Word.identity(rank)]
    frontier = [()]
    for _ in range(max_len):
        nxt = []
        for t in frontier:
            for x in range(-rank, rank + 1):
                if x == 0 or (t and t[-1] == -x):
                    continue
                s = t + (x,)
                nxt.append(s)
                out.append(Word(rank, s))
        frontier = nxt
    return out


# ---------------------------------------------------------------------------
# projections


def project_graph(A, G):
    """pi_A(G): the free factors of A cut out by one-edge collapses of the
    core of the A-cover of G."""
    if A.rank < 2:
        raise ValueError("projection lives in the factor complex of A; "
                         "need rank(A) >= 2")
    return one_edge_collapse_factors(cover_core(A, G))


def stabilizer_automorphisms(B, count, seed=0):
    """Automorphisms preserving the sub-rose factor <x_1..x_k> (k = rank B),
    used to resample marked graphs in which B stays embedded."""
    n = B.rank_ambient
    k = B.rank
    rng = random.Random(seed)
    gens = []
    # transvections inside the first k letters, inside the rest, and from
    # the B block onto the complement block
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i == j:
                continue
            if i <= k and j > k:
                continue  # would push B outside itself
            images = []
            for t in range(1, n + 1):
                if t == j:
                    images.append(Word(n, free_reduce((t, i))))
                else:
                    images.append(Word(n, (t,)))
            gens.append(Automorphism(n, tuple(images)))
    out = []
    for _ in range(count):
        f = Automorphism.identity(n)
        for _ in range(rng.randint(1, 4)):
            f = rng.choice(gens) * f
        out.append(f)
    return out


def sample_graphs_with_embedded(B, samples=8, seed=0):
    """Marked graphs in which B is embedded: the adapted rose, a two-vertex
    blow-up, and images under B-preserving automorphisms.  The first two
    embed B by construction, so small sample counts stay cheap even for
    large factors."""
    G0 = adapted_rose(B)
    n = B.rank_ambient
    k = B.rank
    # blow-up: B petals at one vertex, the rest at another
    edges = []
    marking = {}
    for i in range(1, n + 1):
        v = 0 if i <= k else 1
        edges.append((i, v, v))
        marking[i] = G0.marking[i]
    edges.append((n + 1, 0, 1))
    marking[n + 1] = Word.identity(n)
    graphs = [G0, MarkedGraph(n, tuple(edges), marking)]
    for f in stabilizer_automorphisms(B, max(samples - 2, 0), seed=seed):
        graphs.append(transformed(G0, f))
    return graphs[:samples] if samples >= 2 else graphs[:1]


def project_factor(A, B, samples=8, seed=0):
    """pi_A(B): union of pi_A(G) over sampled marked graphs where B is
    embedded.  Empty when B does not meet A: containment, or a disjointness
    certificate found at a small budget (such classes fail to project)."""
    if contained_up_to_conjugacy(A, B):
        return set()
    if A.rank + B.rank <= A.rank_ambient:
        if (find_disjoint_conjugator(A, B, max_conj_len=2) is not None
                or find_disjoint_conjugator(B, A, max_conj_len=2) is not None):
            return set()
    out = set()
    for G in sample_graphs_with_embedded(B, samples=samples, seed=seed):
        imm = cover_core(B, G)
        if not imm.is_embedding():
            continue
        out |= project_graph(A, G)
    return out


# ---------------------------------------------------------------------------
# distances in factor complexes


def factor_complex_distance(X, Y, pool_seed=0, pool_size=60, max_depth=6):
    """Distance between vertices of the free factor complex of F_m.

    Exact (Farey) for m = 2.  For higher rank returns (lower, upper): the
    lower bound comes from containment certificates, the upper from a BFS
    over a bounded pool of factors.
    """
    m = X.rank_ambient
    if m == 2:
        d = farey_distance_classes(X, Y)
        return (d, d)
    if X == Y:
        return (0, 0)
    if contained_up_to_conjugacy(X, Y) or contained_up_to_conjugacy(Y, X):
        return (1, 1)
    pool = _factor_pool(m, [X, Y], seed=pool_seed, size=pool_size)
    upper = _bfs_distance(pool, X, Y, max_depth=max_depth)
    return (2, upper)


def _factor_pool(m, seeds, seed, size):
    rng = random.Random(seed)
    pool = set(seeds)
    for k in range(1, m):
        pool.add(factor_class([Word(m, (i,)) for i in range(1, k + 1)]))
    from .stallings import random_automorphism

    tries = 0
    while len(pool) < size and tries < size * 6:
        tries += 1
        f, _ = random_automorphism(m, rng, length=3)
        base = rng.choice(sorted(pool, key=lambda F: F.code))
        pool.add(apply_to_factor(f, base))
    return pool


def _bfs_distance(pool, X, Y, max_depth):
    from collections import deque

    adj = {F: [] for F in pool}
    items = sorted(pool, key=lambda F: F.code)
    for i, F in enumerate(items):
        for H in items[i + 1:]:
            if F.rank != H.rank and (
                contained_up_to_conjugacy(F, H) or contained_up_to_conjugacy(H, F)
            ):
                adj[F].append(H)
                adj[H].append(F)
    q = deque([(X, 0)])
    seen = {X}
    while q:
        F, d = q.popleft()
        if F == Y:
            return d
        if d >= max_depth:
            continue
        for H in adj[F]:
            if H not in seen:
                seen.add(H)
                q.append((H, d + 1))
    return None


def factor_distance(A, X_set, Y_set):
    """d_A(X, Y): diameter of the union of two projection sets in the
    factor complex of A.  Exact when rank(A) = 2; otherwise a
    (lower, upper) interval using pool BFS."""
    both = list(X_set) + list(Y_set)
    if not both:
        raise ValueError("empty projection sets")
    if A.rank == 2:
        d = farey_diameter(both)
        return (d, d)
    lo, hi = 0, 0
    for i in range(len(both)):
        for j in range(i + 1, len(both)):
            l, u = factor_complex_distance(both[i], both[j])
            lo = max(lo, l)
            hi = None if u is None or hi is None else max(hi, u)
    return (lo, hi)


# ---------------------------------------------------------------------------
# classification


@dataclass(eq=False)
class Classification:
    kind: str  # "contained_in", "contains", "disjoint", "overlap", "unknown"
    certified: bool
    detail: str = ""
    witness: DisjointWitness = None

    def to_json(self):
        d = {"verdict": self.kind, "certified": self.certified,
             "detail": self.detail}
        if self.witness is not None:
            d["certificate"] = {
                "graph": self.witness.graph.to_json(),
                "a_edges": sorted(self.witness.a_eids),
                "b_edges": sorted(self.witness.b_eids),
            }
        return d


def classify_pair(A, B, conj_budget=4, graph_samples=6, seed=0):
    """Trichotomy for a pair of free factors: contained (either way, up to
    conjugacy), disjoint (with a verified witness), or overlapping."""
    if A.rank_ambient != B.rank_ambient:
        raise ValueError("ambient rank mismatch")
    n = A.rank_ambient
    if A == B:
        return Classification("contained_in", True, "equal classes")
    if contained_up_to_conjugacy(A, B):
        return Classification("contained_in", True, "A in B")
    if contained_up_to_conjugacy(B, A):
        return Classification("contains", True, "B in A")
    # certified refutations of disjointness
    if A.rank + B.rank > n:
        return Classification("overlap", True, "rank sum exceeds ambient rank")
    if colors_meet(A, B):
        return Classification("overlap", True, "mod-2 colors intersect")
    w = disjoint_by_conjugation(A, B, max_conj_len=conj_budget)
    if w is None:
        w = disjoint_by_conjugation(B, A, max_conj_len=conj_budget)
        if w is not None:
            w = DisjointWitness(w.graph, w.b_eids, w.a_eids)
    if w is not None:
        return Classification("disjoint", True, "splitting found", w)
    # graph-based search through jointly embedded wedges
    small, big = (A, B) if A.rank <= B.rank else (B, A)
    for G in sample_graphs_with_embedded(big, samples=graph_samples, seed=seed):
        got = joint_embedding(small, big, G)
        if got is not None:
            if small is B:
                got = DisjointWitness(got.graph, got.b_eids, got.a_eids)
            return Classification("disjoint", True, "jointly embedded", got)
    return Classification("unknown", False, "search budget exhausted")


def behrstock_check(A, B, G, samples=8, seed=0):
    """The two coordinates of the consistency inequality for an overlapping
    pair: d_A(G, B) and d_B(G, A).  Returns exact values for rank-2 factors
    and upper bounds otherwise, as (dA, dB)."""
    pa_g = project_graph(A, G)
    pb_g = project_graph(B, G)
    pa_b = project_factor(A, B, samples=samples, seed=seed)
    pb_a = project_factor(B, A, samples=samples, seed=seed)
    if not pa_b or not pb_a:
        raise ValueError("empty projection; factors may not overlap")
    da = factor_distance(A, pa_g, pa_b)
    db = factor_distance(B, pb_g, pb_a)
    uppers = [u for u in (da[1], db[1]) if u is not None]
    return da, db, (min(uppers) if uppers else None)
