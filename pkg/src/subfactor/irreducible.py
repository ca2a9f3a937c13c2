"""Ping-pong construction of candidate fully irreducible automorphisms:
filling checks for factor pairs, exact restriction of a factor-preserving
automorphism, Farey translation estimates, and bounded evidence searches
for invariant factors.

Nothing here proves full irreducibility; negative certificates (an explicit
invariant factor) are exact, positive support is exhausted bounded search.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from .complex_cn import XSet, enumerate_cvertices, x_set
from .projection import (
    factor_distance,
    farey_distance,
    find_disjoint_conjugator,
    project_factor,
)
from .stallings import (
    Expression,
    _canonical_start,
    _tree_data,
    apply_to_factor,
    factor_class,
    invert_automorphism,
    is_free_factor,
    subgroup_graph,
)
from .words import Automorphism, Word, abelianize, cyclic_reduce, free_reduce


# ---------------------------------------------------------------------------
# filling


@dataclass(eq=False)
class NoWitnessFound:
    bound: int
    scanned: int
    inconclusive: int  # candidates where the budgeted search decided nothing

    def __bool__(self):
        return False


@dataclass(eq=False)
class FillReport:
    witnesses: list  # rank-1 classes disjoint from both factors
    bound: int
    scanned: int
    inconclusive: int

    def __bool__(self):
        return bool(self.witnesses)

    def outcome(self):
        if self.witnesses:
            return self.witnesses[0]
        return NoWitnessFound(self.bound, self.scanned, self.inconclusive)


def _corank1_tester(A, phi=None):
    """For a factor of rank n-1, disjointness from a rank-1 class is exact:
    move A to the sub-rose on the first n-1 letters by a Whitehead chain;
    a class is disjoint from A iff its image crosses the last letter
    exactly once (it is then a free complement, seen by Nielsen moves).
    A caller who already knows an automorphism carrying A to that sub-rose
    can pass it as phi to skip the Whitehead reduction."""
    n = A.rank_ambient
    if A.rank != n - 1:
        return None
    if phi is None:
        res = is_free_factor(A)
        if not res.is_factor:
            raise ValueError("not a free factor")
        phi = res.witness

    def test(w):
        img, _ = cyclic_reduce(phi(w))
        hits = sum(1 for x in img.letters if abs(x) == n)
        return hits == 1

    return test


def fill_check(A, B, s=8, conj_len=3, max_witnesses=50, phi_a=None,
               phi_b=None):
    """Search for a rank-1 class disjoint from both A and B among cyclic
    words of length <= s.  A witness refutes filling; an empty result is
    exact when both factors have rank n-1 and budget-flagged otherwise.
    phi_a/phi_b are optional sub-rose-izing automorphisms (see
    _corank1_tester)."""
    if A.rank < 2 or B.rank < 2:
        raise ValueError("filling is about factors of rank >= 2")
    n = A.rank_ambient
    test_a = _corank1_tester(A, phi_a)
    test_b = _corank1_tester(B, phi_b)
    witnesses = []
    scanned = 0
    inconclusive = 0
    for w in _iter_cyclic_words(n, s):
        scanned += 1
        ok_a = _disjoint_from(A, w, test_a, conj_len)
        if ok_a is None:
            inconclusive += 1
            continue
        if not ok_a:
            continue
        ok_b = _disjoint_from(B, w, test_b, conj_len)
        if ok_b is None:
            inconclusive += 1
            continue
        if not ok_b:
            continue
        F = factor_class([w])
        if all(F != W for W in witnesses):
            witnesses.append(F)
            if len(witnesses) >= max_witnesses:
                break
    return FillReport(witnesses, s, scanned, inconclusive)


def _disjoint_from(A, w, fast_test, conj_len):
    """True/False when decided, None when only the budget ran out."""
    if fast_test is not None:
        return fast_test(w)
    F = factor_class([w])
    if not is_free_factor(F).is_factor:
        return False
    got = find_disjoint_conjugator(A, F, max_conj_len=conj_len)
    if got is not None:
        return True
    return None


def _iter_cyclic_words(rank, max_len):
    """Cyclically reduced words up to rotation and inversion, ordered by
    length; primitivity is not pre-filtered (callers decide)."""
    alphabet = [x for s in range(1, rank + 1) for x in (s, -s)]
    for length in range(1, max_len + 1):
        for letters in itertools.product(alphabet, repeat=length):
            if free_reduce(letters) != letters:
                continue
            if length >= 2 and letters[0] == -letters[-1]:
                continue
            if _cyc_normal(letters) != letters:
                continue
            yield Word(rank, letters)


def _cyc_normal(letters):
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
# restriction


def restriction(f, A):
    """The induced automorphism of A's free group when f(A) = A as classes.

    The conjugator is found exactly: the canonical basepoint of the folded
    graph of f(A) reads off d with f(A_0) = d A_0 d^{-1}, no search needed.
    Returns (automorphism of F_rank(A), conjugator d).
    """
    if apply_to_factor(f, A) != A:
        raise ValueError("f does not preserve A as a conjugacy class")
    g = subgroup_graph([f(w) for w in A.gens()])
    core = g.without_basepoint()
    start = _canonical_start(core)
    path, _ = _tree_data(g)
    d = path[start]
    expr = Expression(A.gens())
    images = []
    for w in A.gens():
        img = expr.express(~d * f(w) * d)
        if img is None:
            raise ValueError("conjugated image fell outside A (marking bug)")
        images.append(img)
    return Automorphism(A.rank, tuple(images)), d


# ---------------------------------------------------------------------------
# translation estimates (rank-2, Farey-exact)


def translation_estimate(h, k_max=8):
    """Lower-bound style estimate of the translation rate of h on the Farey
    graph: the worst seed's best distance-per-power ratio.  Zero whenever h
    fixes one of the seed vertices."""
    if h.rank != 2:
        raise ValueError("Farey estimates need a rank-2 automorphism")
    seeds = [Word(2, (1,)), Word(2, (2,)), Word(2, (1, 2))]
    best = None
    for seed in seeds:
        v0 = _vec(seed)
        cur = seed
        rate = Fraction(0)
        for k in range(1, k_max + 1):
            cur = h(cur)
            core, _ = cyclic_reduce(cur)
            vk = _vec(core)
            rate = max(rate, Fraction(farey_distance(v0, vk), k))
        if best is None or rate < best:
            best = rate
    return best


def _vec(w):
    p, q = abelianize(w)
    if p < 0 or (p == 0 and q < 0):
        p, q = -p, -q
    from math import gcd

    if gcd(p, q) != 1:
        raise ValueError("orbit left the primitive classes")
    return (p, q)


def choose_power(rate, m_emp, d_emp):
    """Smallest power N (by doubling) with rate * N > 2*m_emp + 4*d_emp."""
    if rate <= 0:
        raise ValueError("zero translation estimate; restriction not suitable")
    threshold = 2 * m_emp + 4 * d_emp
    N = 1
    while rate * N <= threshold:
        N *= 2
    return N


# ---------------------------------------------------------------------------
# syllable algebra


def syllable_reduce(syllables):
    """Normal form of a word in the free product of <f> and <g>: merge
    adjacent syllables with the same symbol, drop zero exponents."""
    out = []
    for sym, e in syllables:
        if e == 0:
            continue
        if out and out[-1][0] == sym:
            merged = out[-1][1] + e
            out.pop()
            if merged:
                out.append((sym, merged))
        else:
            out.append((sym, e))
    return out


def syllable_length(syllables):
    return len(syllable_reduce(syllables))


def syllable_power(syllables, m):
    return syllable_reduce(list(syllables) * m)


def is_cyclically_reduced_syllables(syllables):
    s = syllable_reduce(syllables)
    return len(s) <= 1 or s[0][0] != s[-1][0]


# ---------------------------------------------------------------------------
# ping-pong


@dataclass(eq=False)
class PingPongSpec:
    f: Automorphism
    g: Automorphism
    A: object  # FactorClass
    B: object
    N: int
    psi: Automorphism = None  # carries A to B when known (g = psi f psi^-1)
    psi_inv: Automorphism = None
    fill: FillReport = None

    def validate(self):
        if apply_to_factor(self.f, self.A) != self.A:
            raise ValueError("f does not preserve A")
        if apply_to_factor(self.g, self.B) != self.B:
            raise ValueError("g does not preserve B")
        if self.psi is not None and apply_to_factor(self.psi, self.A) != self.B:
            raise ValueError("psi does not carry A to B")
        return True


@dataclass(eq=False)
class IrreducibilityEvidence:
    syllables: list
    invariant_factor: object = None  # (FactorClass, power) when found
    growth_table: list = field(default_factory=list)
    capped: int = 0  # candidate orbits abandoned at the size cap
    candidates: int = 0


def _apply_capped(auto, F, cap):
    """Apply an automorphism to a factor class, giving up when the image
    class gets larger than the cap (measured in core edges)."""
    gens = [auto(w) for w in F.gens()]
    if sum(len(w) for w in gens) > 40 * cap:
        return None
    out = factor_class(gens)
    if out.complexity() > cap:
        return None
    return out


def pingpong_word(spec, syllables, powers=6, core_bound=8, cap=400,
                  candidate_cap=80):
    """Compose the syllable word in f^N, g^N and search for invariant
    factors: candidates are factor classes with core size <= core_bound,
    orbits followed with a growth cap (an orbit abandoned at the cap was
    growing, which is itself evidence of no return).  Alternation of
    syllables is required, otherwise the word is conjugate to a power of
    one letter.  Syllables act left to right on classes."""
    syl = syllable_reduce(
        [(sym, e * spec.N) for sym, e in syllables]
    )
    if len(syl) < 2:
        raise ValueError("need an alternating word, not a power of one letter")
    for (s1, _), (s2, _) in zip(syl, syl[1:]):
        if s1 == s2:
            raise ValueError("syllables must alternate")
    steps = _syllable_steps(spec, syl)
    candidates = _candidate_factors(spec.A.rank_ambient, core_bound,
                                    candidate_cap)
    capped = 0
    invariant = None
    for C in candidates:
        cur = C
        for p in range(1, powers + 1):
            for step in steps:
                cur = _apply_capped(step, cur, cap)
                if cur is None:
                    break
            if cur is None:
                capped += 1
                break
            if cur == C:
                invariant = (C, p)
                break
        if invariant:
            break
    growth = _growth_table(spec)
    return IrreducibilityEvidence(
        syllables=syl,
        invariant_factor=invariant,
        growth_table=growth,
        capped=capped,
        candidates=len(candidates),
    )


def _syllable_steps(spec, syl):
    """One exact automorphism per syllable (inverses computed exactly)."""
    f_inv = invert_automorphism(spec.f)
    g_inv = invert_automorphism(spec.g)
    steps = []
    for sym, e in syl:
        base = (spec.f if e > 0 else f_inv) if sym == "f" else (
            spec.g if e > 0 else g_inv)
        steps.append(base ** abs(e))
    return steps


def _candidate_factors(n, core_bound, cap):
    out = []
    for F, _ in enumerate_cvertices(n, min(core_bound, 5), cap=cap // 2):
        out.append(F)
    # rank-2 candidates from pairs of short primitives
    small = [w for _, w in enumerate_cvertices(n, 3, cap=12)]
    for i in range(len(small)):
        for j in range(i + 1, len(small)):
            F = factor_class([small[i], small[j]])
            if F.rank != 2 or F.complexity() > core_bound:
                continue
            if not is_free_factor(F).is_factor:
                continue
            if all(F != H for H in out):
                out.append(F)
            if len(out) >= cap:
                return out
    return out


def _growth_table(spec, samples=2, seed=0):
    """Projection gaps behind the chain A, f^N B, f^N g^N A, ...: by
    equivariance every interior gap equals one of d_B(A, g^N A) and
    d_A(B, f^N B).  When psi is known both are pulled back so the
    projection target is the small factor A and every argument stays
    moderately sized; otherwise they are measured directly."""
    if spec.psi is not None:
        # d_B(A, g^N A) = d_A(psi^-1 A, f^N psi^-1 A) since psi^-1 B = A;
        # then shift by f^-k (k = N//2) so both arguments stay balanced
        k = spec.N // 2
        fk = spec.f ** (spec.N - k)
        fmk = invert_automorphism(spec.f) ** k
        A1 = apply_to_factor(spec.psi_inv, spec.A)
        pairs = (
            ("d_B(A, g^N A)", spec.A, apply_to_factor(fmk, A1),
             apply_to_factor(fk, A1)),
            ("d_A(B, f^N B)", spec.A, apply_to_factor(fmk, spec.B),
             apply_to_factor(fk, spec.B)),
        )
    else:
        fN = spec.f ** spec.N
        gN = spec.g ** spec.N
        pairs = (
            ("d_B(A, g^N A)", spec.B, spec.A, apply_to_factor(gN, spec.A)),
            ("d_A(B, f^N B)", spec.A, spec.B, apply_to_factor(fN, spec.B)),
        )
    rows = []
    for name, target, other, moved in pairs:
        px = project_factor(target, other, samples=samples, seed=seed)
        py = project_factor(target, moved, samples=samples, seed=seed)
        if not px or not py:
            rows.append((name, None, None))
            continue
        lo, hi = factor_distance(target, px, py)
        rows.append((name, lo, hi))
    return rows


def build_pingpong(A, psi, m_emp, d_emp, fib=None, fill_bound=8):
    """Assemble a PingPongSpec from a factor A preserved by a Fibonacci-type
    automorphism and a transforming automorphism psi with B = psi(A)."""
    n = A.rank_ambient
    if fib is None:
        if A.rank != 2:
            raise ValueError("default inner automorphism needs rank-2 A")
        # extends a |-> b, b |-> ab on the first two letters by the identity
        images = [Word(n, (2,)), Word(n, (1, 2))]
        images += [Word(n, (i,)) for i in range(3, n + 1)]
        fib = Automorphism(n, tuple(images))
    if apply_to_factor(fib, A) != A:
        raise ValueError("the base automorphism must preserve A")
    psi_inv = invert_automorphism(psi)
    B = apply_to_factor(psi, A)
    g = psi * fib * psi_inv
    fill = fill_check(A, B, s=fill_bound, phi_b=_subrose_map(A, psi_inv))
    h, _ = restriction(fib, A)
    rate = translation_estimate(h)
    N = choose_power(rate, m_emp, d_emp)
    spec = PingPongSpec(f=fib, g=g, A=A, B=B, psi=psi, psi_inv=psi_inv,
                        N=N, fill=fill)
    spec.validate()
    return spec


def _subrose_map(A, to_A):
    """An automorphism carrying to_A^-1(A) onto the sub-rose on the first
    rank(A) letters, built by composing A's own Whitehead witness."""
    res = is_free_factor(A)
    if not res.is_factor:
        raise ValueError("not a free factor")
    return res.witness * to_A


def spec_from_pair(f, g, A, B, m_emp, d_emp, fill_bound=8):
    """A PingPongSpec from explicitly given f preserving A and g preserving
    B, without a known conjugating automorphism."""
    fill = fill_check(A, B, s=fill_bound)
    h, _ = restriction(f, A)
    rate = translation_estimate(h)
    N = choose_power(rate, m_emp, d_emp)
    spec = PingPongSpec(f=f, g=g, A=A, B=B, N=N, fill=fill)
    spec.validate()
    return spec


def chain_windows(spec):
    """The interior three-term windows of the chain A, f^N B, f^N g^N A,
    f^N g^N f^N B, translated by the inverse prefix so every factor stays
    moderately sized; by equivariance each window carries the same X-set
    and projection data as the original one.

    The window at f^N B pulls back by (f^N psi)^-1 to (psi^-1 A, A,
    f^N psi^-1 A); the window at f^N g^N A pulls back by (f^N g^N)^-1 to
    (B, A, f^N B) since g^-N B = B.  Each is then shifted by f^-(N//2),
    which fixes the middle factor A, so the two ends grow like f^(N/2)
    instead of one end carrying all of f^N."""
    if spec.psi is not None:
        k = spec.N // 2
        fk = spec.f ** (spec.N - k)
        fmk = invert_automorphism(spec.f) ** k
        A1 = apply_to_factor(spec.psi_inv, spec.A)
        w1 = [apply_to_factor(fmk, A1), spec.A, apply_to_factor(fk, A1)]
        w2 = [apply_to_factor(fmk, spec.B), spec.A,
              apply_to_factor(fk, spec.B)]
    else:
        fN = spec.f ** spec.N
        gN = spec.g ** spec.N
        w1 = [spec.A, spec.B, apply_to_factor(gN, spec.A)]
        w2 = [spec.B, spec.A, apply_to_factor(fN, spec.B)]
    return [w1, w2]


def _class_frame(gens):
    """For a list of generating words, the word d carrying the canonical
    class representative onto their actual span: <gens> = d * class * d^-1."""
    g = subgroup_graph(gens)
    start = _canonical_start(g.without_basepoint())
    path, _ = _tree_data(g)
    return path[start]


def translate_xset(xs, h):
    """Transport a certified X-set along an automorphism: X_{h(A)} = h(X_A)
    member by member, with the splitting conjugators corrected into the
    canonical frames of the image classes.  This sidesteps enumeration,
    which finds nothing when h stretches every short disjoint class."""
    e = _class_frame([h(w) for w in xs.factor.gens()])
    members = []
    for v, c in xs.members:
        imgs = [h(w) for w in v.gens()]
        d = _class_frame(imgs)
        members.append((factor_class(imgs), ~e * h(c) * d))
    return XSet(apply_to_factor(h, xs.factor), xs.complexity_bound, members)


def window_xsets(spec, s=5, cap=6, conj_len=3):
    """X-sets aligned with chain_windows(spec).  The middle factor's set is
    enumerated directly; every end factor is an automorphic image of A, so
    its set is transported with translate_xset (direct enumeration finds
    nothing once the translates stretch the short disjoint classes).
    Returns None when no psi is known (the untranslated windows enumerate
    their own sets)."""
    if spec.psi is None:
        return None
    k = spec.N // 2
    fk = spec.f ** (spec.N - k)
    fmk = invert_automorphism(spec.f) ** k
    xa = _xset_grow(spec.A, s, cap, conj_len)
    return [
        [translate_xset(xa, fmk * spec.psi_inv), xa,
         translate_xset(xa, fk * spec.psi_inv)],
        [translate_xset(xa, fmk * spec.psi), xa,
         translate_xset(xa, fk * spec.psi)],
    ]


def _xset_grow(A, s, cap, conj_len, s_max=9):
    """x_set, retrying at larger word lengths until a member appears."""
    while True:
        xs = x_set(A, s=s, cap=cap, conj_len=conj_len)
        if xs.members or s >= s_max:
            return xs
        s += 1
