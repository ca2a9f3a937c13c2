"""Freely reduced words in F_n, automorphisms, and Whitehead automorphisms.

A word is stored as a tuple of nonzero signed generator indices: ``2`` is the
second generator, ``-2`` its inverse.  The text format maps generator ``i``
(for rank up to 26) to the i-th lowercase letter and its inverse to the
corresponding uppercase letter, so ``"abA"`` is a * b * a^-1.
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass


def _check_letters(rank, letters):
    for x in letters:
        if x == 0 or abs(x) > rank:
            raise ValueError(f"letter {x} out of range for rank {rank}")


def free_reduce(letters):
    """Freely reduce a letter sequence (cancel adjacent x, x^-1 pairs)."""
    out = []
    for x in letters:
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


@dataclass(frozen=True)
class Word:
    rank: int
    letters: tuple

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be positive")
        _check_letters(self.rank, self.letters)
        if self.letters != free_reduce(self.letters):
            raise ValueError("letters are not freely reduced; use reduce()")

    @staticmethod
    def identity(rank):
        return Word(rank, ())

    def __len__(self):
        return len(self.letters)

    def __bool__(self):
        return bool(self.letters)

    def __mul__(self, other):
        if self.rank != other.rank:
            raise ValueError("rank mismatch")
        return Word(self.rank, free_reduce(self.letters + other.letters))

    def __invert__(self):
        return Word(self.rank, tuple(-x for x in reversed(self.letters)))

    def __pow__(self, n):
        if n < 0:
            return (~self) ** (-n)
        w = Word.identity(self.rank)
        for _ in range(n):
            w = w * self
        return w

    def conjugate(self, c):
        """c * self * c^-1."""
        return c * self * ~c

    def __str__(self):
        return word_to_str(self)

    def __repr__(self):
        return f"Word({self.rank}, {word_to_str(self)!r})"


def reduce(rank, letters):
    """Build a Word from a raw letter sequence, cancelling as needed."""
    _check_letters(rank, letters)
    return Word(rank, free_reduce(letters))


def word_from_str(rank, text):
    if rank > 26:
        raise ValueError("text format supports rank <= 26")
    letters = []
    for ch in text:
        if ch.isspace():
            continue
        if ch in string.ascii_lowercase:
            letters.append(string.ascii_lowercase.index(ch) + 1)
        elif ch in string.ascii_uppercase:
            letters.append(-(string.ascii_uppercase.index(ch) + 1))
        else:
            raise ValueError(f"bad character {ch!r} in word")
    return reduce(rank, letters)


def word_to_str(w):
    out = []
    for x in w.letters:
        if x > 0:
            out.append(string.ascii_lowercase[x - 1])
        else:
            out.append(string.ascii_uppercase[-x - 1])
    return "".join(out)


def cyclic_reduce(w):
    """Return (core, conjugator) with w = conjugator * core * conjugator^-1."""
    letters = list(w.letters)
    pre = []
    while len(letters) >= 2 and letters[0] == -letters[-1]:
        pre.append(letters[0])
        letters = letters[1:-1]
    return Word(w.rank, tuple(letters)), Word(w.rank, tuple(pre))


def is_cyclically_reduced(w):
    return not w.letters or w.letters[0] != -w.letters[-1]


def abelianize(w):
    """Exponent-sum vector of w, one entry per generator."""
    vec = [0] * w.rank
    for x in w.letters:
        vec[abs(x) - 1] += 1 if x > 0 else -1
    return tuple(vec)


@dataclass(frozen=True)
class Automorphism:
    """An automorphism of F_n given by generator images.

    The basis invariant (images generate all of F_n) is not enforced here;
    the stallings module certifies it by folding.
    """

    rank: int
    images: tuple

    def __post_init__(self):
        if len(self.images) != self.rank:
            raise ValueError("need one image per generator")
        for w in self.images:
            if w.rank != self.rank:
                raise ValueError("image rank mismatch")

    @staticmethod
    def identity(rank):
        return Automorphism(rank, tuple(Word(rank, (i + 1,)) for i in range(rank)))

    @staticmethod
    def from_strs(rank, texts):
        return Automorphism(rank, tuple(word_from_str(rank, t) for t in texts))

    def __call__(self, w):
        if w.rank != self.rank:
            raise ValueError("rank mismatch")
        out = []
        for x in w.letters:
            img = self.images[abs(x) - 1]
            out.extend(img.letters if x > 0 else (~img).letters)
        return Word(self.rank, free_reduce(out))

    def __mul__(self, other):
        """Composition: (f * g)(w) == f(g(w))."""
        if self.rank != other.rank:
            raise ValueError("rank mismatch")
        return Automorphism(self.rank, tuple(self(w) for w in other.images))

    def __pow__(self, n):
        if n < 0:
            raise ValueError("negative powers need an explicit inverse")
        f = Automorphism.identity(self.rank)
        for _ in range(n):
            f = self * f
        return f

    def is_identity(self):
        return all(w.letters == (i + 1,) for i, w in enumerate(self.images))

    def __str__(self):
        return "[" + ",".join(word_to_str(w) for w in self.images) + "]"


def apply(phi, w):
    return phi(w)


def whitehead_automorphisms(rank):
    """All Whitehead automorphisms of F_rank, deduplicated.

    Type I: signed permutations of the generators.  Type II: pick a
    multiplier a = g^e; every other generator is replaced by one of
    x, x*a, a^-1*x, a^-1*x*a while g itself is fixed.
    """
    if rank < 2:
        raise ValueError("rank must be at least 2")
    seen = {}

    def add(images):
        key = tuple(w.letters for w in images)
        if key not in seen:
            seen[key] = Automorphism(rank, tuple(images))

    for perm in itertools.permutations(range(1, rank + 1)):
        for signs in itertools.product((1, -1), repeat=rank):
            add([Word(rank, (s * p,)) for p, s in zip(perm, signs)])

    for g in range(1, rank + 1):
        for e in (1, -1):
            a = Word(rank, (e * g,))
            others = [i for i in range(1, rank + 1) if i != g]
            for choice in itertools.product(range(4), repeat=rank - 1):
                images = [None] * rank
                images[g - 1] = Word(rank, (g,))
                for i, c in zip(others, choice):
                    x = Word(rank, (i,))
                    if c == 0:
                        images[i - 1] = x
                    elif c == 1:
                        images[i - 1] = x * a
                    elif c == 2:
                        images[i - 1] = ~a * x
                    else:
                        images[i - 1] = ~a * x * a
                add(images)

    return list(seen.values())


def whitehead_type2(rank):
    """The non-identity type II Whitehead automorphisms only (used in
    edge-count descent, where type I moves never change complexity)."""
    out = []
    for phi in whitehead_automorphisms(rank):
        if phi.is_identity():
            continue
        if all(len(w) == 1 for w in phi.images):
            continue
        out.append(phi)
    return out
