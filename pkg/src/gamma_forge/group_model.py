"""Groups given by length-reducing rewriting systems, and finite Cayley balls.

Elements are stored as canonical words (tuples of generator symbols). A
``CayleyBall`` enumerates every element of word length at most ``radius``
in ShortLex order and answers metric queries by breadth-first search on
the ball's own Cayley graph. Because those distances can overestimate the
true word metric near the rim, a pair ``(u, v)`` counts as boundary-safe
only when ``len(u) + len(v) <= radius``; every geodesic between such a
pair stays inside the ball.
"""

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from gamma_forge import _kernels

IDENTITY_TOKEN = "e"


class GroupError(ValueError):
    pass


class NonConfluentError(GroupError):
    def __init__(self, word, first, second):
        self.word, self.first, self.second = word, first, second
        super().__init__(
            f"rewriting is not confluent on {format_word(word)!r}: "
            f"normal forms {format_word(first)!r} and {format_word(second)!r}"
        )


class BoundaryError(GroupError):
    """A query needs distances the ball cannot certify."""


class BudgetError(GroupError):
    pass


@dataclass(frozen=True)
class GroupSpec:
    """Generators (closed under inverses), rewrite rules and ShortLex order."""

    name: str
    generators: tuple
    inverses: dict
    rules: tuple
    order: tuple = None

    def __post_init__(self):
        gens = tuple(self.generators)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "rules", tuple((tuple(l), tuple(r)) for l, r in self.rules))
        object.__setattr__(self, "order", tuple(self.order) if self.order else gens)
        self.validate()

    def validate(self):
        gens = set(self.generators)
        if IDENTITY_TOKEN in gens:
            raise GroupError(f"{IDENTITY_TOKEN!r} is reserved for the identity")
        if len(gens) != len(self.generators):
            raise GroupError("duplicate generator symbols")
        for g in self.generators:
            inv = self.inverses.get(g)
            if inv not in gens:
                raise GroupError(f"generator {g!r} has no inverse in the generating set")
            if self.inverses.get(inv) != g:
                raise GroupError(f"inverse map is not an involution at {g!r}")
        if set(self.order) != gens or len(self.order) != len(gens):
            raise GroupError("order must list every generator exactly once")
        for lhs, rhs in self.rules:
            if len(rhs) >= len(lhs):
                raise GroupError(f"rule {format_word(lhs)} -> {format_word(rhs)} is not length-reducing")
            for sym in lhs + rhs:
                if sym not in gens:
                    raise GroupError(f"unknown symbol {sym!r} in rule")

    @property
    def rank(self):
        return len(self.generators)

    def inverse_word(self, word):
        return tuple(self.inverses[s] for s in reversed(word))

    def shortlex_key(self, word):
        pos = self._positions()
        return (len(word), tuple(pos[s] for s in word))

    def _positions(self):
        pos = self.__dict__.get("_pos")
        if pos is None:
            pos = {s: i for i, s in enumerate(self.order)}
            object.__setattr__(self, "_pos", pos)
        return pos


def _free_rules(pairs):
    rules = []
    for a, b in pairs:
        rules.append(((a, b), ()))
        rules.append(((b, a), ()))
    return rules


def preset(name):
    """Built-in groups: ``free1``..``free3`` and ``pslz`` (Z/2 * Z/3)."""
    if name.startswith("free") and name[4:].isdigit():
        k = int(name[4:])
        if not 1 <= k <= 6:
            raise GroupError("free presets support rank 1..6")
        letters = "abcdfg"[:k]
        gens, inv = [], {}
        for c in letters:
            gens += [c, c.upper()]
            inv[c], inv[c.upper()] = c.upper(), c
        return GroupSpec(name, tuple(gens), inv, tuple(_free_rules([(c, c.upper()) for c in letters])))
    if name == "pslz":
        rules = [(("s", "s"), ()), (("t", "T"), ()), (("T", "t"), ()),
                 (("t", "t"), ("T",)), (("T", "T"), ("t",))]
        return GroupSpec("pslz", ("s", "t", "T"), {"s": "s", "t": "T", "T": "t"}, tuple(rules))
    raise GroupError(f"unknown group preset {name!r}")


def parse_word(text):
    text = text.strip()
    if text in ("", IDENTITY_TOKEN):
        return ()
    if " " in text:
        return tuple(text.split())
    return tuple(text)


def format_word(word):
    if not word:
        return IDENTITY_TOKEN
    if all(len(s) == 1 for s in word):
        return "".join(word)
    return " ".join(word)


def load_group_spec(path):
    """Read the sectioned text format (generators / inverses / rules / order)."""
    sections = {}
    current = None
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip().lower()
                sections.setdefault(current, [])
            elif current is None:
                raise GroupError(f"{path}: content before first section: {line!r}")
            else:
                sections[current].append(line)
    gens = tuple(s for line in sections.get("generators", []) for s in line.split())
    inv = {}
    for line in sections.get("inverses", []):
        parts = line.replace("=", " ").split()
        if len(parts) != 2:
            raise GroupError(f"bad inverse line {line!r}")
        a, b = parts
        inv[a], inv[b] = b, a
    rules = []
    for line in sections.get("rules", []):
        if "->" not in line:
            raise GroupError(f"bad rule line {line!r}")
        lhs, rhs = line.split("->", 1)
        rules.append((parse_word(lhs), parse_word(rhs)))
    order = tuple(s for line in sections.get("order", []) for s in line.split()) or None
    name = " ".join(sections.get("name", [])) or str(path)
    return GroupSpec(name, gens, inv, tuple(rules), order)


def resolve_group(text):
    """A preset name or a path to a group spec file."""
    try:
        return preset(text)
    except GroupError:
        pass
    return load_group_spec(text)


def _rule_index(spec):
    idx = spec.__dict__.get("_rule_idx")
    if idx is None:
        idx = {}
        for lhs, rhs in spec.rules:
            idx.setdefault(lhs, rhs)
        object.__setattr__(spec, "_rule_idx", idx)
        object.__setattr__(spec, "_rule_lens", sorted({len(l) for l in idx}))
    return idx, spec.__dict__["_rule_lens"]


def _rewrite(word, spec):
    idx, lens = _rule_index(spec)
    stack = []
    pending = list(reversed(word))
    while pending:
        stack.append(pending.pop())
        for n in lens:
            if n <= len(stack):
                tail = tuple(stack[-n:])
                rhs = idx.get(tail)
                if rhs is not None:
                    del stack[-n:]
                    pending.extend(reversed(rhs))
                    break
    return tuple(stack)


def _all_normal_forms(word, spec, limit=20000):
    idx, lens = _rule_index(spec)
    seen, todo, forms = {word}, [word], set()
    while todo:
        w = todo.pop()
        reducible = False
        for n in lens:
            for i in range(len(w) - n + 1):
                rhs = idx.get(w[i:i + n])
                if rhs is not None:
                    reducible = True
                    nxt = w[:i] + rhs + w[i + n:]
                    if nxt not in seen:
                        seen.add(nxt)
                        todo.append(nxt)
        if not reducible:
            forms.add(w)
        if len(seen) > limit:
            break
    return forms


def reduce(word, spec, exhaustive=False):
    """Canonical form of ``word``.

    With ``exhaustive=True`` every rewriting order is explored and a
    ``NonConfluentError`` names two distinct normal forms if they exist.
    """
    word = tuple(word)
    gens = set(spec.generators)
    for s in word:
        if s not in gens:
            raise GroupError(f"unknown symbol {s!r}")
    out = _rewrite(word, spec)
    if exhaustive:
        forms = _all_normal_forms(word, spec)
        others = sorted(forms - {out}, key=spec.shortlex_key)
        if others:
            raise NonConfluentError(word, out, others[0])
    return out


@dataclass(frozen=True)
class HyperbolicityAudit:
    delta_thin: int
    delta_config: int
    sample_count: int
    exhaustive: bool = True


class CayleyBall:
    """All elements of length <= radius with BFS distances on the ball."""

    def __init__(self, spec, radius, words, nbr, dense_cap=4500):
        self.spec = spec
        self.radius = radius
        self.words = words
        self.index = {w: i for i, w in enumerate(words)}
        self.lengths = np.array([len(w) for w in words], dtype=np.int32)
        self.nbr = nbr
        self.edges = [(i, int(j)) for i in range(len(words)) for j in nbr[i] if j > i]
        self._rows = {}
        self._dense = None
        self._dense_cap = dense_cap
        self._mult = {}
        self.center = 0

    def __len__(self):
        return len(self.words)

    @property
    def size(self):
        return len(self.words)

    def word(self, i):
        return self.words[i]

    def name(self, i):
        return format_word(self.words[i])

    def lookup(self, word):
        """Index of ``word`` (any spelling) or None if it lies outside."""
        return self.index.get(reduce(word, self.spec))

    def element(self, text):
        i = self.lookup(parse_word(text) if isinstance(text, str) else text)
        if i is None:
            raise BoundaryError(f"{text!r} is outside the radius-{self.radius} ball")
        return i

    # metric -------------------------------------------------------------

    def dense(self):
        if self._dense is None:
            if self.size > self._dense_cap:
                raise BudgetError(f"dense distance table refused for {self.size} vertices")
            self._dense = _kernels.all_pairs(self.nbr)
        return self._dense

    def dist_row(self, i):
        if self._dense is not None:
            return self._dense[i]
        row = self._rows.get(i)
        if row is None:
            row = _kernels.bfs_row(self.nbr, i)
            self._rows[i] = row
        return row

    def dist(self, i, j):
        return int(self.dist_row(i)[j])

    def is_safe(self, i, j):
        return int(self.lengths[i]) + int(self.lengths[j]) <= self.radius

    def geodesics_inside(self, i, j):
        """True when every geodesic from i to j provably stays in the ball.

        A vertex w on such a geodesic has 2|w| <= |i| + |j| + d(i, j), and the
        ball distance bounds the true one from above.
        """
        return self.is_safe(i, j) or int(self.lengths[i]) + int(self.lengths[j]) + self.dist(i, j) <= 2 * self.radius

    def check_geodesics(self, *idx):
        for a, b in itertools.combinations(idx, 2):
            if not self.geodesics_inside(a, b):
                raise BoundaryError(f"geodesics from {self.name(a)} to {self.name(b)} may leave the radius-{self.radius} ball")

    def check_safe(self, *idx):
        for a, b in itertools.combinations(idx, 2):
            if not self.is_safe(a, b):
                raise BoundaryError(
                    f"pair ({self.name(a)}, {self.name(b)}) is not boundary-safe at radius {self.radius}"
                )

    def core(self, r):
        """Vertices of length <= r."""
        return np.flatnonzero(self.lengths <= r)

    def ball_around(self, i, r):
        return np.flatnonzero((self.dist_row(i) <= r) & (self.dist_row(i) >= 0))

    def sphere(self, i, r):
        return np.flatnonzero(self.dist_row(i) == r)

    # group structure ----------------------------------------------------

    def multiply(self, i, j):
        """Index of word(i)*word(j), or None outside the ball."""
        key = (i, j)
        if key not in self._mult:
            self._mult[key] = self.index.get(reduce(self.words[i] + self.words[j], self.spec))
        return self._mult[key]

    def inverse(self, i):
        return self.index.get(self.spec.inverse_word(self.words[i]))

    def translate(self, g, i):
        out = self.multiply(g, i)
        if out is None:
            raise BoundaryError(f"{self.name(g)}*{self.name(i)} leaves the ball")
        return out

    def offset(self, i, j):
        """Index of word(i)^-1 word(j)."""
        inv = self.inverse(i)
        out = None if inv is None else self.multiply(inv, j)
        if out is None:
            raise BoundaryError(f"{self.name(i)}^-1*{self.name(j)} leaves the ball")
        return out


def build_ball(spec, radius, vertex_budget=250_000, check_confluence=False, dense_cap=4500):
    """Breadth-first enumeration of the radius-``radius`` ball around e."""
    if radius < 0:
        raise GroupError("radius must be nonnegative")
    gens = spec.generators
    layers = [[()]]
    seen = {(): 0}
    total = 1
    for r in range(1, radius + 1):
        layer = set()
        for w in layers[-1]:
            for s in gens:
                cand = w + (s,)
                nf = reduce(cand, spec, exhaustive=check_confluence)
                if nf not in seen and nf not in layer:
                    if len(nf) != r:
                        raise GroupError(
                            f"normal form {format_word(nf)!r} has length {len(nf)} but BFS depth {r}; "
                            "the rewriting system does not give geodesic normal forms"
                        )
                    layer.add(nf)
        total += len(layer)
        if total > vertex_budget:
            raise BudgetError(f"ball of radius {radius} exceeds vertex budget {vertex_budget} ({total}+ vertices)")
        ordered = sorted(layer, key=spec.shortlex_key)
        for w in ordered:
            seen[w] = len(seen)
        layers.append(ordered)
    words = [w for layer in layers for w in layer]
    index = {w: i for i, w in enumerate(words)}
    nbr = np.full((len(words), len(gens)), -1, dtype=np.int32)
    for i, w in enumerate(words):
        for k, s in enumerate(gens):
            j = index.get(reduce(w + (s,), spec))
            if j is not None:
                nbr[i, k] = j
    return CayleyBall(spec, radius, words, nbr, dense_cap=dense_cap)


def gromov_product(x, y, z, ball):
    """(x|y)_z = (d(x,z) + d(y,z) - d(x,y)) / 2 as an exact half-integer."""
    ball.check_safe(x, y, z)
    return Fraction(ball.dist(x, z) + ball.dist(y, z) - ball.dist(x, y), 2)


def geod_set(Y, ball):
    """Vertices lying on some geodesic between two points of ``Y``."""
    Y = sorted(set(Y))
    if not Y:
        raise GroupError("geod_set needs a nonempty vertex set")
    ball.check_geodesics(*Y)
    rows = {y: ball.dist_row(y) for y in Y}
    hit = np.zeros(ball.size, dtype=bool)
    for a, b in itertools.combinations_with_replacement(Y, 2):
        ra, rb = rows[a], rows[b]
        hit |= (ra >= 0) & (rb >= 0) & (ra + rb == ra[b])
    return frozenset(int(i) for i in np.flatnonzero(hit))


def distance_to_set(z, S, ball):
    row = ball.dist_row(z)
    return int(min(row[list(S)]))


def distinguished_geodesic(x, y, ball):
    """Path x * (prefixes of the canonical word of x^-1 y)."""
    g = ball.offset(x, y)
    w = ball.words[g]
    path = []
    for k in range(len(w) + 1):
        v = ball.lookup(ball.words[x] + w[:k])
        if v is None:
            raise BoundaryError(f"geodesic from {ball.name(x)} to {ball.name(y)} leaves the ball")
        path.append(v)
    return path


def geodesic_point(x, y, t, ball):
    """The point at distance t from x on the distinguished geodesic."""
    path = distinguished_geodesic(x, y, ball)
    if not 0 <= t < len(path):
        raise GroupError(f"t={t} outside [0, {len(path) - 1}]")
    return path[t]


def audit_delta(ball, samples=20000, seed=0, core_radius=None):
    """Smallest integer delta making every audited geodesic triangle delta-thin.

    Triangles are built on the core of radius ``radius // 2`` (all
    corner pairs boundary-safe) from distinguished geodesics; degenerate
    triangles (x, y, x) audit bigons between the two oriented geodesics.
    """
    if core_radius is None:
        core_radius = ball.radius // 2
    core = [int(i) for i in ball.core(core_radius)]
    triples = [(i, j, i) for i, j in itertools.combinations(core, 2)]
    triples += list(itertools.combinations(core, 3))
    exhaustive = len(triples) <= samples
    if not exhaustive:
        triples = random.Random(seed).sample(triples, samples)
    if not triples:
        return HyperbolicityAudit(0, 1, 0, True)
    cache = {}

    def path(a, b):
        if (a, b) not in cache:
            cache[(a, b)] = distinguished_geodesic(a, b, ball)
        return cache[(a, b)]

    tri_paths = [(path(a, b), path(b, c), path(c, a)) for a, b, c in triples]
    width = max(len(p) for tp in tri_paths for p in tp)
    paths = np.zeros((len(triples), 3, width), dtype=np.int32)
    lengths = np.zeros((len(triples), 3), dtype=np.int32)
    for k, tp in enumerate(tri_paths):
        for j, p in enumerate(tp):
            paths[k, j, : len(p)] = p
            lengths[k, j] = len(p)
    if ball.size <= ball._dense_cap:
        dist = ball.dense()
        local = paths
    else:
        # restrict the table to the vertices the paths touch
        used = np.unique(np.concatenate([paths[k, j, : lengths[k, j]] for k in range(len(triples)) for j in range(3)]))
        remap = {int(v): i for i, v in enumerate(used)}
        dist = np.stack([ball.dist_row(int(v))[used] for v in used])
        local = np.vectorize(lambda v: remap.get(int(v), 0))(paths).astype(np.int32)
    thin = _kernels.triangle_thinness(dist, local, lengths)
    delta_thin = int(thin.max()) if thin.size else 0
    return HyperbolicityAudit(delta_thin, max(1, delta_thin), len(triples), exhaustive)
