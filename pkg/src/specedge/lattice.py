"""Finite lattice geometry: domains, boxes, balls, components, boundaries."""

from __future__ import annotations

import itertools
import math

import numpy as np

# A site is a plain tuple of ints, one entry per dimension.
Site = tuple


def _unit_steps(d):
    steps = []
    for axis in range(d):
        for sign in (1, -1):
            e = [0] * d
            e[axis] = sign
            steps.append(tuple(e))
    return steps


def add(site, step):
    return tuple(a + b for a, b in zip(site, step))


def l1(a, b) -> int:
    return sum(abs(x - y) for x, y in zip(a, b))


class LatticeDomain:
    """Finite subset of Z^d with implicit nearest-neighbor adjacency.

    Sites are kept duplicate-free in lexicographic order; a hash index
    backs O(1) membership and rank queries.  Instances are immutable
    after construction and safe to share.
    """

    __slots__ = ("dim", "sites", "_rank")

    def __init__(self, dim: int, sites):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        normalized = {tuple(int(c) for c in s) for s in sites}
        for s in normalized:
            if len(s) != dim:
                raise ValueError(f"site {s} does not have dimension {dim}")
        self.dim = dim
        self.sites = tuple(sorted(normalized))
        self._rank = {s: i for i, s in enumerate(self.sites)}

    def __len__(self):
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, site):
        return tuple(site) in self._rank

    def __eq__(self, other):
        return (
            isinstance(other, LatticeDomain)
            and self.dim == other.dim
            and self.sites == other.sites
        )

    def __hash__(self):
        return hash((self.dim, self.sites))

    def __repr__(self):
        return f"LatticeDomain(d={self.dim}, n={len(self.sites)})"

    def rank(self, site) -> int:
        """Position of `site` in the lexicographic ordering."""
        return self._rank[tuple(site)]

    def neighbors(self, site):
        """In-domain nearest neighbors of `site` (site itself need not belong)."""
        site = tuple(site)
        for step in _unit_steps(self.dim):
            nb = add(site, step)
            if nb in self._rank:
                yield nb

    def coords(self) -> np.ndarray:
        return np.asarray(self.sites, dtype=np.int64).reshape(len(self.sites), self.dim)

    def bounding_box(self):
        """Inclusive (lower, upper) integer corners; None for an empty domain."""
        if not self.sites:
            return None
        arr = self.coords()
        return tuple(arr.min(axis=0)), tuple(arr.max(axis=0))

    def diameter(self) -> int:
        """l1 diameter (exact, quadratic scan; meant for small domains)."""
        best = 0
        for a in self.sites:
            for b in self.sites:
                dd = l1(a, b)
                if dd > best:
                    best = dd
        return best

    def to_json(self) -> dict:
        return {"d": self.dim, "sites": [list(s) for s in self.sites]}

    @classmethod
    def from_json(cls, obj) -> "LatticeDomain":
        return cls(obj["d"], obj["sites"])


class ContinuumShape:
    """Bounded open region of R^d used to generate scaled lattice domains.

    Supported kinds: axis box, Euclidean ball, finite union of pairwise
    disjoint axis boxes.
    """

    __slots__ = ("kind", "params")

    def __init__(self, kind, params):
        self.kind = kind
        self.params = params

    @classmethod
    def box(cls, lower, upper) -> "ContinuumShape":
        lower = tuple(float(v) for v in lower)
        upper = tuple(float(v) for v in upper)
        if len(lower) != len(upper) or not lower:
            raise ValueError("box corners must be nonempty vectors of equal length")
        if not all(lo < hi for lo, hi in zip(lower, upper)):
            raise ValueError("box must be open and nonempty: lower < upper required")
        return cls("box", ((lower, upper),))

    @classmethod
    def ball(cls, center, radius) -> "ContinuumShape":
        center = tuple(float(v) for v in center)
        radius = float(radius)
        if radius <= 0 or not center:
            raise ValueError("ball needs a positive radius and a nonempty center")
        return cls("ball", (center, radius))

    @classmethod
    def union_of_boxes(cls, boxes) -> "ContinuumShape":
        parts = tuple(
            (tuple(float(v) for v in lo), tuple(float(v) for v in hi)) for lo, hi in boxes
        )
        if not parts:
            raise ValueError("union of boxes must be nonempty")
        for lo, hi in parts:
            if len(lo) != len(parts[0][0]) or not all(a < b for a, b in zip(lo, hi)):
                raise ValueError("each box must be open, nonempty, equal dimension")
        for i in range(len(parts)):
            for j in range(i + 1, len(parts)):
                (lo1, hi1), (lo2, hi2) = parts[i], parts[j]
                if all(a < d and c < b for a, b, c, d in zip(lo1, hi1, lo2, hi2)):
                    raise ValueError("boxes in a union must be pairwise disjoint")
        return cls("union-of-boxes", parts)

    @property
    def dim(self) -> int:
        if self.kind == "ball":
            return len(self.params[0])
        return len(self.params[0][0])

    def contains(self, point) -> bool:
        """Strict (open-set) membership of a continuum point."""
        if self.kind == "ball":
            center, radius = self.params
            return sum((p - c) ** 2 for p, c in zip(point, center)) < radius**2
        return any(
            all(lo < p < hi for p, lo, hi in zip(point, lower, upper))
            for lower, upper in self.params
        )

    def bounds(self):
        if self.kind == "ball":
            center, radius = self.params
            return (
                tuple(c - radius for c in center),
                tuple(c + radius for c in center),
            )
        lows = [min(lo[i] for lo, _ in self.params) for i in range(self.dim)]
        highs = [max(hi[i] for _, hi in self.params) for i in range(self.dim)]
        return tuple(lows), tuple(highs)

    def volume(self) -> float:
        """Lebesgue volume (boxes exactly; ball via the unit-ball formula)."""
        if self.kind == "ball":
            center, radius = self.params
            d = len(center)
            return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * radius**d
        return sum(
            math.prod(hi - lo for lo, hi in zip(lower, upper))
            for lower, upper in self.params
        )

    def to_json(self) -> dict:
        if self.kind == "ball":
            center, radius = self.params
            return {"kind": "ball", "center": list(center), "radius": radius}
        return {
            "kind": self.kind,
            "boxes": [[list(lo), list(hi)] for lo, hi in self.params],
        }

    @classmethod
    def from_json(cls, obj) -> "ContinuumShape":
        if obj["kind"] == "ball":
            return cls.ball(obj["center"], obj["radius"])
        if obj["kind"] == "box":
            (lo, hi), = obj["boxes"]
            return cls.box(lo, hi)
        return cls.union_of_boxes(obj["boxes"])

    def __repr__(self):
        return f"ContinuumShape({self.kind}, {self.params})"

    def __eq__(self, other):
        return (
            isinstance(other, ContinuumShape)
            and self.kind == other.kind
            and self.params == other.params
        )

    def __hash__(self):
        return hash((self.kind, self.params))


def scale_domain(shape: ContinuumShape, L: int) -> LatticeDomain:
    """All integer points x with x/L inside the shape, lexicographically ordered."""
    if L < 1:
        raise ValueError("scale L must be a positive integer")
    lo, hi = shape.bounds()
    ranges = [
        range(math.floor(a * L) - 1, math.ceil(b * L) + 2) for a, b in zip(lo, hi)
    ]
    inv = 1.0 / L
    sites = [
        x
        for x in itertools.product(*ranges)
        if shape.contains(tuple(c * inv for c in x))
    ]
    if not sites:
        raise ValueError("degenerate domain: no lattice site falls inside the shape")
    return LatticeDomain(shape.dim, sites)


def integer_box(lower, upper) -> LatticeDomain:
    """Integer box with inclusive corners `lower` and `upper`."""
    lower = tuple(int(v) for v in lower)
    upper = tuple(int(v) for v in upper)
    if not all(a <= b for a, b in zip(lower, upper)):
        raise ValueError("integer box needs lower <= upper per coordinate")
    ranges = [range(a, b + 1) for a, b in zip(lower, upper)]
    return LatticeDomain(len(lower), itertools.product(*ranges))


def ball(center, R: int, within: LatticeDomain | None = None) -> LatticeDomain:
    """l1 ball of radius R around `center`, optionally intersected with a domain."""
    if R < 0:
        raise ValueError("radius must be nonnegative")
    center = tuple(int(c) for c in center)
    d = len(center)
    offsets = (
        off
        for off in itertools.product(range(-R, R + 1), repeat=d)
        if sum(abs(o) for o in off) <= R
    )
    sites = (add(center, off) for off in offsets)
    if within is not None:
        sites = (s for s in sites if s in within)
    return LatticeDomain(d, sites)


class _UnionFind:
    """Union-find with path compression, used for component extraction."""

    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[rj] = ri


def connected_components(U: LatticeDomain) -> list[LatticeDomain]:
    """Maximal nearest-neighbor-connected pieces, ordered by smallest site."""
    n = len(U)
    uf = _UnionFind(n)
    for i, s in enumerate(U.sites):
        for axis in range(U.dim):
            step = tuple(1 if a == axis else 0 for a in range(U.dim))
            nb = add(s, step)
            if nb in U:
                uf.union(i, U.rank(nb))
    groups: dict[int, list] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(U.sites[i])
    comps = [LatticeDomain(U.dim, g) for g in groups.values()]
    comps.sort(key=lambda c: c.sites[0])
    return comps


def boundary(V: LatticeDomain) -> LatticeDomain:
    """Outer vertex boundary: sites outside V that have an edge into V."""
    out = set()
    for s in V.sites:
        for step in _unit_steps(V.dim):
            nb = add(s, step)
            if nb not in V:
                out.add(nb)
    return LatticeDomain(V.dim, out)


def l1_distance_to_set(site, sites) -> int:
    """Minimal l1 distance from `site` to a nonempty collection of sites."""
    return min(l1(site, s) for s in sites)
