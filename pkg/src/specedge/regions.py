"""Localization geometry: the large-field region, its components, trimming,
and the contracted distance obtained by collapsing each component to a vertex."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import lattice, operator
from .field import PotentialField
from .lattice import LatticeDomain

INT_INF = np.iinfo(np.int64).max


@dataclass(frozen=True)
class RegionDecomposition:
    """The region where the field is within 2A of the top eigenvalue, dilated
    by an l1 ball of radius R, together with its connected components.

    `principal` holds one (eigenvalue, eigenvector) pair per component;
    `trimmed[i]` marks components whose principal eigenvalue falls more than
    A below the global one.  The component attaining the largest principal
    eigenvalue is never trimmed: some component must carry the global
    principal eigenfunction up to the truncation error.
    """

    base: LatticeDomain
    field: PotentialField
    R: int
    A: float
    lambda1: float
    region: LatticeDomain
    components: tuple
    principal: tuple
    trimmed: tuple

    def component_of(self, site):
        for i, comp in enumerate(self.components):
            if site in comp:
                return i
        return None

    def component_diameters(self) -> list:
        """l1 diameters per component; observed statistics, never enforced."""
        return [c.diameter() for c in self.components]

    def to_json(self, include_distances=None) -> dict:
        obj = {
            "R": self.R,
            "A": self.A,
            "lambda1": self.lambda1,
            "components": [c.to_json()["sites"] for c in self.components],
            "principal_eigenvalues": [float(lam) for lam, _ in self.principal],
            "trimmed": list(self.trimmed),
            "diameters": self.component_diameters(),
        }
        if include_distances is not None:
            obj["distances"] = include_distances.to_json()["distances"]
        return obj


def large_field_region(
    domain: LatticeDomain,
    field: PotentialField,
    R: int,
    A: float,
    lambda1: float,
) -> LatticeDomain:
    """Union of l1 balls of radius R around sites with xi >= lambda1 - 2A."""
    if R < 1:
        raise ValueError("need R >= 1")
    if not A > 0:
        raise ValueError("need A > 0")
    threshold = lambda1 - 2.0 * A
    region_sites = set()
    for site, value in zip(domain.sites, field.values):
        if value >= threshold:
            region_sites.update(lattice.ball(site, R, within=domain).sites)
    return LatticeDomain(domain.dim, region_sites)


def extract(
    domain: LatticeDomain,
    field: PotentialField,
    R: int,
    A: float,
    lambda1: float,
) -> RegionDecomposition:
    """Extract the decomposition at threshold lambda1 - 2A with dilation radius R.

    lambda1 is taken as an input (computed by the operator module) so the
    extraction is a pure function of (field, lambda1, R, A).
    """
    region = large_field_region(domain, field, R, A, lambda1)
    components = tuple(lattice.connected_components(region))
    principal = []
    for comp in components:
        H = operator.assemble(comp, field.restrict(comp))
        res = operator.top_eigs(H, 1)
        principal.append((float(res.eigenvalues[0]), res.vectors[:, 0]))
    trimmed = [lam < lambda1 - A for lam, _ in principal]
    if principal:
        trimmed[int(np.argmax([lam for lam, _ in principal]))] = False
    return RegionDecomposition(
        base=domain,
        field=field,
        R=R,
        A=A,
        lambda1=lambda1,
        region=region,
        components=components,
        principal=tuple(principal),
        trimmed=tuple(trimmed),
    )


def trim(dec: RegionDecomposition) -> LatticeDomain:
    """Union of the untrimmed components."""
    keep = [c for c, t in zip(dec.components, dec.trimmed) if not t]
    if not keep:
        raise ValueError(
            "all components trimmed; inconsistent decomposition, the principal "
            "eigenfunction must live somewhere"
        )
    sites = set()
    for c in keep:
        sites.update(c.sites)
    return LatticeDomain(dec.base.dim, sites)


@dataclass(frozen=True)
class ContractedDistance:
    """Graph distances after collapsing every component to a single vertex.

    dist[i, r] is the distance from site rank r (in the base domain) to the
    vertex of component i; INT_INF marks sites unreachable inside the domain.
    """

    base: LatticeDomain
    components: tuple
    dist: np.ndarray

    def distance(self, site, comp_index: int) -> int:
        return int(self.dist[comp_index, self.base.rank(site)])

    def to_json(self) -> dict:
        return {"sentinel": int(INT_INF), "distances": self.dist.tolist()}


def contracted_distance(dec: RegionDecomposition) -> ContractedDistance:
    """BFS distance from each contracted component-vertex to every site of the base.

    Components are pairwise non-adjacent (they are maximal connected pieces),
    so the contracted graph has ordinary vertices for sites outside the region
    plus one vertex per component, with no component-component edges.
    """
    base = dec.base
    n = len(base)
    m = len(dec.components)
    comp_id = np.full(n, -1, dtype=np.int64)
    for i, comp in enumerate(dec.components):
        for s in comp.sites:
            comp_id[base.rank(s)] = i

    # adjacency in the contracted graph, built once
    site_neighbors: list[list[int]] = [[] for _ in range(n)]
    comp_neighbors: list[set[int]] = [set() for _ in range(m)]
    for r, s in enumerate(base.sites):
        if comp_id[r] >= 0:
            continue
        seen_comps = set()
        for nb in base.neighbors(s):
            q = base.rank(nb)
            ci = comp_id[q]
            if ci >= 0:
                seen_comps.add(int(ci))
            else:
                site_neighbors[r].append(q)
        for ci in seen_comps:
            comp_neighbors[ci].add(r)
            site_neighbors[r].append(n + ci)

    dist = np.full((m, n), INT_INF, dtype=np.int64)
    for i in range(m):
        node_dist = np.full(n + m, INT_INF, dtype=np.int64)
        node_dist[n + i] = 0
        queue = deque([n + i])
        while queue:
            v = queue.popleft()
            dv = node_dist[v]
            if v >= n:
                nbs = comp_neighbors[v - n]
            else:
                nbs = site_neighbors[v]
            for w in nbs:
                if node_dist[w] == INT_INF:
                    node_dist[w] = dv + 1
                    queue.append(w)
        for r in range(n):
            ci = comp_id[r]
            if ci >= 0:
                dist[i, r] = node_dist[n + ci]
            else:
                dist[i, r] = node_dist[r]
    return ContractedDistance(base=base, components=dec.components, dist=dist)


def check_distance_axioms(dec: RegionDecomposition, cd: ContractedDistance) -> list:
    """Exhaustively check the three distance requirements on small domains.

    (D0) nonnegative, zero exactly on the component itself;
    (D1) stepping to the l1 sphere of radius R inside the domain lowers the
         distance by at most R;
    (D2) from a site of another component, one step off that component
         lowers the distance by at most 1.

    Returns a list of violation records (empty when all axioms hold).
    """
    base, R = dec.base, dec.R
    violations = []
    in_region = {s for c in dec.components for s in c.sites}
    for i, comp in enumerate(dec.components):
        comp_sites = set(comp.sites)
        for r, z in enumerate(base.sites):
            dzi = cd.dist[i, r]
            if dzi < 0 or (z in comp_sites) != (dzi == 0):
                violations.append({"axiom": "D0", "component": i, "site": z})
        for z in base.sites:
            if z in in_region:
                continue
            dz = cd.dist[i, base.rank(z)]
            if dz == INT_INF:
                continue
            for y in lattice.ball(z, R, within=base).sites:
                if lattice.l1(y, z) != R:
                    continue
                dy = cd.dist[i, base.rank(y)]
                if dz > dy + R:
                    violations.append(
                        {"axiom": "D1", "component": i, "site": z, "via": y}
                    )
        for j, other in enumerate(dec.components):
            if j == i:
                continue
            for z in other.sites:
                dz = cd.dist[i, base.rank(z)]
                for y in lattice.boundary(other).sites:
                    if y not in base:
                        continue
                    dy = cd.dist[i, base.rank(y)]
                    if dy != INT_INF and dz > dy + 1:
                        violations.append(
                            {"axiom": "D2", "component": i, "site": z, "via": y}
                        )
    return violations


@dataclass(frozen=True)
class DistanceComparison:
    """Contracted versus l1 distance over one decomposition."""

    upper_bound_ok: bool
    worst_excess: int
    c1: float
    c2: float
    n_pairs: int

    def to_json(self):
        return {
            "upper_bound_ok": self.upper_bound_ok,
            "worst_excess": self.worst_excess,
            "c1": self.c1,
            "c2": self.c2,
            "n_pairs": self.n_pairs,
        }


def distance_compare(dec: RegionDecomposition, baseline=None) -> DistanceComparison:
    """Compare the contracted distance with a baseline metric (l1 by default).

    Verifies d(x, C) <= baseline(x, C) for every site and component, and
    fits empirical constants (c1, c2) such that d >= c1 * baseline - c2 * R
    over the sample: c1 is the least-squares slope through the origin, c2
    the smallest offset making the lower bound hold everywhere.
    """
    if baseline is None:
        baseline = lambda site, comp: lattice.l1_distance_to_set(site, comp.sites)
    cd = contracted_distance(dec)
    ds, bs = [], []
    worst_excess = 0
    for i, comp in enumerate(dec.components):
        for r, site in enumerate(dec.base.sites):
            d_val = cd.dist[i, r]
            if d_val == INT_INF:
                continue
            b_val = baseline(site, comp)
            ds.append(int(d_val))
            bs.append(int(b_val))
            worst_excess = max(worst_excess, int(d_val) - int(b_val))
    ds_arr = np.asarray(ds, dtype=np.float64)
    bs_arr = np.asarray(bs, dtype=np.float64)
    denom = float(bs_arr @ bs_arr)
    c1 = float(ds_arr @ bs_arr / denom) if denom > 0 else 1.0
    c1 = min(c1, 1.0)
    c2 = float(np.max(c1 * bs_arr - ds_arr, initial=0.0)) / max(dec.R, 1)
    return DistanceComparison(
        upper_bound_ok=worst_excess <= 0,
        worst_excess=worst_excess,
        c1=c1,
        c2=c2,
        n_pairs=len(ds),
    )
