import numpy as np
import pytest

from specedge import field, lattice, operator, regions
from specedge.field import PotentialField

from conftest import planted_peak, principal_pair


@pytest.fixture(scope="module")
def peak_instance():
    domain, fld = planted_peak(21, peak_rank=3, peak_height=10.0, background=-10.0,
                               seed=1, noise=0.0)
    lam1, _ = principal_pair(domain, fld)
    return domain, fld, lam1


class TestExtract:
    def test_constant_field_whole_domain(self):
        dom = lattice.integer_box((0,), (1,))
        fld = PotentialField.from_values(dom, [0.0, 0.0])
        lam1, _ = principal_pair(dom, fld)
        assert lam1 == pytest.approx(-1.0)
        dec = regions.extract(dom, fld, R=1, A=1.0, lambda1=lam1)
        assert dec.region == dom
        assert len(dec.components) == 1

    def test_planted_peak_ball(self, peak_instance):
        domain, fld, lam1 = peak_instance
        assert lam1 == pytest.approx(8.0, abs=0.3)
        dec = regions.extract(domain, fld, R=2, A=1.0, lambda1=lam1)
        assert dec.region.sites == ((1,), (2,), (3,), (4,), (5,))
        assert len(dec.components) == 1

    def test_huge_a_gives_everything(self, peak_instance):
        domain, fld, lam1 = peak_instance
        A = (lam1 - fld.values.min()) / 2.0 + 1.0
        dec = regions.extract(domain, fld, R=1, A=A, lambda1=lam1)
        assert dec.region == domain

    def test_monotone_in_a_and_r(self, peak_instance):
        domain, fld, lam1 = peak_instance
        base = regions.extract(domain, fld, R=2, A=1.0, lambda1=lam1)
        wider_a = regions.extract(domain, fld, R=2, A=2.0, lambda1=lam1)
        wider_r = regions.extract(domain, fld, R=3, A=1.0, lambda1=lam1)
        assert set(base.region.sites) <= set(wider_a.region.sites)
        assert set(base.region.sites) <= set(wider_r.region.sites)

    def test_parameter_validation(self, peak_instance):
        domain, fld, lam1 = peak_instance
        with pytest.raises(ValueError):
            regions.extract(domain, fld, R=0, A=1.0, lambda1=lam1)
        with pytest.raises(ValueError):
            regions.extract(domain, fld, R=1, A=0.0, lambda1=lam1)

    def test_spectrum_additivity_over_components(self):
        # Dirichlet spectrum on the region equals the union over components
        domain, fld = planted_peak(60, peak_rank=10, peak_height=9.0,
                                   background=-8.0, seed=3)
        vals = fld.values.copy()
        vals[45] = 8.0  # second peak, far from the first
        fld = PotentialField.from_values(domain, vals)
        lam1, _ = principal_pair(domain, fld)
        dec = regions.extract(domain, fld, R=2, A=2.0, lambda1=lam1)
        assert len(dec.components) >= 2
        whole = operator.dense_eigenvalues(
            operator.assemble(dec.region, fld.restrict(dec.region))
        )
        pieces = np.concatenate([
            operator.dense_eigenvalues(operator.assemble(c, fld.restrict(c)))
            for c in dec.components
        ])
        assert np.sort(whole) == pytest.approx(np.sort(pieces), abs=1e-10)


class TestTrim:
    def test_single_component_never_trimmed(self, peak_instance):
        domain, fld, lam1 = peak_instance
        dec = regions.extract(domain, fld, R=2, A=1.0, lambda1=lam1)
        assert dec.trimmed == (False,)
        assert regions.trim(dec) == dec.components[0]

    def test_low_peak_trimmed(self):
        # A must be large enough that the low peak enters the region at all:
        # the threshold lambda1 - 2A ~ 8.1 - 2A needs to fall below 2
        domain, fld = planted_peak(100, peak_rank=20, peak_height=10.0,
                                   background=-10.0, seed=5, noise=0.1)
        vals = fld.values.copy()
        vals[80] = 2.0
        fld = PotentialField.from_values(domain, vals)
        lam1, _ = principal_pair(domain, fld)
        dec = regions.extract(domain, fld, R=2, A=3.5, lambda1=lam1)
        assert len(dec.components) == 2
        lams = [lam for lam, _ in dec.principal]
        low = int(np.argmin(lams))
        assert dec.trimmed[low] and not dec.trimmed[1 - low]
        kept = regions.trim(dec)
        assert set(kept.sites) == set(dec.components[1 - low].sites)

    def test_constant_field_untrimmed(self):
        dom = lattice.integer_box((0,), (5,))
        fld = PotentialField.from_values(dom, np.zeros(6))
        lam1, _ = principal_pair(dom, fld)
        dec = regions.extract(dom, fld, R=1, A=1.0, lambda1=lam1)
        assert dec.trimmed == (False,)
        assert regions.trim(dec) == dec.components[0]


class TestContractedDistance:
    def test_zero_on_component(self, peak_instance):
        domain, fld, lam1 = peak_instance
        dec = regions.extract(domain, fld, R=2, A=1.0, lambda1=lam1)
        cd = regions.contracted_distance(dec)
        for s in dec.components[0].sites:
            assert cd.distance(s, 0) == 0

    def test_adjacent_site_distance_one(self, peak_instance):
        domain, fld, lam1 = peak_instance
        dec = regions.extract(domain, fld, R=2, A=1.0, lambda1=lam1)
        cd = regions.contracted_distance(dec)
        comp = dec.components[0]
        for s in lattice.boundary(comp).sites:
            if s in domain:
                assert cd.distance(s, 0) == 1

    def test_known_distances_d1(self):
        # single component {4,5,6} on a line: d(9, C) = 3 via 9 -> 8 -> 7 -> C
        dom = lattice.integer_box((0,), (10,))
        vals = np.full(11, -10.0)
        vals[5] = 10.0
        fld = PotentialField.from_values(dom, vals)
        lam1, _ = principal_pair(dom, fld)
        dec = regions.extract(dom, fld, R=1, A=1.0, lambda1=lam1)
        assert dec.components[0].sites == ((4,), (5,), (6,))
        cd = regions.contracted_distance(dec)
        assert cd.distance((9,), 0) == 3
        assert cd.distance((0,), 0) == 4

    def test_shortcut_through_other_component(self):
        # an intervening component of width w shortens the path: d = dist - w + 1
        dom = lattice.integer_box((0,), (30,))
        vals = np.full(31, -10.0)
        vals[5] = 10.0
        vals[15] = 9.0
        fld = PotentialField.from_values(dom, vals)
        lam1, _ = principal_pair(dom, fld)
        dec = regions.extract(dom, fld, R=2, A=1.5, lambda1=lam1)
        assert len(dec.components) == 2
        cd = regions.contracted_distance(dec)
        # from site 25 to the component around 5: l1 distance to {3..7} is 18,
        # the component {13..17} (width 5) collapses to one vertex
        assert lattice.l1_distance_to_set((25,), dec.components[0].sites) == 18
        assert cd.distance((25,), 0) == 18 - 5 + 1

    def test_axioms_exhaustive_small_instances(self):
        rng = np.random.default_rng(10)
        for trial in range(12):
            d = 1 if trial % 3 else 2
            if d == 1:
                dom = lattice.integer_box((0,), (int(rng.integers(20, 60)) - 1,))
            else:
                dom = lattice.integer_box((0, 0), (9, 9))
            vals = -9.0 + rng.standard_normal(len(dom))
            for peak in rng.choice(len(dom), size=2, replace=False):
                vals[peak] = float(rng.uniform(7, 12))
            fld = PotentialField.from_values(dom, vals)
            lam1, _ = principal_pair(dom, fld)
            R = int(rng.integers(1, 4))
            dec = regions.extract(dom, fld, R=R, A=2.0, lambda1=lam1)
            cd = regions.contracted_distance(dec)
            assert regions.check_distance_axioms(dec, cd) == []

    def test_axioms_exhaustive_at_scale(self):
        # one full-size exhaustive sweep: |D| = 200 with several peaks
        rng = np.random.default_rng(42)
        dom = lattice.integer_box((0,), (199,))
        vals = -9.0 + rng.standard_normal(200)
        for peak in (20, 90, 95, 170):
            vals[peak] = float(rng.uniform(7, 12))
        fld = PotentialField.from_values(dom, vals)
        lam1, _ = principal_pair(dom, fld)
        dec = regions.extract(dom, fld, R=3, A=2.5, lambda1=lam1)
        cd = regions.contracted_distance(dec)
        assert regions.check_distance_axioms(dec, cd) == []

    def test_json_sentinel(self, peak_instance):
        domain, fld, lam1 = peak_instance
        dec = regions.extract(domain, fld, R=2, A=1.0, lambda1=lam1)
        cd = regions.contracted_distance(dec)
        obj = cd.to_json()
        assert obj["sentinel"] == regions.INT_INF

    def test_unreachable_component_gets_sentinel(self):
        # two lattice pieces, one component each: cross distances stay infinite
        dom = lattice.LatticeDomain(1, [(i,) for i in range(10)] + [(i + 50,) for i in range(10)])
        vals = np.full(20, -10.0)
        vals[5] = 9.0
        vals[15] = 9.0
        fld = PotentialField.from_values(dom, vals)
        lam1, _ = principal_pair(dom, fld)
        dec = regions.extract(dom, fld, R=1, A=1.0, lambda1=lam1)
        assert len(dec.components) == 2
        cd = regions.contracted_distance(dec)
        assert cd.distance((55,), 0) == regions.INT_INF
        assert cd.distance((5,), 0) == 0


class TestDistanceCompare:
    def test_upper_bound_and_constants(self, peak_instance):
        domain, fld, lam1 = peak_instance
        dec = regions.extract(domain, fld, R=2, A=1.0, lambda1=lam1)
        rep = regions.distance_compare(dec)
        assert rep.upper_bound_ok
        assert 0 < rep.c1 <= 1.0
        assert rep.c2 >= 0.0

    def test_no_intervening_component_exact(self):
        dom = lattice.integer_box((0,), (10,))
        vals = np.full(11, -10.0)
        vals[5] = 10.0
        fld = PotentialField.from_values(dom, vals)
        lam1, _ = principal_pair(dom, fld)
        dec = regions.extract(dom, fld, R=1, A=1.0, lambda1=lam1)
        cd = regions.contracted_distance(dec)
        comp = dec.components[0]
        for s in dom.sites:
            dist = lattice.l1_distance_to_set(s, comp.sites)
            assert cd.distance(s, 0) == dist

    def test_upper_bound_random_instances(self):
        rng = np.random.default_rng(77)
        for trial in range(100):
            dom = lattice.integer_box((0,), (int(rng.integers(20, 80)) - 1,))
            vals = -9.0 + rng.standard_normal(len(dom))
            for peak in rng.choice(len(dom), size=int(rng.integers(1, 4)), replace=False):
                vals[peak] = float(rng.uniform(6, 12))
            fld = PotentialField.from_values(dom, vals)
            lam1, _ = principal_pair(dom, fld)
            dec = regions.extract(dom, fld, R=int(rng.integers(1, 4)), A=2.0, lambda1=lam1)
            rep = regions.distance_compare(dec)
            assert rep.upper_bound_ok
