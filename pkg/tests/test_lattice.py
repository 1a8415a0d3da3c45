import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specedge import lattice
from specedge.lattice import ContinuumShape, LatticeDomain


class TestScaleDomain:
    def test_unit_interval_l4(self, unit_interval):
        dom = lattice.scale_domain(unit_interval, 4)
        assert dom.sites == ((1,), (2,), (3,))

    def test_unit_square_l2(self, unit_square):
        dom = lattice.scale_domain(unit_square, 2)
        assert dom.sites == ((1, 1),)

    def test_unit_interval_l100_count(self, unit_interval):
        assert len(lattice.scale_domain(unit_interval, 100)) == 99

    def test_degenerate_domain_errors(self):
        tiny = ContinuumShape.box((0.0,), (0.4,))
        with pytest.raises(ValueError, match="degenerate"):
            lattice.scale_domain(tiny, 1)

    def test_lexicographic_order(self, unit_square):
        dom = lattice.scale_domain(unit_square, 5)
        assert list(dom.sites) == sorted(dom.sites)

    def test_monotone_in_scale(self, unit_interval):
        # every site of D_L, rescaled by L'/L, lies within distance d of D_{L'}
        small = lattice.scale_domain(unit_interval, 7)
        large = lattice.scale_domain(unit_interval, 21)
        for s in small.sites:
            target = (s[0] * 3,)
            assert lattice.l1_distance_to_set(target, large.sites) <= 1

    def test_ball_shape(self):
        shape = ContinuumShape.ball((0.0, 0.0), 1.0)
        dom = lattice.scale_domain(shape, 3)
        assert (0, 0) in dom
        assert (3, 0) not in dom  # boundary excluded, open set
        assert (3, 1) not in dom

    def test_union_shape(self):
        shape = ContinuumShape.union_of_boxes([((0.0,), (1.0,)), ((2.0,), (3.0,))])
        dom = lattice.scale_domain(shape, 4)
        xs = [s[0] for s in dom.sites]
        assert xs == [1, 2, 3, 9, 10, 11]

    def test_union_disjointness_enforced(self):
        with pytest.raises(ValueError, match="disjoint"):
            ContinuumShape.union_of_boxes([((0.0,), (2.0,)), ((1.0,), (3.0,))])


class TestBall:
    def test_cross_shape_d2(self):
        b = lattice.ball((0, 0), 1)
        assert len(b) == 5

    def test_radius_zero(self):
        assert lattice.ball((0,), 0).sites == ((0,),)

    def test_within_intersection(self):
        within = lattice.integer_box((0,), (6,))
        b = lattice.ball((5,), 2, within=within)
        assert b.sites == ((3,), (4,), (5,), (6,))

    def test_count_formula_d1(self):
        for r in range(4):
            assert len(lattice.ball((0,), r)) == 2 * r + 1


class TestComponents:
    def test_two_pieces(self):
        dom = LatticeDomain(1, [(0,), (1,), (2,), (5,), (6,)])
        comps = lattice.connected_components(dom)
        assert [c.sites for c in comps] == [((0,), (1,), (2,)), ((5,), (6,))]

    def test_empty(self):
        assert lattice.connected_components(LatticeDomain(1, [])) == []

    def test_diagonal_not_adjacent(self):
        dom = LatticeDomain(2, [(0, 0), (1, 1)])
        comps = lattice.connected_components(dom)
        assert len(comps) == 2
        assert all(len(c) == 1 for c in comps)


class TestBoundary:
    def test_singleton_d1(self):
        assert lattice.boundary(LatticeDomain(1, [(0,)])).sites == ((-1,), (1,))

    def test_pair_d1(self):
        assert lattice.boundary(LatticeDomain(1, [(0,), (1,)])).sites == ((-1,), (2,))

    def test_singleton_d2(self):
        assert len(lattice.boundary(LatticeDomain(2, [(0, 0)]))) == 4


site_sets_1d = st.sets(st.integers(-8, 8), min_size=1, max_size=24).map(
    lambda xs: LatticeDomain(1, [(x,) for x in xs])
)
site_sets_2d = st.sets(
    st.tuples(st.integers(-4, 4), st.integers(-4, 4)), min_size=1, max_size=24
).map(lambda xs: LatticeDomain(2, list(xs)))


@settings(max_examples=60, deadline=None)
@given(st.one_of(site_sets_1d, site_sets_2d))
def test_components_partition(dom):
    comps = lattice.connected_components(dom)
    seen = set()
    for c in comps:
        assert not (seen & set(c.sites))
        seen.update(c.sites)
    assert seen == set(dom.sites)
    # no edge joins two distinct components
    for i, c in enumerate(comps):
        for j, other in enumerate(comps):
            if i >= j:
                continue
            for s in c.sites:
                for nb in dom.neighbors(s):
                    assert nb not in other


@settings(max_examples=60, deadline=None)
@given(st.one_of(site_sets_1d, site_sets_2d))
def test_boundary_properties(dom):
    bnd = lattice.boundary(dom)
    assert not (set(bnd.sites) & set(dom.sites))
    for s in bnd.sites:
        assert any(nb in dom for nb in dom.neighbors(s))


class TestSerialization:
    def test_domain_roundtrip(self):
        dom = LatticeDomain(2, [(0, 1), (3, -2)])
        obj = json.loads(json.dumps(dom.to_json()))
        assert LatticeDomain.from_json(obj) == dom
        assert obj == {"d": 2, "sites": [[0, 1], [3, -2]]}

    def test_shape_roundtrip(self):
        for shape in (
            ContinuumShape.box((0.0,), (1.0,)),
            ContinuumShape.ball((0.5, 0.5), 0.25),
            ContinuumShape.union_of_boxes([((0.0,), (1.0,)), ((2.0,), (3.0,))]),
        ):
            assert ContinuumShape.from_json(shape.to_json()) == shape


class TestDomainBasics:
    def test_membership_and_rank(self):
        dom = lattice.integer_box((0, 0), (2, 2))
        assert (1, 1) in dom
        assert (3, 0) not in dom
        assert dom.rank((0, 1)) == 1

    def test_duplicates_removed(self):
        dom = LatticeDomain(1, [(0,), (0,), (1,)])
        assert len(dom) == 2

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            LatticeDomain(2, [(0,)])

    def test_volume(self):
        assert ContinuumShape.box((0.0, 0.0), (2.0, 3.0)).volume() == 6.0
        assert abs(ContinuumShape.ball((0.0,), 1.0).volume() - 2.0) < 1e-12
