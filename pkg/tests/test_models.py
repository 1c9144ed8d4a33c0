from fractions import Fraction

import pytest

from neumann_lab.errors import InputError, OverflowCapError
from neumann_lab import models
from neumann_lab.graphs import is_connected


class TestCombWeights:
    def test_closed_forms_at_origin(self):
        g = models.make_comb()
        v = models.comb_vertex_id
        assert g.edge_weight(v(0, 0), v(1, 0)) == 1          # 2^(0*0)
        assert g.edge_weight(v(0, 0), v(0, 1)) == 16         # 4^(0+2)
        assert g.measure(v(0, 3)) == Fraction(1, 8)          # 2^-3

    def test_closed_forms_everywhere_below_bound(self):
        g = models.make_comb()
        v = models.comb_vertex_id
        for n in range(6):
            for k in range(8):
                assert g.edge_weight(v(k, n), v(k + 1, n)) == Fraction(2) ** (n * k)
            assert g.edge_weight(v(0, n), v(0, n + 1)) == Fraction(4) ** (n + 2)
            assert g.measure(v(0, n)) == Fraction(1, 2 ** n)
            assert g.measure(v(3, n)) == 1

    def test_pairing_roundtrip(self):
        for k in range(20):
            for n in range(20):
                assert models.comb_vertex_label(models.comb_vertex_id(k, n)) == (k, n)

    def test_labels_exposed(self):
        g = models.make_comb()
        assert g.label(models.comb_vertex_id(5, 7)) == (5, 7)


class TestExhaustions:
    def test_chain_prefixes(self):
        m = models.PRESETS["bd:unit"]()
        ex = models.make_exhaustion(m, 3)
        assert ex.sets == ((0,), (0, 1), (0, 1, 2))

    def test_comb_rectangle_j1_has_six_vertices(self):
        rect = models.comb_rectangle(1)
        labels = {models.comb_vertex_label(v) for v in rect}
        assert labels == {(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)}

    def test_comb_rectangles_nested_and_connected(self):
        m = models.PRESETS["comb"]()
        ex = models.make_exhaustion(m, 5)
        for a, b in zip(ex.sets, ex.sets[1:]):
            assert set(a) <= set(b)
        for s in ex.sets:
            assert is_connected(m.graph, s)

    def test_hop_balls_on_path_are_intervals(self):
        m = models.make_finite_path(7)
        ex = models.make_exhaustion(m, 4)
        assert [sorted(s) for s in ex.sets] == [[0], [0, 1], [0, 1, 2], [0, 1, 2, 3]]

    def test_random_graph_exhaustion_connected(self):
        m = models.make_random_connected(seed=7)
        ex = models.make_exhaustion(m, 4)
        for s in ex.sets:
            assert is_connected(m.graph, s)


class TestOverflowGuards:
    def test_comb_rectangle_cap(self):
        with pytest.raises(OverflowCapError) as exc:
            models.comb_rectangle(30)
        assert exc.value.usable_cap is not None
        # the reported cap itself must be usable
        models.comb_rectangle(exc.value.usable_cap)

    def test_chain_prefix_cap(self):
        m = models.PRESETS["bd:explosive"]()
        with pytest.raises(OverflowCapError) as exc:
            models.make_exhaustion(m, 0, indices=[700])
        assert exc.value.usable_cap is not None
        models.make_exhaustion(m, 0, indices=[exc.value.usable_cap])


class TestExpressions:
    @pytest.mark.parametrize("expr,r,value", [
        ("1", 5, 1),
        ("2**r", 10, 1024),
        ("2**(-r)", 3, Fraction(1, 8)),
        ("4**r", 2, 16),
        ("1/(r+1)**2", 3, Fraction(1, 16)),
        ("3*r + 1/2", 2, Fraction(13, 2)),
    ])
    def test_exact_values(self, expr, r, value):
        fn = models.parse_sequence_expr(expr)
        assert fn(r) == value
        assert isinstance(fn(r), Fraction)

    @pytest.mark.parametrize("expr", [
        "x", "r + y", "__import__('os')", "r.denominator", "lambda r: r",
        "2.5 * r", "r; r", "[r]",
    ])
    def test_rejects_bad_syntax(self, expr):
        with pytest.raises(InputError):
            models.parse_sequence_expr(expr)

    def test_rejects_fractional_exponent(self):
        fn = models.parse_sequence_expr("r**(1/2)")
        with pytest.raises(InputError, match="exponent"):
            fn(2)

    def test_rejects_nonpositive_sequences(self):
        with pytest.raises(InputError, match="nonpositive"):
            models.make_bd_chain("r", "1")   # rate 0 at r=0


class TestPresets:
    def test_unit_chain(self):
        m = models.PRESETS["bd:unit"]()
        assert m.chain.rate_at(17) == 1
        assert m.chain.measure_at(17) == 1
        assert m.graph.edge_weight(3, 4) == 1

    def test_geo_chain(self):
        m = models.PRESETS["bd:geo"]()
        assert m.chain.rate_at(5) == 32
        assert m.chain.measure_at(5) == Fraction(1, 32)
        assert m.chain.measure_total == 2
        assert m.chain.measure_tail(4) == Fraction(1, 16)

    def test_explosive_chain(self):
        m = models.PRESETS["bd:explosive"]()
        assert m.chain.rate_at(3) == 64
        assert m.chain.measure_at(3) == 1

    def test_tail_chain_matches_its_own_tail(self):
        m = models.PRESETS["bd:tail"]()
        # b(r,r+1) is the measure of {r+1, r+2, ...}; bracket the remainder
        # of the partial sum by integrals of 1/x^2
        partial = sum(1.0 / (k + 1) ** 2 for k in range(6, 5000))
        lo, hi = partial + 1.0 / 5001, partial + 1.0 / 5000
        assert lo <= m.chain.rate_at(5) <= hi

    def test_graph_and_chain_share_data(self):
        m = models.PRESETS["bd:geo"]()
        for r in range(6):
            assert m.graph.edge_weight(r, r + 1) == m.chain.rate_at(r)
            assert m.graph.measure(r) == m.chain.measure_at(r)


class TestBuildModel:
    def test_presets_resolve(self):
        for name in ("comb", "bd:unit", "bd:geo", "bd:explosive", "bd:tail"):
            assert models.build_model(name).name == name

    def test_file_model(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("V 0 1 0\nV 1 1 0\nE 0 1 1\n")
        m = models.build_model(f"file:{p}")
        assert len(m.graph) == 2

    def test_random_needs_seed(self):
        with pytest.raises(InputError, match="seed"):
            models.build_model("random")

    def test_random_deterministic(self):
        a = models.build_model("random:30", seed=5)
        b = models.build_model("random:30", seed=5)
        assert sorted(a.graph.vertices()) == sorted(b.graph.vertices())
        for x in a.graph.vertices():
            assert a.graph.neighbors(x) == b.graph.neighbors(x)

    def test_unknown_rejected(self):
        with pytest.raises(InputError):
            models.build_model("bd:nope")
        with pytest.raises(InputError):
            models.build_model("mystery")
