import json
from fractions import Fraction
from math import inf

import pytest

from ospkit import (
    MechanismFormatError,
    PSystem,
    dumps_mechanism,
    english_auction_tree,
    extract_tree,
    format_rational,
    graph_to_data,
    instance_data_for,
    loads_instance,
    loads_mechanism,
    mechanism_to_data,
    parse_horizon,
    parse_rational,
    render_csv,
    render_report,
)
from ospkit.cmon import build_k_osp_graph
from ospkit.fixtures import appendix_b


class TestRationals:
    def test_parse_forms(self):
        assert parse_rational("3") == 3
        assert parse_rational("-2") == -2
        assert parse_rational("7/2") == Fraction(7, 2)
        assert parse_rational("0.25") == Fraction(1, 4)
        assert parse_rational(Fraction(5, 3)) == Fraction(5, 3)

    def test_parse_errors(self):
        for bad in ("", "x", "1/0", True):
            with pytest.raises(ValueError):
                parse_rational(bad)

    def test_format(self):
        assert format_rational(Fraction(4, 2)) == "2"
        assert format_rational(Fraction(-7, 2)) == "-7/2"
        assert parse_rational(format_rational(Fraction(22, 7))) == Fraction(22, 7)


class TestHorizon:
    def test_values(self):
        assert parse_horizon("0") == 0
        assert parse_horizon("3") == 3
        assert parse_horizon("inf") == inf
        assert parse_horizon("Infinity") == inf
        assert parse_horizon("oo") == inf

    def test_errors(self):
        with pytest.raises(MechanismFormatError):
            parse_horizon("-1")
        with pytest.raises(MechanismFormatError):
            parse_horizon("x")


class TestMechanismFiles:
    def test_round_trip_four_level(self):
        t = appendix_b()
        again = loads_mechanism(dumps_mechanism(t))
        assert mechanism_to_data(again) == mechanism_to_data(t)

    def test_round_trip_clock(self):
        t = english_auction_tree(2, [1, 2, 3])
        again = loads_mechanism(dumps_mechanism(t))
        assert mechanism_to_data(again) == mechanism_to_data(t)

    def test_round_trip_unpriced(self):
        t = extract_tree(PSystem.single_item(2), [1, 2])
        data = mechanism_to_data(t)
        assert all(
            n["payment"] is None for n in data["nodes"] if n["kind"] == "leaf"
        )
        assert mechanism_to_data(loads_mechanism(dumps_mechanism(t))) == data

    def test_dumps_is_canonical(self):
        t = appendix_b()
        assert dumps_mechanism(t) == dumps_mechanism(appendix_b())
        assert dumps_mechanism(t).endswith("\n")

    def test_invalid_json_is_line_anchored(self):
        with pytest.raises(MechanismFormatError, match="line 1"):
            loads_mechanism("")

    def test_missing_key(self):
        with pytest.raises(MechanismFormatError, match="nodes"):
            loads_mechanism('{"agents": 1, "domains": [["1"]], "root": 0}')

    def test_bad_node_names_its_line(self):
        text = json.dumps(
            {
                "agents": 1,
                "domains": [["1", "2"]],
                "root": 0,
                "nodes": [
                    {
                        "id": 0,
                        "kind": "sideways",
                        "agent": 0,
                        "blocks": [["1"], ["2"]],
                        "children": [1, 2],
                    }
                ],
            },
            indent=1,
        )
        with pytest.raises(MechanismFormatError, match="sideways"):
            loads_mechanism(text)
        with pytest.raises(MechanismFormatError, match="line"):
            loads_mechanism(text)


class TestInstanceFiles:
    @pytest.mark.parametrize(
        "ps,domain",
        [
            (PSystem.single_item(2), (1, 2, 3)),
            (PSystem.uniform(3, 2), (1, 2)),
            (PSystem.graphic([(0, 1), (1, 2), (0, 2)]), (1, 2)),
            (PSystem.explicit(3, [{0, 1}, {2}]), (1, 3)),
        ],
    )
    def test_round_trip(self, ps, domain):
        dom = tuple(Fraction(v) for v in domain)
        data = instance_data_for(ps, dom)
        ps2, dom2 = loads_instance(render_report(data))
        assert dom2 == dom
        assert instance_data_for(ps2, dom2) == data
        assert ps2.maximal_sets() == ps.maximal_sets()

    def test_unknown_kind(self):
        with pytest.raises(MechanismFormatError, match="unknown instance kind"):
            loads_instance('{"kind": "nope", "n": 1, "domain": ["1"]}')

    def test_graphic_edge_count_must_match(self):
        text = json.dumps(
            {
                "kind": "graphic",
                "n": 2,
                "domain": ["1"],
                "params": {"edges": [[0, 1]]},
            }
        )
        with pytest.raises(MechanismFormatError, match="edges"):
            loads_instance(text)


def test_graph_dump_shape():
    t = english_auction_tree(2, [1, 2])
    data = graph_to_data(build_k_osp_graph(t, 0, 0))
    assert set(data) == {"vertices", "edges"}
    for v in data["vertices"]:
        assert set(v) == {"agent", "anchor", "slice", "bit", "types", "size"}
    for e in data["edges"]:
        assert set(e) == {"from", "to", "weight"}
        parse_rational(e["weight"])


def test_render_report_deterministic():
    a = render_report({"b": 1, "a": [2, 3]})
    b = render_report({"a": [2, 3], "b": 1})
    assert a == b
    assert a.index('"a"') < a.index('"b"')


def test_render_csv_header_always():
    assert render_csv([], ["x", "y"]) == "x,y\n"
    rows = [{"x": "a,b", "y": 1}]
    out = render_csv(rows, ["x", "y"])
    assert out == 'x,y\n"a,b",1\n'
