"""Grammar, parsing, and instance-graph construction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stancegraph.embed import test_embed as embed_text
from stancegraph.errors import EmptyGraphError, ParseError
from stancegraph.fol import (Connective, Predicate, Relation, build_fol_graph,
                             canonical_predicate_string, extract_fol_block,
                             format_expr, parse_fol_line, predicate_leaves,
                             split_fol_lines)


class TestExtractFolBlock:
    def test_single_matching_line(self):
        text = "The claim holds.\nSupport(Masks)\nTherefore favor."
        assert extract_fol_block(text) == ["Support(Masks)"]

    def test_empty_input(self):
        assert extract_fol_block("") == []

    def test_grammar_line_kept_noise_dropped(self):
        assert extract_fol_block("A(x) ∧ B(x) → C(x)\nnoise") == \
            ["A(x) ∧ B(x) → C(x)"]

    def test_dropped_count(self):
        _, dropped = split_fol_lines("noise one\nA(x)\nnoise two")
        assert dropped == 2


class TestParseFolLine:
    def test_implies_with_args(self):
        expr = parse_fol_line("Reduce(Vaccines,Risk) → Support(Vaccines)")
        assert isinstance(expr, Connective) and expr.kind == "implies"
        lhs, rhs = expr.children
        assert lhs == Predicate("Reduce", ("Vaccines", "Risk"))
        assert rhs == Predicate("Support", ("Vaccines",))

    def test_negation_folds_into_leaf(self):
        expr = parse_fol_line("¬Safe(Policy)")
        assert expr == Predicate("Safe", ("Policy",), negated=True)

    def test_precedence_implies_lowest(self):
        expr = parse_fol_line("A(x) ∧ B(x) → C(x)")
        assert expr.kind == "implies"
        conj, cons = expr.children
        assert conj.kind == "and"
        assert [p.name for p in conj.children] == ["A", "B"]
        assert cons == Predicate("C", ("x",))

    def test_ascii_operators(self):
        assert parse_fol_line("A(x) & B(x) -> C(x)") == \
            parse_fol_line("A(x) ∧ B(x) → C(x)")

    def test_implies_left_associative(self):
        expr = parse_fol_line("A(x) → B(x) → C(x)")
        assert expr.kind == "implies"
        assert expr.children[0].kind == "implies"

    def test_error_reports_offset_and_expected(self):
        with pytest.raises(ParseError) as exc:
            parse_fol_line("A(x) →")
        assert exc.value.offset is not None
        assert exc.value.expected

    def test_unbalanced_paren(self):
        with pytest.raises(ParseError):
            parse_fol_line("A(x")

    def test_empty_line(self):
        with pytest.raises(ParseError):
            parse_fol_line("   ")


class TestBuildFolGraph:
    def _embed(self, graph):
        return graph

    def test_implies_over_conjunction(self):
        expr = parse_fol_line("A(x) ∧ B(x) → C(x)")
        graph = build_fol_graph([expr])
        assert len(graph.nodes) == 3
        names = {n.predicate.canonical(): i for i, n in enumerate(graph.nodes)}
        edges = set(graph.edges)
        a, b, c = names["A(x)"], names["B(x)"], names["C(x)"]
        assert (a, c, Relation.IMPLIES) in edges
        assert (b, c, Relation.IMPLIES) in edges
        assert (a, b, Relation.CONJUNCTION) in edges
        assert (b, a, Relation.CONJUNCTION) in edges

    def test_single_atom(self):
        graph = build_fol_graph([Predicate("A", ("x",))])
        assert len(graph.nodes) == 1 and graph.edges == []

    def test_deduplication(self):
        expr = parse_fol_line("A(x) → B(x)")
        graph = build_fol_graph([expr, expr])
        assert len(graph.nodes) == 2
        assert len(graph.edges) == 1

    def test_empty_raises(self):
        with pytest.raises(EmptyGraphError):
            build_fol_graph([])


class TestCanonical:
    def test_args(self):
        assert canonical_predicate_string(
            Predicate("Reduce", ("Vaccines", "Risk"))) == "Reduce(Vaccines,Risk)"

    def test_negated(self):
        assert canonical_predicate_string(
            Predicate("Safe", ("Policy",), negated=True)) == "¬Safe(Policy)"

    def test_zero_arity(self):
        assert canonical_predicate_string(Predicate("P", ())) == "P()"


_name = st.from_regex(r"[A-Z][A-Za-z]{0,6}", fullmatch=True)
_arg = st.from_regex(r"[A-Za-z][A-Za-z0-9]{0,5}", fullmatch=True)


def _predicates():
    return st.builds(
        lambda n, args, neg: Predicate(n, tuple(args), negated=neg),
        _name, st.lists(_arg, max_size=3), st.booleans())


def _exprs(depth=3):
    if depth == 0:
        return _predicates()
    sub = _exprs(depth - 1)
    return st.one_of(
        _predicates(),
        st.builds(lambda a, b: Connective("implies", (a, b)), sub, sub),
        st.builds(lambda kids: Connective("and", tuple(kids)),
                  st.lists(sub, min_size=2, max_size=3)),
        st.builds(lambda kids: Connective("or", tuple(kids)),
                  st.lists(sub, min_size=2, max_size=3)),
    )


@settings(max_examples=200, deadline=None)
@given(_exprs())
def test_format_parse_roundtrip(expr):
    assert parse_fol_line(format_expr(expr)) == expr


@settings(max_examples=100, deadline=None)
@given(_exprs())
def test_parse_deterministic(expr):
    line = format_expr(expr)
    assert parse_fol_line(line) == parse_fol_line(line)


def test_predicate_leaves_order():
    expr = parse_fol_line("A(x) ∧ B(x) → C(x)")
    assert [p.name for p in predicate_leaves(expr)] == ["A", "B", "C"]


def test_graph_round_trip_dict():
    expr = parse_fol_line("A(x) → B(x)")
    graph = build_fol_graph([expr])
    for node in graph.nodes:
        node.embedding = embed_text(node.predicate.canonical(), 8)
    doc = graph.to_dict()
    clone = type(graph).from_dict(doc)
    assert clone.to_dict() == doc
    np.testing.assert_array_equal(clone.nodes[0].embedding,
                                  graph.nodes[0].embedding)
