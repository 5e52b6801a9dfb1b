"""First-order-logic rationale parsing and instance graph construction.

The accepted line grammar (lowest precedence first):

    expr    := or_expr ( IMPLIES or_expr )*        left-associative, binary nodes
    or_expr := and_expr ( OR and_expr )*           flattened to one n-ary node
    and_expr:= unary ( AND unary )*                flattened to one n-ary node
    unary   := NOT unary | atom
    atom    := '(' expr ')' | predicate
    pred    := NAME [ '(' args ')' ]

Connective surface forms: {∧ & AND}, {∨ | OR}, {¬ ~ NOT}, {→ -> implies IMPLIES}.
Quantifier tokens (∀/∃ plus their bound variable) are stripped before parsing.
Arguments are free strings: anything up to a top-level comma or the closing
paren, with inner whitespace collapsed; nested balanced parens stay verbatim.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Union

import numpy as np

from .errors import EmptyGraphError, ParseError

MAX_NESTING = 500


class Relation(str, Enum):
    IMPLIES = "Implies"
    CONJUNCTION = "Conjunction"
    DISJUNCTION = "Disjunction"
    INSTANCE_OF = "InstanceOf"


@dataclass(frozen=True)
class Predicate:
    name: str
    args: tuple[str, ...] = ()
    negated: bool = False
    surface: str = field(default="", compare=False, repr=False)

    def canonical(self) -> str:
        sign = "¬" if self.negated else ""
        return f"{sign}{self.name}({','.join(self.args)})"


@dataclass(frozen=True)
class Connective:
    kind: str  # 'and' | 'or' | 'implies' | 'not'
    children: tuple["FolExpr", ...]


FolExpr = Union[Predicate, Connective]


def canonical_predicate_string(p: Predicate) -> str:
    return p.canonical()


# ---------------------------------------------------------------------------
# Tokenizer

_AND = {"∧", "&", "AND"}
_OR = {"∨", "|", "OR"}
_NOT = {"¬", "~", "NOT"}
_IMPLIES = {"→", "->", "implies", "IMPLIES"}
_QUANTIFIERS = {"∀", "∃"}

_DELIMS = set("()∧∨¬→&|~,")
_WORD_OPS = {"AND": "and", "OR": "or", "NOT": "not",
             "implies": "implies", "IMPLIES": "implies"}


def _scan_name(line: str, i: int) -> int:
    """End index of a name token starting at i (name = run of non-delimiter,
    non-whitespace chars, stopping before an embedded '->')."""
    n = len(line)
    j = i
    while j < n:
        c = line[j]
        if c.isspace() or c in _DELIMS or line.startswith("->", j):
            break
        j += 1
    return j


@dataclass(frozen=True)
class _Token:
    kind: str  # 'and' 'or' 'not' 'implies' 'lparen' 'rparen' 'name' 'end'
    text: str
    offset: int


def _tokenize(line: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(line)
    while i < n:
        c = line[i]
        if c.isspace():
            i += 1
            continue
        if c in _QUANTIFIERS:
            i += 1
            # drop the bound variable and an optional '.'/':' separator
            while i < n and line[i].isspace():
                i += 1
            i = _scan_name(line, i)
            while i < n and line[i] in ".:":
                i += 1
            continue
        if c in "∧&":
            tokens.append(_Token("and", c, i))
            i += 1
            continue
        if c in "∨|":
            tokens.append(_Token("or", c, i))
            i += 1
            continue
        if c in "¬~":
            tokens.append(_Token("not", c, i))
            i += 1
            continue
        if c == "→":
            tokens.append(_Token("implies", c, i))
            i += 1
            continue
        if line.startswith("->", i):
            tokens.append(_Token("implies", "->", i))
            i += 2
            continue
        if c == "(":
            tokens.append(_Token("lparen", c, i))
            i += 1
            continue
        if c == ")":
            tokens.append(_Token("rparen", c, i))
            i += 1
            continue
        if c == ",":
            tokens.append(_Token("comma", c, i))
            i += 1
            continue
        j = _scan_name(line, i)
        if j > i:
            word = line[i:j]
            if word in _WORD_OPS:
                tokens.append(_Token(_WORD_OPS[word], word, i))
            else:
                tokens.append(_Token("name", word, i))
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", i,
                         {"predicate", "connective", "("})
    tokens.append(_Token("end", "", n))
    return tokens


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, line: str):
        self.line = line
        self.tokens = _tokenize(line)
        self.pos = 0
        self.depth = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"unexpected token {tok.text!r}", tok.offset, {kind})
        return self.advance()

    def parse(self) -> FolExpr:
        expr = self.parse_implies()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"trailing input {tok.text!r}", tok.offset, {"end"})
        return expr

    def parse_implies(self) -> FolExpr:
        expr = self.parse_or()
        while self.peek().kind == "implies":
            self.advance()
            rhs = self.parse_or()
            expr = Connective("implies", (expr, rhs))
        return expr

    def parse_or(self) -> FolExpr:
        first = self.parse_and()
        children = [first]
        while self.peek().kind == "or":
            self.advance()
            children.append(self.parse_and())
        if len(children) == 1:
            return first
        return Connective("or", tuple(children))

    def parse_and(self) -> FolExpr:
        first = self.parse_unary()
        children = [first]
        while self.peek().kind == "and":
            self.advance()
            children.append(self.parse_unary())
        if len(children) == 1:
            return first
        return Connective("and", tuple(children))

    def parse_unary(self) -> FolExpr:
        if self.peek().kind == "not":
            self.advance()
            child = self.parse_unary()
            if isinstance(child, Predicate):
                return replace(child, negated=not child.negated)
            return Connective("not", (child,))
        return self.parse_atom()

    def parse_atom(self) -> FolExpr:
        tok = self.peek()
        if tok.kind == "lparen":
            self.depth += 1
            if self.depth > MAX_NESTING:
                raise ParseError("nesting too deep", tok.offset, {")"})
            self.advance()
            expr = self.parse_implies()
            self.expect("rparen")
            self.depth -= 1
            return expr
        if tok.kind == "name":
            return self.parse_predicate()
        raise ParseError(f"unexpected token {tok.text or 'end of input'!r}",
                         tok.offset, {"predicate", "(", "¬"})

    def parse_predicate(self) -> Predicate:
        name_tok = self.expect("name")
        start = name_tok.offset
        if self.peek().kind != "lparen":
            return Predicate(name_tok.text, (), False, name_tok.text)
        # arguments are raw text up to the matching paren; consume from the
        # source string directly so args may contain arbitrary characters
        open_off = self.peek().offset
        args, end = self._scan_args(open_off)
        # resynchronize the token stream past the argument region
        while self.tokens[self.pos].offset < end and self.tokens[self.pos].kind != "end":
            self.pos += 1
        surface = self.line[start:end]
        return Predicate(name_tok.text, tuple(args), False, surface)

    def _scan_args(self, open_off: int) -> tuple[list[str], int]:
        depth = 0
        args: list[str] = []
        buf: list[str] = []
        i = open_off
        n = len(self.line)
        while i < n:
            c = self.line[i]
            if c == "(":
                depth += 1
                if depth > 1:
                    buf.append(c)
            elif c == ")":
                depth -= 1
                if depth == 0:
                    arg = _normalize_arg("".join(buf))
                    if arg or args:
                        args.append(arg)
                    if args and all(a == "" for a in args):
                        args = []
                    return args, i + 1
                buf.append(c)
            elif c == "," and depth == 1:
                args.append(_normalize_arg("".join(buf)))
                buf = []
            else:
                buf.append(c)
            i += 1
        raise ParseError("unterminated argument list", open_off, {")"})


def _normalize_arg(text: str) -> str:
    return " ".join(text.split())


def parse_fol_line(line: str) -> FolExpr:
    """Parse one FOL line into an expression tree.

    Raises ParseError (offset + expected-token set) on malformed input.
    """
    if not line or not line.strip():
        raise ParseError("empty line", 0, {"predicate", "("})
    line = line.rstrip().rstrip(".")  # LLMs often terminate lines with a period
    if not line:
        raise ParseError("empty line", 0, {"predicate", "("})
    return _Parser(line).parse()


# ---------------------------------------------------------------------------
# Pretty printer (debug interface; round-trips through parse_fol_line)

_PRECEDENCE = {"implies": 1, "or": 2, "and": 3, "not": 4}


def format_expr(expr: FolExpr) -> str:
    return _format(expr, 0)


def _format(expr: FolExpr, parent_prec: int) -> str:
    if isinstance(expr, Predicate):
        return expr.canonical()
    prec = _PRECEDENCE[expr.kind]
    if expr.kind == "not":
        text = f"¬{_format(expr.children[0], prec)}"
    elif expr.kind == "implies":
        lhs = _format(expr.children[0], prec)
        rhs = _format(expr.children[1], prec + 1)
        text = f"{lhs} → {rhs}"
    else:
        sep = " ∧ " if expr.kind == "and" else " ∨ "
        text = sep.join(_format(c, prec + 1) for c in expr.children)
    if prec < parent_prec:
        return f"({text})"
    return text


# ---------------------------------------------------------------------------
# Line extraction

_FOL_LINE_RE = re.compile(
    r"\w+\s*\([^)]*\)"            # Name(...) call syntax
    r"|[∧∨¬→~&|]"                  # symbolic connectives
    r"|->"
    r"|\b(?:AND|OR|NOT|IMPLIES|implies)\b"
)


def split_fol_lines(llm_response: str) -> tuple[list[str], int]:
    """Split an LLM response into FOL candidate lines.

    Returns (matching lines in order, count of dropped non-matching lines).
    Blank lines are ignored entirely and counted in neither bucket.
    """
    kept: list[str] = []
    dropped = 0
    for raw in llm_response.splitlines():
        line = raw.strip()
        if not line:
            continue
        if _FOL_LINE_RE.search(line):
            kept.append(line)
        else:
            dropped += 1
    return kept, dropped


def extract_fol_block(llm_response: str) -> list[str]:
    """Lines of the response that match the FOL line grammar, in order."""
    return split_fol_lines(llm_response)[0]


# ---------------------------------------------------------------------------
# Instance graph

@dataclass
class FolNode:
    predicate: Predicate
    embedding: Optional[np.ndarray] = None
    cluster_id: Optional[int] = None
    is_schema: bool = False

    def canonical(self) -> str:
        return self.predicate.canonical()


@dataclass
class FolGraph:
    nodes: list[FolNode] = field(default_factory=list)
    edges: list[tuple[int, int, Relation]] = field(default_factory=list)

    def canonical_strings(self) -> list[str]:
        return [n.canonical() for n in self.nodes]

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "name": n.predicate.name,
                    "args": list(n.predicate.args),
                    "negated": n.predicate.negated,
                    "cluster_id": n.cluster_id,
                    "is_schema": n.is_schema,
                    "embedding": None if n.embedding is None else [float(x) for x in n.embedding],
                }
                for n in self.nodes
            ],
            "edges": [[s, d, r.value] for s, d, r in self.edges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FolGraph":
        nodes = []
        for nd in data["nodes"]:
            emb = nd.get("embedding")
            nodes.append(FolNode(
                predicate=Predicate(nd["name"], tuple(nd["args"]), nd["negated"]),
                embedding=None if emb is None else np.asarray(emb, dtype=np.float64),
                cluster_id=nd.get("cluster_id"),
                is_schema=nd.get("is_schema", False),
            ))
        edges = [(s, d, Relation(r)) for s, d, r in data["edges"]]
        return cls(nodes=nodes, edges=edges)


def predicate_leaves(expr: FolExpr) -> list[Predicate]:
    """Predicate leaves in left-to-right order."""
    if isinstance(expr, Predicate):
        return [expr]
    out: list[Predicate] = []
    for child in expr.children:
        out.extend(predicate_leaves(child))
    return out


def build_fol_graph(exprs: list[FolExpr]) -> FolGraph:
    """Build the instance graph: one node per distinct predicate, edges from
    connectives (antecedent→consequent leaves for implications, pairwise for
    conjunction/disjunction, the latter stored as two directed edges)."""
    index: dict[str, int] = {}
    nodes: list[FolNode] = []

    def node_of(p: Predicate) -> int:
        key = p.canonical()
        if key not in index:
            index[key] = len(nodes)
            nodes.append(FolNode(predicate=p))
        return index[key]

    for expr in exprs:
        for leaf in predicate_leaves(expr):
            node_of(leaf)
    if not nodes:
        raise EmptyGraphError("expression list contains no predicate leaves")

    edges: list[tuple[int, int, Relation]] = []
    seen: set[tuple[int, int, Relation]] = set()

    def add_edge(src: int, dst: int, rel: Relation) -> None:
        if src == dst:
            return
        key = (src, dst, rel)
        if key in seen:
            return
        seen.add(key)
        edges.append(key)

    def walk(expr: FolExpr) -> None:
        if isinstance(expr, Predicate):
            return
        if expr.kind == "implies":
            ant, cons = expr.children
            for u in predicate_leaves(ant):
                for v in predicate_leaves(cons):
                    add_edge(node_of(u), node_of(v), Relation.IMPLIES)
        elif expr.kind in ("and", "or"):
            rel = Relation.CONJUNCTION if expr.kind == "and" else Relation.DISJUNCTION
            leaves = predicate_leaves(expr)
            for a in range(len(leaves)):
                for b in range(a + 1, len(leaves)):
                    u, v = node_of(leaves[a]), node_of(leaves[b])
                    add_edge(u, v, rel)
                    add_edge(v, u, rel)
        for child in expr.children:
            walk(child)

    for expr in exprs:
        walk(expr)
    return FolGraph(nodes=nodes, edges=edges)


def fallback_graph(target: str) -> FolGraph:
    """Single synthetic node used when a rationale yields no parseable FOL.

    The caller attaches the raw-sentence embedding to the node."""
    return FolGraph(nodes=[FolNode(predicate=Predicate("Text", (target,)))], edges=[])
