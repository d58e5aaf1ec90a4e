"""Subgraph matching against a small SMARTS-like query language.

The query grammar is a deliberately small subset, every unsupported
construct fails loudly rather than silently matching wrong:

* bare atoms: ``C N O S P B F Cl Br I`` (aliphatic), ``c n o s p b``
  (aromatic), ``*`` (any atom), ``a`` (any aromatic atom);
* bracket atoms combining primitives with optional ``;`` or ``&``
  separators (always conjunction):
  ``#n`` atomic number, ``!#n`` negated atomic number (repeatable),
  element symbols (uppercase aliphatic, lowercase aromatic), commas
  between element/#n alternatives (``[#7,#8]``), ``R``/``R0`` ring
  membership, ``Hn`` minimum total hydrogens, ``Dn`` minimum heavy
  degree, ``+``/``-``/``+n``/``-n`` exact charge, ``!+0`` any nonzero
  charge, and ``*``/``a``/``A`` wildcards;
* bonds: ``-`` single, ``=`` double, ``#`` triple, ``:`` aromatic,
  ``~`` any; an omitted bond means single-or-aromatic;
* branches and ring closures (digits and ``%nn``), with an optional bond
  symbol before the closure digit.

Matching is monomorphic (extra molecule bonds never block a match) and
counts are deduplicated by the set of matched molecule atoms, so a
symmetric pattern does not count its own automorphisms.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .elements import AROMATIC_SYMBOLS, SYMBOL_TO_Z
from .errors import MalformedPatternError, UnsupportedPrimitiveError
from .smiles import BondOrder, MolecularGraph

__all__ = [
    "QueryAtom",
    "QueryBond",
    "QueryPattern",
    "MatchResult",
    "parse_query",
    "match_subgraph",
]


@dataclass
class QueryAtom:
    """Conjunction of predicates one molecule atom must satisfy.

    ``elements`` is the allowed atomic-number set (None means any);
    ``negate_elements`` flips it into a complement.  ``charge`` is an
    exact value, or the string "nonzero".
    """

    elements: frozenset[int] | None = None
    negate_elements: bool = False
    aromatic: bool | None = None
    in_ring: bool | None = None
    charge: int | str | None = None
    min_degree: int | None = None
    min_h: int | None = None

    def matches(self, graph: MolecularGraph, index: int) -> bool:
        atom = graph.atoms[index]
        if self.elements is not None:
            inside = atom.element in self.elements
            if inside == self.negate_elements:
                return False
        if self.aromatic is not None and atom.aromatic != self.aromatic:
            return False
        if self.in_ring is not None and atom.in_ring != self.in_ring:
            return False
        if self.charge is not None:
            if self.charge == "nonzero":
                if atom.formal_charge == 0:
                    return False
            elif atom.formal_charge != self.charge:
                return False
        if self.min_degree is not None and graph.heavy_degree(index) < self.min_degree:
            return False
        if self.min_h is not None and atom.total_h < self.min_h:
            return False
        return True


_BOND_KINDS = ("single", "double", "triple", "aromatic", "any", "default")


@dataclass
class QueryBond:
    """An edge of the query graph with a bond-order predicate."""

    a: int
    b: int
    kind: str = "default"

    def matches(self, order: BondOrder) -> bool:
        if self.kind == "any":
            return True
        if self.kind == "default":
            return order in (BondOrder.SINGLE, BondOrder.AROMATIC)
        return order == {
            "single": BondOrder.SINGLE,
            "double": BondOrder.DOUBLE,
            "triple": BondOrder.TRIPLE,
            "aromatic": BondOrder.AROMATIC,
        }[self.kind]


@dataclass
class QueryPattern:
    """A connected query graph parsed from pattern text."""

    atoms: list[QueryAtom]
    bonds: list[QueryBond]
    text: str = ""
    _adjacency: dict[int, list[tuple[int, int]]] = field(
        default_factory=dict, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(len(self.atoms))}
        for bond_index, bond in enumerate(self.bonds):
            adj[bond.a].append((bond.b, bond_index))
            adj[bond.b].append((bond.a, bond_index))
        self._adjacency = adj

    def neighbors(self, index: int) -> list[tuple[int, int]]:
        return self._adjacency[index]

    def degree(self, index: int) -> int:
        return len(self._adjacency[index])


@dataclass
class MatchResult:
    """Distinct-match count plus one witness mapping (query -> molecule)."""

    count: int
    first_mapping: tuple[int, ...] | None


_BOND_CHAR = {"-": "single", "=": "double", "#": "triple", ":": "aromatic", "~": "any"}

# Characters that are meaningful SMARTS but outside this subset.
_KNOWN_UNSUPPORTED = set("$@/\\{}?.")


def parse_query(pattern: str, text_label: str | None = None) -> QueryPattern:
    """Parse query text into a :class:`QueryPattern`.

    Args:
        pattern: Query in the documented grammar.
        text_label: Optional label stored on the pattern (defaults to the
            pattern text itself).

    Returns:
        A connected query graph.

    Raises:
        MalformedPatternError: Syntax errors, with the byte offset.
        UnsupportedPrimitiveError: Recognized SMARTS outside the subset.
    """
    atoms: list[QueryAtom] = []
    bonds: list[QueryBond] = []
    prev: int | None = None
    pending: str | None = None
    stack: list[int] = []
    ring_open: dict[int, tuple[int, str | None]] = {}
    i = 0
    n = len(pattern)
    if n == 0:
        raise MalformedPatternError("empty pattern", 0)

    def attach(new_index: int) -> None:
        nonlocal pending
        if prev is not None:
            bonds.append(QueryBond(prev, new_index, pending or "default"))
        pending = None

    while i < n:
        ch = pattern[i]
        if ch in _KNOWN_UNSUPPORTED:
            raise UnsupportedPrimitiveError(ch, i)
        if ch == "[":
            end = pattern.find("]", i + 1)
            if end < 0:
                raise MalformedPatternError("unterminated bracket", i)
            atom = _parse_bracket_query(pattern[i + 1 : end], i + 1)
            attach(len(atoms))
            atoms.append(atom)
            prev = len(atoms) - 1
            i = end + 1
        elif ch in _BOND_CHAR:
            if pending is not None:
                raise MalformedPatternError("two bond symbols in a row", i)
            pending = _BOND_CHAR[ch]
            i += 1
        elif ch == "(":
            if prev is None:
                raise MalformedPatternError("branch before any atom", i)
            stack.append(prev)
            i += 1
        elif ch == ")":
            if not stack:
                raise MalformedPatternError("unbalanced ')'", i)
            prev = stack.pop()
            i += 1
        elif ch.isdigit() or ch == "%":
            if ch == "%":
                if i + 2 >= n or not pattern[i + 1 : i + 3].isdigit():
                    raise MalformedPatternError("'%' needs two digits", i)
                number = int(pattern[i + 1 : i + 3])
                i += 3
            else:
                number = int(ch)
                i += 1
            if prev is None:
                raise MalformedPatternError("ring closure before any atom", i)
            if number in ring_open:
                other, opening_bond = ring_open.pop(number)
                kind = pending if pending is not None else opening_bond
                bonds.append(QueryBond(other, prev, kind or "default"))
            else:
                ring_open[number] = (prev, pending)
            pending = None
        else:
            symbol, aromatic_flag, width = _read_bare_symbol(pattern, i)
            if symbol is None:
                raise MalformedPatternError(f"cannot read {ch!r}", i)
            attach(len(atoms))
            atoms.append(_bare_atom(symbol, aromatic_flag))
            prev = len(atoms) - 1
            i += width

    if stack:
        raise MalformedPatternError("unbalanced '('", n)
    if ring_open:
        raise MalformedPatternError(f"unclosed ring closure {min(ring_open)}", n)
    if pending is not None:
        raise MalformedPatternError("dangling bond symbol", n)

    query = QueryPattern(atoms=atoms, bonds=bonds, text=text_label or pattern)
    _check_connected(query, pattern)
    return query


def _read_bare_symbol(pattern: str, i: int) -> tuple[str | None, bool, int]:
    """Read one unbracketed atom symbol; returns (symbol, aromatic, width)."""
    two = pattern[i : i + 2]
    if two in ("Cl", "Br"):
        return two, False, 2
    ch = pattern[i]
    if ch == "*":
        return "*", False, 1
    if ch == "a":
        return "a", True, 1
    if ch == "A":
        return "A", False, 1
    if ch in "BCNOSPFI":
        return ch, False, 1
    if ch in "bcnops":
        return AROMATIC_SYMBOLS[ch], True, 1
    return None, False, 0


def _bare_atom(symbol: str, aromatic: bool) -> QueryAtom:
    if symbol == "*":
        return QueryAtom()
    if symbol == "a":
        return QueryAtom(aromatic=True)
    if symbol == "A":
        return QueryAtom(aromatic=False)
    return QueryAtom(
        elements=frozenset([SYMBOL_TO_Z[symbol]]),
        aromatic=aromatic,
    )


# Two-letter element symbols whose first letter collides with the H, D,
# or R primitives must be listed ahead of them.
_BRACKET_TOKEN = re.compile(
    r"""!\#(?P<neg>\d+)
      | \#(?P<num>\d+)
      | !\+0
      | (?P<chargeval>[+-]\d+)
      | (?P<chargerun>\+{1,}|-{1,})
      | (?P<sym2>H[efgos]|D[bsy]|R[abefghnu])
      | H(?P<hcount>\d*)
      | D(?P<dcount>\d*)
      | R(?P<ring>\d?)
      | (?P<sym>se|as|[A-Z][a-z]?|[bcnops])
      | (?P<wild>[*aA])
      | (?P<sep>[;&,])
    """,
    re.VERBOSE,
)


def _parse_bracket_query(body: str, offset: int) -> QueryAtom:
    """Parse bracket contents into a single QueryAtom conjunction."""
    if not body:
        raise MalformedPatternError("empty bracket", offset)
    atom = QueryAtom()
    elements: set[int] = set()
    negated: set[int] = set()
    sym_flags: set[bool] = set()
    wild_aromatic: bool | None = None
    i = 0
    while i < len(body):
        match = _BRACKET_TOKEN.match(body, i)
        if match is None:
            ch = body[i]
            # "!" (general negation), x/r/v/h (ring-bond count, ring size,
            # valence, implicit-H) are real primitives outside this subset.
            if ch in _KNOWN_UNSUPPORTED or ch in "!xrvh":
                raise UnsupportedPrimitiveError(body[i:], offset + i)
            raise MalformedPatternError(f"cannot read {ch!r}", offset + i)
        if match.group("neg") is not None:
            negated.add(int(match.group("neg")))
        elif match.group("num") is not None:
            elements.add(int(match.group("num")))
        elif match.group(0) == "!+0":
            atom.charge = "nonzero"
        elif match.group("chargeval") is not None:
            atom.charge = int(match.group("chargeval"))
        elif match.group("chargerun") is not None:
            run = match.group("chargerun")
            atom.charge = len(run) if run[0] == "+" else -len(run)
        elif match.group("sym2") is not None or match.group("sym") is not None:
            symbol = match.group("sym2") or match.group("sym")
            aromatic = False
            if symbol in AROMATIC_SYMBOLS:
                symbol = AROMATIC_SYMBOLS[symbol]
                aromatic = True
            z = SYMBOL_TO_Z.get(symbol)
            if z is None:
                raise UnsupportedPrimitiveError(symbol, offset + i)
            elements.add(z)
            sym_flags.add(aromatic)
        elif match.group("hcount") is not None:
            atom.min_h = int(match.group("hcount")) if match.group("hcount") else 1
        elif match.group("dcount") is not None:
            atom.min_degree = int(match.group("dcount")) if match.group("dcount") else 1
        elif match.group("ring") is not None:
            atom.in_ring = match.group("ring") != "0"
        elif match.group("wild") is not None:
            wild = match.group("wild")
            if wild == "a":
                wild_aromatic = True
            elif wild == "A":
                wild_aromatic = False
        # separators are conjunction markers; nothing to do
        i = match.end()

    if elements and negated:
        raise UnsupportedPrimitiveError(
            "mixed positive and negated element lists", offset
        )
    if negated:
        atom.elements = frozenset(negated)
        atom.negate_elements = True
    elif elements:
        atom.elements = frozenset(elements)
    # Element symbols imply an aromaticity constraint only when every
    # listed symbol agrees ([C,c] matches either form); an explicit a or A
    # wildcard overrides.
    if wild_aromatic is not None:
        atom.aromatic = wild_aromatic
    elif len(sym_flags) == 1:
        atom.aromatic = sym_flags.pop()
    return atom


def _check_connected(query: QueryPattern, pattern: str) -> None:
    if not query.atoms:
        raise MalformedPatternError("no atoms in pattern", 0)
    seen = {0}
    frontier = [0]
    while frontier:
        current = frontier.pop()
        for nxt, _ in query.neighbors(current):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    if len(seen) != len(query.atoms):
        raise MalformedPatternError("pattern graph is disconnected", len(pattern))


# --------------------------------------------------------------------------
# Matching


def match_subgraph(
    graph: MolecularGraph, query: QueryPattern, max_count: int | None = None
) -> MatchResult:
    """Count distinct embeddings of ``query`` in ``graph``.

    Two embeddings that map the query onto the same set of molecule atoms
    count once.  Matching is monomorphic: molecule bonds absent from the
    query are ignored.  Candidate atoms are explored in index order from
    the highest-degree query atom outward, so results are deterministic.

    Args:
        graph: Target molecule.
        query: Parsed pattern.
        max_count: Stop once this many distinct matches are found (the
            count is then a lower bound, which is all threshold tests
            need).  None means exact.

    Returns:
        MatchResult with the distinct count and the first witness mapping.
    """
    k = len(query.atoms)
    n = len(graph.atoms)
    if k == 0 or k > n or (max_count is not None and max_count <= 0):
        return MatchResult(0, None)

    order = _query_order(query)
    # anchors[t] = (query atom, list of (earlier query neighbor, bond idx))
    anchors: list[tuple[int, list[tuple[int, int]]]] = []
    placed: set[int] = set()
    for q in order:
        back = [(nb, bi) for nb, bi in query.neighbors(q) if nb in placed]
        anchors.append((q, back))
        placed.add(q)

    matches: set[frozenset[int]] = set()
    first: list[tuple[int, ...] | None] = [None]
    assignment: dict[int, int] = {}
    used: set[int] = set()

    def extend(depth: int) -> bool:
        """Returns True when the search should stop early."""
        if depth == k:
            key = frozenset(assignment.values())
            if key not in matches:
                matches.add(key)
                if first[0] is None:
                    first[0] = tuple(assignment[q] for q in range(k))
                if max_count is not None and len(matches) >= max_count:
                    return True
            return False
        q, back = anchors[depth]
        if depth == 0:
            candidates: list[int] | range = range(n)
        else:
            anchor = assignment[back[0][0]]
            candidates = sorted(m for m, _ in graph.neighbor_bond_indices(anchor))
        for m in candidates:
            if m in used or not query.atoms[q].matches(graph, m):
                continue
            ok = True
            for nb, bond_index in back:
                bond = graph.bond_between(assignment[nb], m)
                if bond is None or not query.bonds[bond_index].matches(bond.order):
                    ok = False
                    break
            if not ok:
                continue
            assignment[q] = m
            used.add(m)
            if extend(depth + 1):
                return True
            del assignment[q]
            used.remove(m)
        return False

    extend(0)
    return MatchResult(len(matches), first[0])


def _query_order(query: QueryPattern) -> list[int]:
    """Visit order: highest-degree start, then connected expansion."""
    k = len(query.atoms)
    start = max(range(k), key=lambda q: (query.degree(q), -q))
    order = [start]
    seen = {start}
    while len(order) < k:
        best: int | None = None
        best_key = (-1, -1, 0)
        for q in range(k):
            if q in seen:
                continue
            attached = sum(1 for nb, _ in query.neighbors(q) if nb in seen)
            if attached == 0:
                continue
            key = (attached, query.degree(q), -q)
            if key > best_key:
                best_key = key
                best = q
        assert best is not None  # query graphs are connected
        order.append(best)
        seen.add(best)
    return order
