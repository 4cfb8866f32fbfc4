"""SMILES parsing into a small molecular-graph structure.

Supported grammar:
    - organic subset atoms B C N O P S F Cl Br I and aromatic b c n o p s
    - bracket atoms with isotope (discarded), chirality (discarded),
      explicit H count, formal charge and atom class (discarded)
    - bond symbols ``- = # :`` plus ``/`` and ``\\`` (read as single bonds)
    - branches, ring closures ``0-9`` and ``%nn``, and ``.`` separators

Aromaticity is kept exactly as written; there is no kekulization.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from enum import IntEnum

from jova._hashing import hash_ints
from jova.errors import (
    SmilesError,
    UnbalancedBranch,
    UnbalancedRing,
    UnknownAtom,
    ValenceError,
)

ELEMENTS = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
ATOMIC_NUMBERS = {"B": 5, "C": 6, "N": 7, "O": 8, "P": 15, "S": 16,
                  "F": 9, "Cl": 17, "Br": 35, "I": 53}
AROMATIC_ELEMENTS = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
DEFAULT_VALENCES = {
    "B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5),
    "S": (2, 4, 6), "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,),
}


class BondOrder(IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def valence(self) -> int:
        # aromatic bonds count 1; the extra pi electron is added per atom
        return 1 if self is BondOrder.AROMATIC else int(self)


_BOND_SYMBOLS = {
    "-": BondOrder.SINGLE, "/": BondOrder.SINGLE, "\\": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE, "#": BondOrder.TRIPLE, ":": BondOrder.AROMATIC,
}


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    implicit_h: int = 0
    degree: int = 0


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE

    def other(self, i: int) -> int:
        return self.b if i == self.a else self.a


@dataclass(frozen=True)
class MolecularGraph:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    adjacency: tuple[tuple[int, ...], ...]

    @classmethod
    def from_parts(cls, atoms, bonds) -> "MolecularGraph":
        adjacency = [[] for _ in atoms]
        for bond in bonds:
            adjacency[bond.a].append(bond.b)
            adjacency[bond.b].append(bond.a)
        return cls(tuple(atoms), tuple(bonds), tuple(tuple(n) for n in adjacency))

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    def bond_between(self, i: int, j: int) -> Bond | None:
        for bond in self.bonds:
            if {bond.a, bond.b} == {i, j}:
                return bond
        return None

    def incident_bonds(self, i: int) -> list[int]:
        return [k for k, bond in enumerate(self.bonds) if i in (bond.a, bond.b)]

    def check(self) -> None:
        """Raise AssertionError if any structural invariant is violated."""
        assert len(self.atoms) >= 1
        n = len(self.atoms)
        seen = set()
        expected = [[] for _ in range(n)]
        for bond in self.bonds:
            assert 0 <= bond.a < n and 0 <= bond.b < n
            assert bond.a != bond.b
            key = frozenset((bond.a, bond.b))
            assert key not in seen, "duplicate bond"
            seen.add(key)
            expected[bond.a].append(bond.b)
            expected[bond.b].append(bond.a)
        assert [sorted(x) for x in expected] == [sorted(x) for x in self.adjacency]
        for atom, neigh in zip(self.atoms, self.adjacency):
            assert atom.element in ELEMENTS
            assert atom.degree == len(neigh)
            assert atom.implicit_h >= 0


def default_hydrogens(element: str, aromatic: bool, bond_valence: int) -> int | None:
    """Implicit H count for an organic-subset atom, or None if over-valent."""
    valences = DEFAULT_VALENCES[element]
    used = bond_valence + (1 if aromatic else 0)
    for v in valences:
        if v >= used:
            return v - used
    if aromatic and bond_valence <= valences[-1]:
        # e.g. a bridgehead aromatic nitrogen with three ring bonds
        return 0
    return None


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.atoms: list[dict] = []
        self.bonds: list[tuple[int, int, BondOrder | None]] = []
        self.bond_keys: set[frozenset] = set()

    def error(self, cls, message, pos=None):
        return cls(message, self.text, self.pos if pos is None else pos)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def parse(self) -> MolecularGraph:
        prev: int | None = None
        pending_bond: BondOrder | None = None
        branch_stack: list[int | None] = []
        open_rings: dict[int, tuple[int, BondOrder | None, int]] = {}
        text = self.text

        while self.pos < len(text):
            ch = text[self.pos]
            start = self.pos
            if ch == "(":
                if prev is None:
                    raise self.error(UnbalancedBranch, "branch opened before any atom")
                if pending_bond is not None:
                    raise self.error(SmilesError, "bond symbol before branch")
                branch_stack.append(prev)
                self.pos += 1
            elif ch == ")":
                if not branch_stack:
                    raise self.error(UnbalancedBranch, "unmatched ')'")
                if pending_bond is not None:
                    raise self.error(SmilesError, "dangling bond symbol")
                prev = branch_stack.pop()
                self.pos += 1
            elif ch in _BOND_SYMBOLS:
                if pending_bond is not None or prev is None:
                    raise self.error(SmilesError, f"unexpected bond symbol {ch!r}")
                pending_bond = _BOND_SYMBOLS[ch]
                self.pos += 1
            elif ch == ".":
                if pending_bond is not None or prev is None:
                    raise self.error(SmilesError, "unexpected '.'")
                prev = None
                self.pos += 1
            elif ch.isdigit() or ch == "%":
                if prev is None:
                    raise self.error(UnbalancedRing, "ring closure before any atom")
                number = self._ring_number()
                if number in open_rings:
                    other, other_bond, _ = open_rings.pop(number)
                    if (pending_bond is not None and other_bond is not None
                            and pending_bond != other_bond):
                        raise self.error(UnbalancedRing,
                                         f"conflicting bond orders on ring {number}", start)
                    order = pending_bond if pending_bond is not None else other_bond
                    if other == prev:
                        raise self.error(UnbalancedRing, f"ring {number} closes on itself", start)
                    self._add_bond(other, prev, order, start)
                else:
                    open_rings[number] = (prev, pending_bond, start)
                pending_bond = None
            else:
                idx = self._atom()
                if prev is not None:
                    self._add_bond(prev, idx, pending_bond, start)
                elif pending_bond is not None:
                    raise self.error(SmilesError, "bond symbol with no preceding atom")
                pending_bond = None
                prev = idx

        if pending_bond is not None:
            raise self.error(SmilesError, "dangling bond symbol at end")
        if branch_stack:
            raise self.error(UnbalancedBranch, "unclosed '('")
        if open_rings:
            number, (_, _, where) = next(iter(open_rings.items()))
            raise self.error(UnbalancedRing, f"ring closure {number} never closed", where)
        if not self.atoms:
            raise self.error(SmilesError, "no atoms")
        return self._build()

    def _ring_number(self) -> int:
        text = self.text
        if text[self.pos] == "%":
            digits = text[self.pos + 1:self.pos + 3]
            if len(digits) != 2 or not digits.isdigit():
                raise self.error(UnbalancedRing, "'%' must be followed by two digits")
            self.pos += 3
            return int(digits)
        self.pos += 1
        return int(text[self.pos - 1])

    def _add_bond(self, a: int, b: int, order: BondOrder | None, where: int) -> None:
        key = frozenset((a, b))
        if key in self.bond_keys:
            raise self.error(UnbalancedRing, "duplicate bond between the same atoms", where)
        self.bond_keys.add(key)
        if order is None:
            both = self.atoms[a]["aromatic"] and self.atoms[b]["aromatic"]
            order = BondOrder.AROMATIC if both else BondOrder.SINGLE
        self.bonds.append((a, b, order))

    def _atom(self) -> int:
        text = self.text
        ch = text[self.pos]
        if ch == "[":
            return self._bracket_atom()
        two = text[self.pos:self.pos + 2]
        if two in ("Cl", "Br"):
            symbol, aromatic = two, False
            self.pos += 2
        elif ch in ("B", "C", "N", "O", "P", "S", "F", "I"):
            symbol, aromatic = ch, False
            self.pos += 1
        elif ch in AROMATIC_ELEMENTS:
            symbol, aromatic = AROMATIC_ELEMENTS[ch], True
            self.pos += 1
        else:
            raise self.error(UnknownAtom, f"unsupported atom token {ch!r}")
        self.atoms.append(dict(element=symbol, aromatic=aromatic, charge=0,
                               hcount=None, pos=self.pos - len(symbol)))
        return len(self.atoms) - 1

    def _bracket_atom(self) -> int:
        text = self.text
        start = self.pos
        end = text.find("]", start)
        if end < 0:
            raise self.error(SmilesError, "unterminated bracket atom")
        body = text[start + 1:end]
        i = 0
        while i < len(body) and body[i].isdigit():  # isotope
            i += 1
        two, one = body[i:i + 2], body[i:i + 1]
        if two in ATOMIC_NUMBERS:
            symbol, aromatic = two, False
            i += 2
        elif one in ATOMIC_NUMBERS:
            symbol, aromatic = one, False
            i += 1
        elif one in AROMATIC_ELEMENTS and body[i:i + 2] not in ("se", "as"):
            symbol, aromatic = AROMATIC_ELEMENTS[one], True
            i += 1
        else:
            raise self.error(UnknownAtom, f"unsupported bracket atom [{body}]", start)
        if body[i:i + 1].isalpha() and body[i:i + 1].islower():
            raise self.error(UnknownAtom, f"unsupported bracket atom [{body}]", start)
        if body[i:i + 1] == "@":
            i += 1
            if body[i:i + 1] == "@":
                i += 1
            elif body[i:i + 2] in ("TH", "AL", "SP", "TB", "OH"):
                i += 2
                while i < len(body) and body[i].isdigit():
                    i += 1
        hcount = 0
        if body[i:i + 1] == "H":
            i += 1
            hcount = 1
            if body[i:i + 1].isdigit():
                hcount = int(body[i])
                i += 1
        charge = 0
        if body[i:i + 1] in ("+", "-"):
            sign = 1 if body[i] == "+" else -1
            i += 1
            if body[i:i + 1].isdigit():
                digits = ""
                while i < len(body) and body[i].isdigit():
                    digits += body[i]
                    i += 1
                charge = sign * int(digits)
            else:
                charge = sign
                while body[i:i + 1] == ("+" if sign > 0 else "-"):
                    charge += sign
                    i += 1
        if body[i:i + 1] == ":":
            i += 1
            while i < len(body) and body[i].isdigit():
                i += 1
        if i != len(body):
            raise self.error(UnknownAtom, f"cannot read bracket atom [{body}]", start)
        self.pos = end + 1
        self.atoms.append(dict(element=symbol, aromatic=aromatic, charge=charge,
                               hcount=hcount, pos=start))
        return len(self.atoms) - 1

    def _build(self) -> MolecularGraph:
        n = len(self.atoms)
        bond_valence = [0] * n
        degree = [0] * n
        for a, b, order in self.bonds:
            for i in (a, b):
                bond_valence[i] += order.valence
                degree[i] += 1
        atoms = []
        for i, spec in enumerate(self.atoms):
            element = spec["element"]
            if spec["hcount"] is None:
                h = default_hydrogens(element, spec["aromatic"], bond_valence[i])
                if h is None:
                    raise self.error(ValenceError,
                                     f"{element} has {bond_valence[i]} bond valence, "
                                     f"above its maximum {DEFAULT_VALENCES[element][-1]}",
                                     spec["pos"])
            else:
                h = spec["hcount"]
                limit = DEFAULT_VALENCES[element][-1] + abs(spec["charge"])
                if bond_valence[i] + h > limit:
                    raise self.error(ValenceError,
                                     f"[{element}] uses {bond_valence[i] + h} valence, "
                                     f"above {limit}", spec["pos"])
            atoms.append(Atom(element, spec["aromatic"], spec["charge"], h, degree[i]))
        bonds = [Bond(a, b, order) for a, b, order in self.bonds]
        return MolecularGraph.from_parts(atoms, bonds)


def parse_smiles(text: str) -> MolecularGraph:
    """Parse a SMILES string into a :class:`MolecularGraph`.

    Atoms are numbered in order of first appearance. Raises a subclass of
    :class:`~jova.errors.SmilesError` for anything outside the grammar.
    """
    if not isinstance(text, str) or not text.strip():
        raise SmilesError("empty SMILES string")
    return _Parser(text.strip()).parse()


def atom_invariant_tuple(atom: Atom) -> tuple[int, int, int, int, int]:
    return (ATOMIC_NUMBERS[atom.element], atom.degree, atom.implicit_h,
            atom.formal_charge, int(atom.aromatic))


def canonical_invariants(graph: MolecularGraph) -> list[int]:
    """Per-atom 32-bit code hashed from (element, degree, H, charge, aromatic)."""
    return [hash_ints(atom_invariant_tuple(atom)) for atom in graph.atoms]


# --- writing ----------------------------------------------------------------

def _atom_token(graph: MolecularGraph, i: int) -> str:
    atom = graph.atoms[i]
    valence = sum(graph.bonds[k].order.valence for k in graph.incident_bonds(i))
    symbol = atom.element.lower() if atom.aromatic else atom.element
    if atom.formal_charge == 0 and default_hydrogens(
            atom.element, atom.aromatic, valence) == atom.implicit_h:
        return symbol
    token = "[" + symbol
    if atom.implicit_h:
        token += "H" + (str(atom.implicit_h) if atom.implicit_h > 1 else "")
    if atom.formal_charge:
        sign = "+" if atom.formal_charge > 0 else "-"
        mag = abs(atom.formal_charge)
        token += sign + (str(mag) if mag > 1 else "")
    return token + "]"


def _bond_token(graph: MolecularGraph, bond: Bond) -> str:
    both = graph.atoms[bond.a].aromatic and graph.atoms[bond.b].aromatic
    if bond.order is BondOrder.SINGLE:
        return "-" if both else ""
    if bond.order is BondOrder.AROMATIC:
        return "" if both else ":"
    return "=" if bond.order is BondOrder.DOUBLE else "#"


def write_smiles(graph: MolecularGraph, rng: random.Random | None = None) -> str:
    """Write a valid, non-canonical SMILES spelling of ``graph``.

    With ``rng`` the traversal root and neighbour order are randomized, which
    yields arbitrary atom-order respellings of the same molecule.
    """
    n = graph.num_atoms
    bond_index = {}
    for k, bond in enumerate(graph.bonds):
        bond_index[(bond.a, bond.b)] = k
        bond_index[(bond.b, bond.a)] = k

    def neighbours(i):
        out = list(graph.adjacency[i])
        if rng is not None:
            rng.shuffle(out)
        return out

    visited = [False] * n
    children: list[list[int]] = [[] for _ in range(n)]
    ring_open: list[list[int]] = [[] for _ in range(n)]   # bond ids opened here
    ring_close: list[list[int]] = [[] for _ in range(n)]  # bond ids closed here
    tree_bonds: set[int] = set()

    def dfs(root):
        stack = [(root, iter(neighbours(root)))]
        visited[root] = True
        on_path = {root}
        while stack:
            u, it = stack[-1]
            for v in it:
                k = bond_index[(u, v)]
                if k in tree_bonds:
                    continue
                if not visited[v]:
                    visited[v] = True
                    tree_bonds.add(k)
                    children[u].append(v)
                    on_path.add(v)
                    stack.append((v, iter(neighbours(v))))
                    break
                if v in on_path and k not in ring_open[v] and k not in ring_close[u]:
                    ring_open[v].append(k)
                    ring_close[u].append(k)
            else:
                stack.pop()
                on_path.discard(u)

    roots = list(range(n))
    if rng is not None:
        rng.shuffle(roots)
    order = []
    for r in roots:
        if not visited[r]:
            dfs(r)
            order.append(r)

    digits: dict[int, int] = {}
    free: list[int] = list(range(1, 100))

    def ring_label(d):
        return str(d) if d < 10 else f"%{d:02d}"

    def emit(root) -> str:
        parts = []
        # (atom, incoming bond token) work list, with branch markers
        stack: list = [(root, "")]
        while stack:
            item = stack.pop()
            if isinstance(item, str):
                parts.append(item)
                continue
            u, bond_tok = item
            parts.append(bond_tok + _atom_token(graph, u))
            for k in ring_close[u]:
                d = digits.pop(k)
                parts.append(ring_label(d))
                free.append(d)
                free.sort()
            for k in ring_open[u]:
                d = free.pop(0)
                digits[k] = d
                parts.append(_bond_token(graph, graph.bonds[k]) + ring_label(d))
            kids = children[u]
            todo = []
            for j, v in enumerate(kids):
                tok = _bond_token(graph, graph.bonds[bond_index[(u, v)]])
                if j < len(kids) - 1:
                    todo += ["(", (v, tok), ")"]
                else:
                    todo.append((v, tok))
            stack.extend(reversed(todo))
        return "".join(parts)

    return ".".join(emit(r) for r in order)
