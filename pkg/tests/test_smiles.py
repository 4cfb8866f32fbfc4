import random

import pytest
from hypothesis import given, settings, strategies as st

from jova.errors import SmilesError, UnbalancedBranch, UnbalancedRing, UnknownAtom, ValenceError
from jova.smiles import (
    BondOrder,
    atom_invariant_tuple,
    canonical_invariants,
    default_hydrogens,
    parse_smiles,
    write_smiles,
)
from jova.synthetic import KINASE_LIGANDS


class TestParse:
    def test_ethanol(self):
        g = parse_smiles("CCO")
        assert [a.element for a in g.atoms] == ["C", "C", "O"]
        assert len(g.bonds) == 2
        assert all(b.order is BondOrder.SINGLE for b in g.bonds)
        assert [a.implicit_h for a in g.atoms] == [3, 2, 1]

    def test_benzene(self):
        g = parse_smiles("c1ccccc1")
        assert g.num_atoms == 6
        assert all(a.aromatic and a.element == "C" for a in g.atoms)
        assert len(g.bonds) == 6
        assert all(b.order is BondOrder.AROMATIC for b in g.bonds)
        assert all(a.degree == 2 and a.implicit_h == 1 for a in g.atoms)

    def test_branches_and_multiple_bonds(self):
        g = parse_smiles("CC(=O)O")
        assert g.atoms[1].degree == 3
        assert g.bond_between(1, 2).order is BondOrder.DOUBLE
        assert [a.implicit_h for a in g.atoms] == [3, 0, 0, 1]

    def test_triple_bond(self):
        g = parse_smiles("C#N")
        assert g.bonds[0].order is BondOrder.TRIPLE
        assert g.atoms[0].implicit_h == 1 and g.atoms[1].implicit_h == 0

    def test_two_letter_halogens(self):
        g = parse_smiles("ClCBr")
        assert [a.element for a in g.atoms] == ["Cl", "C", "Br"]

    def test_bracket_atoms(self):
        g = parse_smiles("C[NH3+]")
        n = g.atoms[1]
        assert (n.element, n.formal_charge, n.implicit_h) == ("N", 1, 3)

    def test_aromatic_nh(self):
        g = parse_smiles("c1cc[nH]c1")
        assert g.atoms[3].implicit_h == 1
        assert g.atoms[3].aromatic

    def test_pyridine_nitrogen_has_no_hydrogen(self):
        g = parse_smiles("c1ccncc1")
        assert g.atoms[3].implicit_h == 0

    def test_stereo_marks_are_ignored(self):
        a = parse_smiles("C/C=C/C")
        b = parse_smiles("CC=CC")
        assert sorted(canonical_invariants(a)) == sorted(canonical_invariants(b))
        chiral = parse_smiles("C[C@@H](O)N")
        assert chiral.atoms[1].implicit_h == 1

    def test_dot_disconnected(self):
        g = parse_smiles("CCO.O")
        assert g.num_atoms == 4 and len(g.bonds) == 2

    def test_ring_bond_with_order(self):
        g = parse_smiles("C1CCCC=1")
        assert g.bond_between(0, 4).order is BondOrder.DOUBLE

    def test_percent_ring_labels(self):
        g = parse_smiles("C%12CCC%12")
        assert len(g.bonds) == 4

    @pytest.mark.parametrize("name", sorted(KINASE_LIGANDS))
    def test_fixture_ligands_parse(self, name):
        g = parse_smiles(KINASE_LIGANDS[name])
        g.check()
        assert g.num_atoms > 0


class TestErrors:
    @pytest.mark.parametrize("text,exc", [
        ("C1CC", UnbalancedRing),
        ("CC(C", UnbalancedBranch),
        ("CC)C", UnbalancedBranch),
        ("CXC", UnknownAtom),
        ("[Na+]", UnknownAtom),
        ("C(=O)(=O)(=O)C", ValenceError),
        ("", SmilesError),
    ])
    def test_rejects(self, text, exc):
        with pytest.raises(exc):
            parse_smiles(text)

    def test_error_reports_position(self):
        with pytest.raises(UnknownAtom) as info:
            parse_smiles("CCX")
        assert info.value.position == 2
        assert info.value.smiles == "CCX"

    def test_errors_are_value_errors(self):
        with pytest.raises(ValueError):
            parse_smiles("C1CC")


class TestDefaultHydrogens:
    @pytest.mark.parametrize("element,aromatic,valence,expected", [
        ("C", False, 0, 4),
        ("C", False, 4, 0),
        ("N", False, 3, 0),
        ("N", False, 1, 2),
        ("S", False, 3, 1),   # next allowed valence is 4
        ("C", True, 2, 1),
        ("N", True, 2, 0),
        ("O", False, 2, 0),
    ])
    def test_table(self, element, aromatic, valence, expected):
        assert default_hydrogens(element, aromatic, valence) == expected


class TestInvariants:
    def test_ethanol_carbons_differ(self):
        inv = canonical_invariants(parse_smiles("CCO"))
        assert inv[0] != inv[1]

    def test_ethane_carbons_match(self):
        inv = canonical_invariants(parse_smiles("CC"))
        assert inv[0] == inv[1]

    def test_order_independent_multiset(self):
        assert sorted(canonical_invariants(parse_smiles("OCC"))) == sorted(
            canonical_invariants(parse_smiles("CCO")))

    def test_tuple_fields(self):
        atom = parse_smiles("O")
        assert atom_invariant_tuple(atom.atoms[0])[0] == 8


class TestRespelling:
    @pytest.mark.parametrize("name", ["erlotinib", "anilinoquinazoline", "caffeine", "imatinib"])
    def test_respelling_preserves_graph(self, name):
        g = parse_smiles(KINASE_LIGANDS[name])
        rng = random.Random(5)
        for _ in range(10):
            h = parse_smiles(write_smiles(g, rng))
            assert h.num_atoms == g.num_atoms
            assert len(h.bonds) == len(g.bonds)
            assert sorted(canonical_invariants(h)) == sorted(canonical_invariants(g))

    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from(sorted(KINASE_LIGANDS)), st.integers(0, 10_000))
    def test_property_roundtrip_invariants(self, name, seed):
        g = parse_smiles(KINASE_LIGANDS[name])
        h = parse_smiles(write_smiles(g, random.Random(seed)))
        assert sorted(canonical_invariants(h)) == sorted(canonical_invariants(g))
