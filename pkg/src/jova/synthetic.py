"""Synthetic interaction datasets for smoke tests and desk-scale runs.

Affinities are a fixed random function of simple compound and target
descriptors plus small noise, so a model that reads the views can beat the
constant-mean predictor.
"""
from __future__ import annotations

import numpy as np

from jova.data import InteractionRecord
from jova.featurizers import AMINO_ACIDS
from jova.smiles import parse_smiles

KINASE_LIGANDS = {
    "erlotinib": "COCCOc1cc2ncnc(Nc3cccc(C#C)c3)c2cc1OCCOC",
    "gefitinib": "COc1cc2ncnc(Nc3ccc(F)c(Cl)c3)c2cc1OCCCN1CCOCC1",
    "imatinib": "Cc1ccc(NC(=O)c2ccc(CN3CCN(C)CC3)cc2)cc1Nc1nccc(-c2cccnc2)n1",
    "lapatinib": "CS(=O)(=O)CCNCc1ccc(-c2ccc3ncnc(Nc4ccc(OCc5cccc(F)c5)c(Cl)c4)c3c2)o1",
    "dasatinib": "Cc1nc(Nc2ncc(C(=O)Nc3c(C)cccc3Cl)s2)cc(N2CCN(CCO)CC2)n1",
    "sunitinib": "CCN(CC)CCNC(=O)c1c(C)[nH]c(/C=C2\\C(=O)Nc3ccc(F)cc32)c1C",
    "sorafenib": "CNC(=O)c1cc(Oc2ccc(NC(=O)Nc3ccc(Cl)c(C(F)(F)F)c3)cc2)ccn1",
    "nilotinib": "Cc1cn(-c2cc(NC(=O)c3ccc(C)c(Nc4nccc(-c5cccnc5)n4)c3)cc(C(F)(F)F)c2)cn1",
    "vandetanib": "COc1cc2c(Nc3ccc(Br)cc3F)ncnc2cc1OCC1CCN(C)CC1",
    "afatinib": "CN(C)C/C=C/C(=O)Nc1cc2c(Nc3ccc(F)c(Cl)c3)ncnc2cc1O[C@H]1CCOC1",
    "dacomitinib": "COc1cc2ncnc(Nc3ccc(F)c(Cl)c3)c2cc1NC(=O)/C=C/CN1CCCCC1",
    "bosutinib": "COc1cc(Nc2c(C#N)cnc3cc(OCCCN4CCN(C)CC4)c(OC)cc23)c(Cl)cc1Cl",
    "pazopanib": "Cc1ccc(Nc2nccc(N(C)c3ccc4c(C)n(C)nc4c3)n2)cc1S(N)(=O)=O",
    "axitinib": "CNC(=O)c1ccccc1Sc1ccc2c(/C=C/c3ccccn3)n[nH]c2c1",
    "crizotinib": "C[C@@H](Oc1cc(-c2cnn(C3CCNCC3)c2)cnc1N)c1c(Cl)ccc(F)c1Cl",
    "ruxolitinib": "N#CC[C@H](C1CCCC1)n1cc(-c2ncnc3[nH]ccc23)cn1",
    "tofacitinib": "C[C@@H]1CCN(C(=O)CC#N)C[C@@H]1N(C)c1ncnc2[nH]ccc12",
    "ibrutinib": "C=CC(=O)N1CCC[C@@H](n2nc(-c3ccc(Oc4ccccc4)cc3)c3c(N)ncnc32)C1",
    "vemurafenib": "CCCS(=O)(=O)Nc1ccc(F)c(C(=O)c2c[nH]c3ncc(-c4ccc(Cl)cc4)cc23)c1F",
    "palbociclib": "CC(=O)c1c(C)c2cnc(Nc3ccc(N4CCNCC4)cn3)nc2n(C2CCCC2)c1=O",
    "anilinoquinazoline": "COc1ccc2ncnc(Nc3cccc(Cl)c3)c2c1",
    "staurosporine_core": "O=C1NCc2c1c1c3ccccc3[nH]c1c1[nH]c3ccccc3c21",
    "purvalanol_core": "CC(C)n1cnc2c(Nc3cccc(Cl)c3)nc(N)nc21",
    "pyrazolopyrimidine": "Nc1ncnc2c1c(-c1ccccc1)nn2C",
    "indirubin": "O=C1Nc2ccccc2/C1=C1/Nc2ccccc2C1=O",
    "caffeine": "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
    "aspirin": "CC(=O)Oc1ccccc1C(=O)O",
    "ibuprofen": "CC(C)Cc1ccc(C(C)C(=O)O)cc1",
    "paracetamol": "CC(=O)Nc1ccc(O)cc1",
    "quinazoline": "c1ccc2ncncc2c1",
}


def random_sequence(rng: np.random.Generator, length: int) -> str:
    return "".join(AMINO_ACIDS[i] for i in rng.integers(0, 20, size=length))


def compound_descriptors(smiles: str) -> np.ndarray:
    g = parse_smiles(smiles)
    n = g.num_atoms
    return np.array([
        n,
        sum(a.aromatic for a in g.atoms) / n,
        sum(a.element == "N" for a in g.atoms) / n,
        sum(a.element in ("F", "Cl", "Br", "I") for a in g.atoms),
    ], dtype=np.float64)


_HYDROPHOBIC = set("AILMFVW")
_CHARGED = set("DEKR")


def target_descriptors(seq: str) -> np.ndarray:
    n = len(seq)
    return np.array([
        sum(ch in _HYDROPHOBIC for ch in seq) / n,
        sum(ch in _CHARGED for ch in seq) / n,
        seq.count("G") / n + seq.count("P") / n,
        seq[: n // 2].count("K") / n,
    ], dtype=np.float64)


def _zscore(x: np.ndarray) -> np.ndarray:
    std = x.std(axis=0)
    return (x - x.mean(axis=0)) / np.where(std > 0, std, 1.0)


def make_synthetic_dataset(n_compounds: int = 25, n_targets: int = 20, seed: int = 0,
                           length: tuple[int, int] = (30, 60), noise: float = 0.1,
                           n_pairs: int | None = None) -> list[InteractionRecord]:
    """A compound x target affinity grid (optionally subsampled to ``n_pairs``).

    Compounds come from :data:`KINASE_LIGANDS`, recycled with numbered ids
    if more are requested; targets are random sequences.
    """
    rng = np.random.default_rng(seed)
    names = list(KINASE_LIGANDS)
    compounds = [(f"C{i:03d}", KINASE_LIGANDS[names[i % len(names)]]) for i in range(n_compounds)]
    targets = [(f"T{j:03d}", random_sequence(rng, int(rng.integers(length[0], length[1] + 1))))
               for j in range(n_targets)]
    cu = _zscore(np.stack([compound_descriptors(s) for _, s in compounds]))
    tv = _zscore(np.stack([target_descriptors(s) for _, s in targets]))
    a = rng.normal(size=cu.shape[1])
    b = rng.normal(size=tv.shape[1])
    m = rng.normal(size=(cu.shape[1], tv.shape[1]))
    records = []
    for i, (cid, smiles) in enumerate(compounds):
        for j, (tid, seq) in enumerate(targets):
            y = 6.0 + 0.5 * cu[i] @ a + 0.5 * tv[j] @ b + 0.3 * cu[i] @ m @ tv[j]
            y += noise * rng.normal()
            records.append(InteractionRecord(cid, smiles, tid, seq, float(y)))
    if n_pairs is not None and n_pairs < len(records):
        keep = np.sort(rng.choice(len(records), size=n_pairs, replace=False))
        records = [records[k] for k in keep]
    return records
