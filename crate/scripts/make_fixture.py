"""Generate the Davis-format surrogate fixture and the RDKit count oracle.

Outputs (under crates/core/tests/data/):
  davis_mini/drugs.tsv        id<TAB>SMILES            (68 kinase inhibitors and probes)
  davis_mini/proteins.tsv     id<TAB>sequence          (40 synthetic kinase-like sequences)
  davis_mini/affinities.tsv   drug<TAB>protein<TAB>Kd  (nM, full 68x40 grid)
  kiba_mini/*                 same layout, KIBA-style scores (small subset)
  smiles_counts.tsv           id<TAB>SMILES<TAB>atoms<TAB>bonds  (RDKit heavy-atom graph)
  smiles_corpus.tsv           2,111 randomized SMILES with RDKit atom/bond counts

Run once; outputs are committed. Requires numpy and rdkit.
"""
import os
import numpy as np
from rdkit import Chem
from rdkit.Chem import AllChem

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "crates", "core", "tests", "data")
rng = np.random.default_rng(20200829)

drugs = [l.rstrip("\n").split("\t") for l in open(os.path.join(HERE, "drugs.smi")) if l.strip()]
mols = []
for name, smi in drugs:
    m = Chem.MolFromSmiles(smi)
    assert m is not None, name
    mols.append(m)


def counts(m):
    return m.GetNumAtoms(), m.GetNumBonds()


os.makedirs(os.path.join(OUT, "davis_mini"), exist_ok=True)
os.makedirs(os.path.join(OUT, "kiba_mini"), exist_ok=True)

with open(os.path.join(OUT, "smiles_counts.tsv"), "w") as f:
    for (name, smi), m in zip(drugs, mols):
        a, b = counts(m)
        f.write(f"{name}\t{smi}\t{a}\t{b}\n")

# Randomized writer output exercises ring labels, branch orders and kekule forms.
with open(os.path.join(OUT, "smiles_corpus.tsv"), "w") as f:
    k = 0
    while k < 2111:
        i = k % len(mols)
        m = mols[i]
        kek = (k // len(mols)) % 3 == 1
        mm = Chem.Mol(m)
        if kek:
            Chem.Kekulize(mm, clearAromaticFlags=True)
        smi = Chem.MolToSmiles(mm, doRandom=True, canonical=False, kekuleSmiles=kek,
                               isomericSmiles=bool(k % 2))
        back = Chem.MolFromSmiles(smi)
        a, b = counts(back)
        f.write(f"r{k:04d}\t{smi}\t{a}\t{b}\n")
        k += 1

AA = "ACDEFGHIKLMNPQRSTVWY"
freq = np.array([8.3, 1.4, 5.5, 6.8, 3.9, 7.1, 2.3, 5.9, 5.8, 9.7,
                 2.4, 4.1, 4.7, 3.9, 5.4, 6.6, 5.3, 6.9, 1.1, 2.9])
freq /= freq.sum()

n_fam, per_fam = 8, 5
ancestors = ["".join(rng.choice(list(AA), size=1200, p=freq)) for _ in range(n_fam)]
fam_latent = rng.normal(size=(n_fam, 4))
proteins, prot_latent, prot_bias = [], [], []
for fam in range(n_fam):
    for j in range(per_fam):
        anc = list(ancestors[fam])
        mut = rng.random(len(anc)) < 0.12
        for pos in np.nonzero(mut)[0]:
            anc[pos] = rng.choice(list(AA), p=freq)
        length = int(rng.integers(250, 1150))
        start = int(rng.integers(0, 1200 - length + 1))
        seq = "".join(anc[start:start + length])
        proteins.append((f"KIN{fam}{j}", seq))
        prot_latent.append(fam_latent[fam] + 0.3 * rng.normal(size=4))
        prot_bias.append(0.3 * rng.normal())
prot_latent = np.array(prot_latent)

fps = []
for m in mols:
    fp = AllChem.GetHashedMorganFingerprint(m, 2, nBits=256)
    v = np.zeros(256)
    for idx, c in fp.GetNonzeroElements().items():
        v[idx] = c
    fps.append(v)
fps = np.array(fps)
fps = (fps - fps.mean(0)) / (fps.std(0) + 1e-9)
proj = rng.normal(size=(256, 4)) / 16.0
drug_latent = fps @ proj
drug_bias = 0.5 * rng.normal(size=len(mols))

score = drug_latent @ prot_latent.T + drug_bias[:, None] + np.array(prot_bias)[None, :]
score += 0.15 * rng.normal(size=score.shape)
cut = np.quantile(score, 0.70)
pkd = 5.0 + np.clip(1.6 * (score - cut), 0.0, None)
pkd = np.minimum(pkd, 10.5)

with open(os.path.join(OUT, "davis_mini", "drugs.tsv"), "w") as f:
    for name, smi in drugs:
        f.write(f"{name}\t{smi}\n")
with open(os.path.join(OUT, "davis_mini", "proteins.tsv"), "w") as f:
    for pid, seq in proteins:
        f.write(f"{pid}\t{seq}\n")
with open(os.path.join(OUT, "davis_mini", "affinities.tsv"), "w") as f:
    for i, (name, _) in enumerate(drugs):
        for j, (pid, _) in enumerate(proteins):
            if pkd[i, j] <= 5.0:
                kd = 10000.0
            else:
                kd = float(f"{10 ** (9 - pkd[i, j]):.4g}")
            f.write(f"{name}\t{pid}\t{kd:g}\n")

# KIBA-style: scores used as-is, sparse matrix (missing cells absent).
kd_idx = rng.choice(len(drugs), size=12, replace=False)
kp_idx = rng.choice(len(proteins), size=6, replace=False)
with open(os.path.join(OUT, "kiba_mini", "drugs.tsv"), "w") as f:
    for i in kd_idx:
        f.write(f"{drugs[i][0]}\t{drugs[i][1]}\n")
with open(os.path.join(OUT, "kiba_mini", "proteins.tsv"), "w") as f:
    for j in kp_idx:
        f.write(f"{proteins[j][0]}\t{proteins[j][1]}\n")
with open(os.path.join(OUT, "kiba_mini", "affinities.tsv"), "w") as f:
    for i in kd_idx:
        for j in kp_idx:
            if rng.random() < 0.75:
                f.write(f"{drugs[i][0]}\t{proteins[j][0]}\t{11.1 + 0.8 * score[i, j]:.4f}\n")
print("ok", len(drugs), len(proteins), (pkd > 5).mean())
