#!/usr/bin/env python3
"""Regenerates the H2 fixture files under data/.

Run once by hand; the outputs are committed. Requires pyscf and numpy.

Spin orbitals are interleaved (0a, 0b, 1a, 1b). Fermionic terms are written
in the line format read by the C++ loader: "+p +q -r -s coeff" means
c+_p c+_q c_r c_s; a line holding a single number is a constant.
"""
import json
import pathlib

import numpy as np
from pyscf import fci, gto, scf

OUT = pathlib.Path(__file__).resolve().parent.parent / "data"


def integrals(bond):
    mol = gto.M(atom=f"H 0 0 0; H 0 0 {bond}", basis="sto-3g", unit="Angstrom",
                verbose=0)
    mf = scf.RHF(mol).run()
    c = mf.mo_coeff
    h1 = c.T @ mf.get_hcore() @ c
    eri = mol.ao2mo(c, aosym="s1").reshape([c.shape[1]] * 4)
    e_fci = fci.FCI(mf).kernel()[0]
    return mol.energy_nuc(), h1, eri, e_fci


def spin_terms(e_nuc, h1, eri, tol=1e-12):
    n = h1.shape[0]
    terms = {}

    def add(key, v):
        terms[key] = terms.get(key, 0.0) + v

    for p in range(n):
        for q in range(n):
            for s in range(2):
                if abs(h1[p, q]) > tol:
                    add(((2 * p + s, 1), (2 * q + s, 0)), h1[p, q])
    # 1/2 sum (pq|rs) c+_p c+_r c_s c_q over spins
    for p in range(n):
        for q in range(n):
            for r in range(n):
                for s in range(n):
                    v = 0.5 * eri[p, q, r, s]
                    if abs(v) < tol:
                        continue
                    for a in range(2):
                        for b in range(2):
                            i, j, k, l = 2 * p + a, 2 * r + b, 2 * s + b, 2 * q + a
                            if i == j or k == l:
                                continue
                            add(((i, 1), (j, 1), (k, 0), (l, 0)), v)
    return e_nuc, terms


def write_fermion_file(path, bond, e_nuc, terms, e_fci):
    lines = [f"# H2 STO-3G, bond {bond} Angstrom, interleaved spin orbitals",
             f"# FCI ground energy {e_fci:.12f}", f"{e_nuc:.15g}"]
    for key, v in sorted(terms.items()):
        if abs(v) < 1e-12:
            continue
        ops = " ".join(("+" if d else "-") + str(m) for m, d in key)
        lines.append(f"{ops} {v:.15g}")
    path.write_text("\n".join(lines) + "\n")


def low_rank(e_nuc, h1, eri, tol=1e-10):
    n = h1.shape[0]
    # c+_p c+_r c_s c_q = c+_p c_q c+_r c_s - delta_qr c+_p c_s
    one_body_spatial = h1 - 0.5 * np.einsum("pqqs->ps", eri)
    mat = eri.reshape(n * n, n * n)
    w, v = np.linalg.eigh(mat)
    factors = []
    for lam, vec in zip(w, v.T):
        if lam < tol:
            continue
        t = np.sqrt(0.5 * lam) * vec.reshape(n, n)
        t = 0.5 * (t + t.T)
        t_spin = np.kron(t, np.eye(2))
        eps, basis = np.linalg.eigh(t_spin)
        factors.append({"basis": basis.tolist(), "eigs": eps.tolist()})
    return {
        "num_modes": 2 * n,
        "constant": e_nuc,
        "one_body": np.kron(one_body_spatial, np.eye(2)).tolist(),
        "factors": factors,
    }


def main():
    OUT.mkdir(exist_ok=True)
    energies = {}
    for name, bond in (("h2_eq", 0.7414), ("h2_2A", 2.0)):
        e_nuc, h1, eri, e_fci = integrals(bond)
        _, terms = spin_terms(e_nuc, h1, eri)
        write_fermion_file(OUT / f"{name}.ham", bond, e_nuc, terms, e_fci)
        energies[name] = e_fci
        if name == "h2_eq":
            (OUT / "h2_eq_lowrank.json").write_text(
                json.dumps(low_rank(e_nuc, h1, eri), indent=1) + "\n")
    (OUT / "h2_reference.json").write_text(json.dumps(
        {"fci_ground_energy": energies, "source": "pyscf FCI, STO-3G"},
        indent=1) + "\n")


if __name__ == "__main__":
    main()
