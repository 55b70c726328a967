import json
from math import comb

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from gcnn_vmc.ed import (
    build_sector_basis,
    ground_state,
    hamiltonian_matrix,
    lanczos,
    tabulated_wavefunction,
    variational_energy,
)
from gcnn_vmc.exceptions import EDRangeError
from gcnn_vmc.heisenberg import HeisenbergModel, local_energies
from gcnn_vmc.lattice import build_lattice, custom_lattice, ring
from gcnn_vmc.symmetry import apply_to_sites, build_group


@pytest.mark.parametrize("n", [2, 4, 16])
def test_sector_dimension(n):
    b = build_sector_basis(n)
    assert len(b) == comb(n, n // 2)
    assert np.all(b.states.sum(axis=1) == 0)
    assert np.array_equal(b.index(b.states), np.arange(len(b)))


def test_sector_index_outside():
    b = build_sector_basis(4)
    assert b.index(np.array([1, 1, 1, -1]))[0] == -1


def test_range_errors():
    with pytest.raises(EDRangeError, match="out of ED range"):
        build_sector_basis(36)
    with pytest.raises(ValueError):
        build_sector_basis(5)


def test_two_site_singlet():
    r = ground_state(HeisenbergModel(ring(2), 1.0))
    assert r.e0 == pytest.approx(-0.75, abs=1e-12)
    assert r.degeneracy == 1


def test_four_site_ring_dense_oracle():
    # independent oracle: Kronecker-product Hamiltonian on the full 16-dim space
    sx = np.array([[0, 1], [1, 0]]) / 2
    sy = np.array([[0, -1j], [1j, 0]]) / 2
    sz = np.array([[1, 0], [0, -1]]) / 2

    def op(o, i, n=4):
        mats = [np.eye(2)] * n
        mats[i] = o
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    H = sum(op(s, i) @ op(s, (i + 1) % 4) for i in range(4) for s in (sx, sy, sz))
    e_full = np.linalg.eigvalsh(H).min()
    r = ground_state(HeisenbergModel(ring(4), 1.0))
    assert r.e0 == pytest.approx(-2.0, abs=1e-12)
    assert r.e0 == pytest.approx(e_full, abs=1e-12)


@pytest.mark.parametrize("geo,J2,e_ref", [
    ("square", 0.0, -0.7017802005),
    ("square", 0.5, -0.5286202095),
    ("triangular", 0.0, -0.5347196823),
    ("triangular", 0.125, -0.5345819430),
])
def test_four_by_four_references(geo, J2, e_ref):
    m = HeisenbergModel(build_lattice(geo, 4), 1.0, J2)
    r = ground_state(m)
    assert r.method == "lanczos"
    assert r.residual < 1e-8
    assert r.e0_per_site == pytest.approx(e_ref, abs=1e-9)
    # scipy ARPACK as a cross-check of the in-house Lanczos
    H = hamiltonian_matrix(m, r.basis)
    ev = spla.eigsh(H, k=1, which="SA", tol=1e-12)[0][0]
    assert r.e0 == pytest.approx(ev, abs=1e-9)
    assert np.linalg.norm(r.ground_vector) == pytest.approx(1.0, abs=1e-12)


def test_dense_and_lanczos_agree_n12():
    n = 12
    lat = custom_lattice(n, [(i, (i + 1) % n) for i in range(n)], [(i, (i + 2) % n) for i in range(n)])
    m = HeisenbergModel(lat, 1.0, 0.3)
    d = ground_state(m, "dense")
    l = ground_state(m, "lanczos")
    assert abs(d.e0 - l.e0) < 1e-9
    assert d.degeneracy == l.degeneracy
    assert abs(abs(np.dot(d.ground_vector, l.ground_vector)) - 1) < 1e-9


def test_lanczos_degeneracy_counting():
    # two decoupled singlet pairs plus a deflation check: H = diag with a doubled bottom level
    diag = np.array([-1.0, -1.0, 0.5, 2.0, 3.0])
    e, v, _ = lanczos(lambda x: diag * x, 5)
    assert e == pytest.approx(-1.0)
    e2, v2, _ = lanczos(lambda x: diag * x, 5, deflate=[v], seed=1)
    assert e2 == pytest.approx(-1.0)
    assert abs(np.dot(v, v2)) < 1e-10


def test_hamiltonian_hermitian_and_commutes_with_group():
    lat = build_lattice("triangular", 4)
    m = HeisenbergModel(lat, 1.0, 0.125)
    basis = build_sector_basis(16)
    H = hamiltonian_matrix(m, basis)
    assert abs(H - H.T).max() == 0
    G = build_group(lat)
    states = basis.states
    for g in (1, G.element(rot=1), G.element(refl=1), G.element(1, 2, 3, 1)):
        perm = basis.index(apply_to_sites(G, g, states))
        P = np.zeros(len(basis), dtype=np.int64)
        P[perm] = np.arange(len(basis))
        # (P H P^T)[a, b] = H[P^-1 a, P^-1 b]
        Hp = H[P][:, P]
        assert abs(Hp - H).max() == 0


def test_ground_states_fully_symmetric():
    for geo, J2 in (("square", 0.5), ("triangular", 0.125)):
        lat = build_lattice(geo, 4)
        r = ground_state(HeisenbergModel(lat, 1.0, J2))
        wf = tabulated_wavefunction(r)
        G = build_group(lat)
        s = r.basis.states
        for g in range(0, G.order, 5):
            assert np.allclose(wf.log_psi(apply_to_sites(G, g, s)), wf.log_psi(s), atol=1e-8)


def test_tabulated_local_energy_constant():
    m = HeisenbergModel(build_lattice("square", 4), 1.0, 0.5)
    r = ground_state(m)
    wf = tabulated_wavefunction(r)
    s = r.basis.states
    keep = np.abs(r.ground_vector) > 1e-12
    eloc = local_energies(m, wf.log_psi, s[keep])
    assert np.max(np.abs(eloc - r.e0)) < 1e-8
    with pytest.raises(ValueError):
        wf.log_psi(np.ones(16, dtype=int))


def test_variational_bound_and_export(tmp_path):
    m = HeisenbergModel(build_lattice("square", 4), 1.0, 0.0)
    r = ground_state(m)
    rng = np.random.default_rng(0)
    trial = lambda s: rng.standard_normal(len(s)) * 0.1 + 0j
    assert variational_energy(m, trial, r.basis) >= r.e0
    assert variational_energy(m, tabulated_wavefunction(r).log_psi, r.basis) == pytest.approx(r.e0, abs=1e-10)
    rec = json.loads(r.dumps())
    assert set(rec) >= {"e0", "degeneracy", "residual"}
    r.save_vector(tmp_path / "v.f64")
    assert np.array_equal(np.fromfile(tmp_path / "v.f64", dtype="<f8"), r.ground_vector)
