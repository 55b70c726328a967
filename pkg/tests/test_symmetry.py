import numpy as np
import pytest

from gcnn_vmc.lattice import build_lattice, site_index
from gcnn_vmc.symmetry import (
    VARIANTS,
    apply_to_sites,
    build_filter_index_map,
    build_group,
    reflection_character,
    trivial_character,
    validate_character,
)

ROT = {"square": np.array([[0, -1], [1, 0]]), "triangular": np.array([[1, -1], [1, 0]])}
REFL = np.array([[0, 1], [1, 0]])


def brute_force_order(geometry, L):
    """Count distinct site permutations over all (tx, ty, rot, refl)."""
    n_rot = 4 if geometry == "square" else 6
    coords = [(i, j) for i in range(L) for j in range(L)]
    perms = set()
    for refl in range(2):
        for rot in range(n_rot):
            M = np.linalg.matrix_power(ROT[geometry], rot) @ np.linalg.matrix_power(REFL, refl)
            for tx in range(L):
                for ty in range(L):
                    perms.add(tuple(site_index(*(M @ c + (tx, ty)), L) for c in coords))
    return len(perms)


@pytest.mark.parametrize("geo,L,order", [("triangular", 6, 432), ("square", 6, 288), ("square", 4, 128),
                                         ("triangular", 4, 192)])
def test_group_order(geo, L, order):
    G = build_group(build_lattice(geo, L))
    assert G.order == order == brute_force_order(geo, L)
    # permutations are distinct
    assert len({p.tobytes() for p in G.site_action}) == order


@pytest.mark.parametrize("geo", ["square", "triangular"])
def test_translations_abelian(geo):
    G = build_group(build_lattice(geo, 6), "translations")
    assert G.order == 36
    assert G.is_abelian
    assert np.array_equal(G.cayley, G.cayley.T)


@pytest.mark.parametrize("geo", ["square", "triangular"])
def test_cayley_structure(geo):
    G = build_group(build_lattice(geo, 4))
    n = G.order
    assert np.all(np.sort(G.cayley, axis=1) == np.arange(n))  # latin square
    assert np.all(G.cayley[np.arange(n), G.inverse] == 0)
    # perm composition matches the table
    rng = np.random.default_rng(0)
    for g, h in rng.integers(n, size=(50, 2)):
        assert np.array_equal(G.site_action[G.cayley[g, h]], G.site_action[g][G.site_action[h]])
    # associativity on samples
    for a, b, c in rng.integers(n, size=(50, 3)):
        assert G.cayley[G.cayley[a, b], c] == G.cayley[a, G.cayley[b, c]]


def test_identity_action():
    G = build_group(build_lattice("square", 4))
    s = np.arange(16)
    assert np.array_equal(apply_to_sites(G, 0, s), s)


def test_triangular_rotation_order_six():
    G = build_group(build_lattice("triangular", 4))
    r = G.element(rot=1)
    s = np.random.default_rng(1).permutation(16)
    out = s
    for k in range(6):
        out = apply_to_sites(G, r, out)
        if k < 5:
            assert not np.array_equal(out, s)
    assert np.array_equal(out, s)


def test_square_rotation_one_hot():
    # (i, j) -> (-j, i): (1,0) goes to (0,1) and (1,1) goes to (L-1, 1)
    L = 4
    G = build_group(build_lattice("square", L))
    r = G.element(rot=1)

    def moved(i, j):
        s = np.zeros(L * L, dtype=int)
        s[site_index(i, j, L)] = 1
        return divmod(int(np.argmax(apply_to_sites(G, r, s))), L)

    assert moved(1, 0) == (0, 1)
    assert moved(1, 1) == (L - 1, 1)


def test_filter_index_map():
    G = build_group(build_lattice("square", 4))
    fm = build_filter_index_map(G)
    assert np.array_equal(fm.feature_map[0], np.arange(G.order))
    assert np.all(np.diag(fm.feature_map) == 0)
    for g in range(0, G.order, 7):
        x = np.arange(16)
        assert np.array_equal(G.site_action[g][fm.input_map[g]], x)


def test_translation_feature_map_uses_differences():
    L = 6
    G = build_group(build_lattice("square", L), "translations")
    fm = build_filter_index_map(G).feature_map
    d = G.decomposition
    for g in range(G.order):
        for h in range(G.order):
            k = fm[g, h]
            assert (d[k, 0], d[k, 1]) == ((d[h, 0] - d[g, 0]) % L, (d[h, 1] - d[g, 1]) % L)


@pytest.mark.parametrize("geo", ["square", "triangular"])
def test_characters(geo):
    G = build_group(build_lattice(geo, 4))
    assert validate_character(G, trivial_character(G))
    assert validate_character(G, reflection_character(G))
    rng = np.random.default_rng(0)
    bad = rng.choice([-1.0, 1.0], size=G.order)
    bad[0] = 1
    report = validate_character(G, bad)
    assert not report and report.violation is not None
    assert not validate_character(G, np.ones(3))


def test_variants():
    lat = build_lattice("square", 4)
    orders = {v: build_group(lat, v).order for v in ("p4m", "p4", "translations", "point-group")}
    assert orders == {"p4m": 128, "p4": 64, "translations": 16, "point-group": 8}
    assert build_group(build_lattice("triangular", 4), "p6").order == 96
    with pytest.raises(ValueError):
        build_group(lat, "p6m")
    assert set(VARIANTS) >= {"p4m", "p6m"}
