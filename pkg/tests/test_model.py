import numpy as np
import pytest
from scipy import integrate

from loylab.errors import ModelError
from loylab.model import (
    Channel,
    ContinuumGrid,
    FullModel,
    SubspacePartition,
    assemble_blocks,
    build_model,
    build_two_level_model,
    constant_coupling,
    diagnose_loy_conditions,
    find_loy_crossing,
    random_hermitian,
    random_model,
    split_blocks,
)
from loylab.self_energy import SelfEnergyEvaluator


def test_grid_validation():
    with pytest.raises(ModelError):
        ContinuumGrid([1.0, 0.5], [1.0, 1.0])
    with pytest.raises(ModelError):
        ContinuumGrid([0.0, 1.0], [1.0, 0.0])
    with pytest.raises(ModelError):
        ContinuumGrid([], [])
    g = ContinuumGrid.uniform(0.0, 4.0, 8)
    assert len(g) == 8 and np.allclose(g.weights, 0.5) and g.energies[0] == 0.25


def test_partition_projector_algebra():
    part = SubspacePartition((3, 0), 6)
    P, Q = part.P, part.Q
    assert np.array_equal(P @ P, P) and np.array_equal(P, P.conj().T)
    assert np.array_equal(P + Q, np.eye(6)) and not np.any(P @ Q)
    with pytest.raises(ModelError):
        SubspacePartition((0, 0), 3)
    with pytest.raises(ModelError):
        SubspacePartition((5,), 3)


def test_zero_coupling_is_free():
    grid = ContinuumGrid.uniform(0, 4, 10)
    m = build_two_level_model(2.0, np.zeros((2, 2)), [Channel(grid, constant_coupling([0, 0]))])
    assert np.array_equal(m.H, m.H0)
    assert not np.any(m.phq)


def test_single_point_embedding():
    grid = ContinuumGrid([2.0], [1.0])
    g = 0.3 - 0.1j
    m = build_two_level_model(1.0, np.zeros((2, 2)), [(grid, np.array([[g, 0.0]]))])
    assert m.H.shape == (3, 3)
    assert m.H[0, 2] == g and m.H[1, 2] == 0 and m.H[2, 0] == np.conj(g)
    php, phq, qhp, qhq = split_blocks(m)
    np.testing.assert_array_equal(phq, [[g], [0]])
    np.testing.assert_array_equal(qhq, [[2.0]])


def test_builder_errors():
    grid = ContinuumGrid.uniform(0, 1, 4)
    ch = Channel(grid, constant_coupling([0.1, 0.1]), "a")
    with pytest.raises(ModelError):
        build_two_level_model(1.0, [[0, 1], [0, 0]], [ch])
    with pytest.raises(ModelError):
        build_two_level_model(1.0, np.zeros((2, 2)), [])
    with pytest.raises(ModelError):
        build_two_level_model(1.0, np.zeros((2, 2)), [ch, Channel(grid, constant_coupling([0, 0]), "a")])


def test_split_and_reassemble_random(rng):
    H = random_hermitian(rng, 10)
    m = FullModel.from_matrix(H, [0, 1])
    blocks = split_blocks(m)
    np.testing.assert_array_equal(assemble_blocks(m.partition, blocks), m.H)
    np.testing.assert_array_equal(blocks[2], blocks[1].conj().T)
    np.testing.assert_allclose(m.H, H, rtol=0, atol=1e-15)


def test_hermiticity_and_h0_structure(rng):
    m = random_model(rng, n=3, points=50, q_scale=0.1)
    H = m.H
    assert np.linalg.norm(H - H.conj().T) / np.linalg.norm(H) < 1e-14
    P = m.partition.P
    np.testing.assert_allclose(P @ m.H0 @ P, m.m0 * P, atol=1e-15)
    np.testing.assert_allclose(P @ m.H0 - m.H0 @ P, 0, atol=1e-15)
    np.testing.assert_allclose(m.H1, H - m.H0, atol=0)


def test_non_hermitian_matrix_rejected():
    H = np.array([[1.0, 0.2], [0.3, 1.0]])
    with pytest.raises(ModelError):
        FullModel.from_matrix(H, [0])


def test_flat_coupling_sigma_matches_quadrature_oracle():
    c, W, x = 0.01, 4.0, 1.3
    grid = ContinuumGrid.uniform(0.0, W, 2000)
    m = build_model(x, np.zeros((1, 1)), [Channel(grid, constant_coupling([np.sqrt(c)]))])
    ev = SelfEnergyEvaluator(m)
    s = ev.sigma(x)[0, 0]
    eta = ev.eta
    re = integrate.quad(lambda e: c * (e - x) / ((e - x) ** 2 + eta ** 2), 0, W, points=[x], limit=400)[0]
    im = integrate.quad(lambda e: c * eta / ((e - x) ** 2 + eta ** 2), 0, W, points=[x], limit=400)[0]
    assert abs(s - complex(re, im)) < 1e-3 * abs(complex(re, im))


def test_quadrature_refinement_below_one_percent():
    grid = ContinuumGrid.uniform(0.0, 4.0, 1000)
    eta = 3 * grid.spacing
    vals = []
    for pts in (1000, 2000):
        g = ContinuumGrid.uniform(0.0, 4.0, pts)
        m = build_two_level_model(2.0, np.zeros((2, 2)),
                                  [Channel(g, constant_coupling([0.05, 0.03 + 0.02j]))])
        vals.append(SelfEnergyEvaluator(m, eta).sigma(2.0))
    rel = np.abs(vals[1] - vals[0]) / np.abs(vals[0])
    assert np.all(rel < 0.01)


# --- LOY validity diagnostics ----------------------------------------------

def test_diagnose_violated_at_t0(weak_model):
    rep = diagnose_loy_conditions(weak_model, [1, 0], [0.0, 0.5, 5.0])
    assert rep.phq_norm[0] == 0.0
    assert rep.violated[0] and rep.ratio[0] == np.inf


def test_diagnose_h1_zero_satisfied_for_positive_t():
    from conftest import weak_two_level

    m = weak_two_level(h1=np.zeros((2, 2)))
    rep = diagnose_loy_conditions(m, [1, 0], [0.0, 0.1, 1.0, 10.0])
    assert np.all(rep.php_norm == 0)
    assert not rep.violated[0]  # 0/0 counts as satisfied
    assert not np.any(rep.violated[1:])


def test_diagnose_rejects_bad_states(weak_model):
    with pytest.raises(ModelError):
        diagnose_loy_conditions(weak_model, [1, 1], [0.0])
    psi = np.zeros(weak_model.dim)
    psi[0] = np.sqrt(0.5)
    psi[5] = np.sqrt(0.5)
    with pytest.raises(ModelError):
        diagnose_loy_conditions(weak_model, psi, [0.0])


def test_loy_crossing_bisection_against_scan():
    grid = ContinuumGrid.uniform(0.0, 4.0, 400)
    m = build_two_level_model(2.0, np.diag([1e-3, -1e-3]), [Channel(grid, constant_coupling([0.05, 0.04]))])
    tstar = find_loy_crossing(m, [1, 0], 20.0)
    assert tstar is not None and tstar > 0
    r = diagnose_loy_conditions(m, [1, 0], [tstar * (1 - 1e-6), tstar * (1 + 1e-6)]).ratio
    assert r[0] >= 1.0 > r[1]
    # dense scan oracle: no earlier crossing
    ts = np.linspace(1e-9, tstar * (1 - 1e-6), 400)
    assert np.all(diagnose_loy_conditions(m, [1, 0], ts).ratio >= 1.0)
