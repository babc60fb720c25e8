import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loylab.effective import EffectiveHamiltonian, h_loy, h_loy0, h_loy_imp
from loylab.errors import ModelError
from loylab.model import Channel, ContinuumGrid, build_two_level_model, random_model
from loylab.symmetry import (
    AntiUnitaryOp,
    CPTModelSpec,
    build_cpt,
    cpt_residual,
    diag_difference,
    make_cpt_invariant,
    random_cpt_model,
)


# --- operator -----------------------------------------------------------------

def test_parallel_block_and_self_paired_q(rng):
    model = random_cpt_model(rng, points=20)
    theta = build_cpt(model)
    U = theta.unitary_part
    np.testing.assert_array_equal(U[:2, :2], [[0, -1], [-1, 0]])
    np.testing.assert_array_equal(U[2:, 2:], -np.eye(20))
    assert np.count_nonzero(U[:2, 2:]) == 0


def test_theta_is_involution_and_antiunitary(rng):
    model = random_cpt_model(rng, points=15, channels=2)
    theta = build_cpt(model, {"J0": "J1", "J1": "J0"})
    U = theta.unitary_part
    # Theta^2 = U conj(U) = I
    np.testing.assert_array_equal(U @ U.conj(), np.eye(model.dim))
    x = rng.normal(size=model.dim) + 1j * rng.normal(size=model.dim)
    np.testing.assert_allclose(theta.apply(theta.apply(x)), x, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_antiunitarity_property(seed):
    rng = np.random.default_rng(seed)
    model = random_cpt_model(rng, points=10)
    theta = build_cpt(model)
    x, y = (rng.normal(size=(2, model.dim)) + 1j * rng.normal(size=(2, model.dim)))
    a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
    # <Theta x, Theta y> = conj(<x, y>)
    assert np.vdot(theta.apply(x), theta.apply(y)) == pytest.approx(np.vdot(x, y).conjugate(), abs=1e-12)
    # Theta (a x + b y) = a* Theta x + b* Theta y
    lhs = theta.apply(a * x + b * y)
    rhs = np.conj(a) * theta.apply(x) + np.conj(b) * theta.apply(y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_pairing_validation():
    grid_a = ContinuumGrid.uniform(0.0, 4.0, 10)
    grid_b = ContinuumGrid.uniform(0.0, 4.0, 12)
    model = build_two_level_model(2.0, np.zeros((2, 2)),
                                  [Channel(grid_a, np.ones((10, 2)), "a"),
                                   Channel(grid_a, np.ones((10, 2)), "b"),
                                   Channel(grid_b, np.ones((12, 2)), "c")])
    build_cpt(model, {"a": "b", "b": "a"})
    with pytest.raises(ModelError, match="involution"):
        build_cpt(model, {"a": "b"})
    with pytest.raises(ModelError, match="grids"):
        build_cpt(model, {"a": "c", "c": "a"})
    with pytest.raises(ModelError, match="unknown"):
        build_cpt(model, {"a": "z"})
    three = random_model(np.random.default_rng(0), n=3, points=5)
    with pytest.raises(ModelError):
        build_cpt(three)
    with pytest.raises(ModelError):
        AntiUnitaryOp(np.eye(2), np.array([0, 0]), np.ones(2), np.arange(2), np.arange(2, 4))


# --- residual -----------------------------------------------------------------

def test_cpt_invariant_models_have_zero_residual(rng):
    for _ in range(20):
        model = random_cpt_model(rng, points=40, channels=2)
        assert cpt_residual(build_cpt(model), model) < 1e-12


def test_residual_with_real_q_interaction(rng):
    model = random_cpt_model(rng, points=30, q_scale=0.1)
    assert not model.qhq_is_diagonal
    assert cpt_residual(build_cpt(model), model) < 1e-12


def test_residual_lower_bound_from_diagonal(rng):
    grid = ContinuumGrid.uniform(0.0, 4.0, 30)
    for delta in (1e-3, 0.1, 2.0):
        h1 = np.array([[delta, 0.01j], [-0.01j, 0.0]])
        g = np.column_stack([np.full(30, 0.02 + 0.01j), np.full(30, 0.02 - 0.01j)])
        model = build_two_level_model(2.0, h1, [Channel(grid, g)])
        assert cpt_residual(build_cpt(model), model) >= delta * (1 - 1e-12)


def test_dense_and_blockwise_residuals_agree(rng):
    for q_scale in (0.0, 0.1):
        model = random_model(rng, n=2, points=25, q_scale=q_scale)
        theta = build_cpt(model)
        assert cpt_residual(theta, model) == pytest.approx(cpt_residual(theta, model.H), rel=1e-12)
    grid = ContinuumGrid.uniform(0.0, 4.0, 12)
    model = build_two_level_model(2.0, np.zeros((2, 2)),
                                  [Channel(grid, rng.normal(size=(12, 2)), "a"),
                                   Channel(grid, rng.normal(size=(12, 2)), "b")])
    theta = build_cpt(model, {"a": "b", "b": "a"})
    assert cpt_residual(theta, model) == pytest.approx(cpt_residual(theta, model.H), rel=1e-12)
    with pytest.raises(ModelError):
        cpt_residual(theta, np.eye(3))


def test_channel_swap_invariance():
    # channels a and b exchanged by CPT: g_2a = conj(g_1b), g_2b = conj(g_1a)
    rng = np.random.default_rng(4)
    grid = ContinuumGrid.uniform(0.0, 4.0, 20)
    ga = 0.02 * (rng.normal(size=20) + 1j * rng.normal(size=20))
    gb = 0.02 * (rng.normal(size=20) + 1j * rng.normal(size=20))
    h1 = np.array([[0.0, 0.01 + 0.004j], [0.01 - 0.004j, 0.0]])
    model = build_two_level_model(2.0, h1, [Channel(grid, np.column_stack([ga, gb.conj()]), "a"),
                                            Channel(grid, np.column_stack([gb, ga.conj()]), "b")])
    assert cpt_residual(build_cpt(model, {"a": "b", "b": "a"}), model) < 1e-14
    assert cpt_residual(build_cpt(model), model) > 1e-3


def test_make_cpt_invariant_validation():
    grid = ContinuumGrid.uniform(0.0, 1.0, 5)
    with pytest.raises(ModelError):
        make_cpt_invariant(CPTModelSpec(1.0, 0.1, []))
    with pytest.raises(ModelError):
        make_cpt_invariant(CPTModelSpec(1.0, 0.1, [(grid, np.ones(4))]))
    with pytest.raises(ModelError, match="real"):
        make_cpt_invariant(CPTModelSpec(1.0, 0.1, [(grid, 0.1)], 1j * np.eye(5)))
    with pytest.raises(ModelError, match="symmetric"):
        make_cpt_invariant(CPTModelSpec(1.0, 0.1, [(grid, 0.1)], np.triu(np.ones((5, 5)))))
    m = make_cpt_invariant(CPTModelSpec(1.0, 0.1, [(grid, lambda e: 0.1 * (1 + 1j * e))]))
    np.testing.assert_allclose(m.phq[1], m.phq[0].conj())


# --- consequences for the effective Hamiltonians -----------------------------

def test_loy_diagonal_equality_on_cpt_models(rng):
    for _ in range(25):
        model = random_cpt_model(rng, points=120)
        for h in (h_loy0(model), h_loy(model)):
            assert abs(diag_difference(h)) < 1e-13


def test_real_inputs_give_no_improved_difference():
    grid = ContinuumGrid.uniform(0.0, 4.0, 200)
    g = 0.05 * np.exp(-((grid.energies - 2.0) ** 2))
    model = make_cpt_invariant(CPTModelSpec(2.0, 0.01, [(grid, g)]))
    assert abs(diag_difference(h_loy_imp(model))) < 1e-15


def test_tiny_cp_source_separates_loy_and_improved():
    grid = ContinuumGrid.uniform(0.0, 4.0, 400)
    g = 0.05 * np.exp(-((grid.energies - 2.3) ** 2))
    model = make_cpt_invariant(CPTModelSpec(2.0, 1e-8j + 0.02, [(grid, g)]))
    assert abs(diag_difference(h_loy(model))) < 1e-16
    assert abs(diag_difference(h_loy_imp(model))) > 1e-13


def test_complex_couplings_alone_split_improved_diagonal():
    # Sigma_12 != Sigma_21 once the couplings carry a phase, even for real m12
    grid = ContinuumGrid.uniform(0.0, 4.0, 400)
    g = 0.05 * np.exp(-((grid.energies - 2.3) ** 2)) * (1 + 0.5j * grid.energies)
    model = make_cpt_invariant(CPTModelSpec(2.0, 0.02, [(grid, g)]))
    assert abs(diag_difference(h_loy(model))) < 1e-16
    assert abs(diag_difference(h_loy_imp(model))) > 1e-6


def test_improved_difference_linear_in_im_m12():
    grid = ContinuumGrid.uniform(0.0, 4.0, 400)
    g = 0.05 * np.exp(-((grid.energies - 2.3) ** 2))
    ratios = []
    for im in (1e-6, 1e-5, 1e-4):
        model = make_cpt_invariant(CPTModelSpec(2.0, 0.02 + 1j * im, [(grid, g)]))
        ratios.append(diag_difference(h_loy_imp(model)) / im)
    for r in ratios[1:]:
        assert abs(r - ratios[0]) < 0.02 * abs(ratios[0])


def test_diag_difference_requires_two_levels():
    assert diag_difference(EffectiveHamiltonian(np.diag([1.0, 0.5]))) == 0.5
    with pytest.raises(ModelError):
        diag_difference(EffectiveHamiltonian(np.zeros((3, 3))))
