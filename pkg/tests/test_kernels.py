import numpy as np
import pytest

from loylab import kernels

nb = pytest.importorskip("numba")


def _rand_c(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_exprel_limits():
    x = np.array([0.0, 1e-12, -1e-12j, 1e-3 + 2e-3j, 0.5, -30.0, 40j])
    ref = np.where(x == 0, 1.0, np.expm1(x) / np.where(x == 0, 1, x))
    ref[1] = 1 + 0.5e-12
    ref[2] = 1 - 0.5e-12j
    for f in (kernels.exprel_np, kernels.exprel_nb):
        np.testing.assert_allclose(f(x.astype(complex)), ref, rtol=1e-14, atol=0)


def test_exprel_series_branch_matches_direct_evaluation():
    # just above and below the series cut the two branches agree
    x = kernels._SERIES_CUT * np.exp(1j * np.linspace(0, 2 * np.pi, 17))
    below = x * (1 - 1e-9)
    np.testing.assert_allclose(kernels.exprel_np(below), np.expm1(below) / below, rtol=1e-13)
    np.testing.assert_allclose(kernels.exprel_nb(below), np.expm1(below) / below, rtol=1e-13)


def test_resolvent_sandwich_parity(rng):
    left = _rand_c(rng, 3, 50)
    right = left.conj().T.copy()
    e = np.sort(rng.uniform(-1, 1, 50))
    z = 0.1 + 0.05j
    a = kernels.resolvent_sandwich_np(left, e, right, z)
    b = kernels.resolvent_sandwich_nb(left, e, right, z)
    np.testing.assert_allclose(a, b, rtol=1e-13)
    dense = left @ np.linalg.inv(np.diag(e) - z * np.eye(50)) @ right
    np.testing.assert_allclose(a, dense, rtol=1e-12)


def test_resolvent_many_parity(rng):
    left = _rand_c(rng, 2, 30)
    e = rng.uniform(0, 2, 30)
    zs = rng.uniform(0, 2, 4) + 0.1j
    a = kernels.resolvent_sandwich_many_np(left, e, left.conj().T, zs)
    b = kernels.resolvent_sandwich_many_nb(left, e, np.ascontiguousarray(left.conj().T), zs)
    np.testing.assert_allclose(a, b, rtol=1e-13)
    np.testing.assert_allclose(a[2], kernels.resolvent_sandwich_np(left, e, left.conj().T, zs[2]), rtol=1e-13)


def test_product_amplitudes_parity_and_quadrature(rng):
    coeffs = _rand_c(rng, 20, 2)
    e = np.linspace(0, 2, 20)
    lam = np.array([1.0 - 0.05j, e[7]])  # second one resonant with a grid point
    t = np.array([0.0, 0.3, 5.0])
    a = kernels.product_amplitudes_np(coeffs, e, lam, t)
    b = kernels.product_amplitudes_nb(coeffs, e, lam.astype(complex), t)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    assert np.all(a[0] == 0)
    # trapezoid oracle of -i int_0^t exp(-i e (t - s)) exp(-i lam s) ds
    s = np.linspace(0, 5.0, 200001)
    q = 7
    integrand = sum(coeffs[q, j] * np.exp(-1j * e[q] * (5.0 - s)) * np.exp(-1j * lam[j] * s) for j in range(2))
    ref = -1j * np.trapezoid(integrand, s)
    assert abs(a[2, q] - ref) < 1e-8


def test_transient_kernel_parity():
    e = np.linspace(-1, 1, 11)
    lam = np.array([0.0, 0.3 + 0.0j])
    for eta in (0.0, 0.2):
        a = kernels.transient_kernel_np(e, lam, 2.5, eta)
        b = kernels.transient_kernel_nb(e, lam, 2.5, eta)
        np.testing.assert_allclose(a, b, rtol=1e-13)
    # resonant entry E = lam, eta = 0 gives exactly t
    assert kernels.transient_kernel_np(e, lam, 2.5, 0.0)[5, 0] == 2.5


def test_dispatch_flag_is_boolean():
    assert isinstance(kernels.USE_NUMBA, bool)


def test_numpy_fallback_selected_by_env(tmp_path):
    import subprocess
    import sys

    code = "import loylab.kernels as k; print(k.USE_NUMBA)"
    out = subprocess.run([sys.executable, "-c", code], env={"LOYLAB_DISABLE_NUMBA": "1", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_benchmark_script_runs():
    import subprocess
    import sys
    from pathlib import Path

    script = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    out = subprocess.run([sys.executable, str(script), "--quick"], capture_output=True, text=True, check=True)
    assert "product_amplitudes" in out.stdout and "speed-up" in out.stdout
