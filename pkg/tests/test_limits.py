import math

import numpy as np
import pytest

from permboot.empirical import LambdaVector, at_risk_process, uncensored_subdist
from permboot.errors import ContractError, SingularityError
from permboot.functionals import HazardBundle
from permboot.limits import (
    AnalyticSurvivalPopulation,
    EmpiricalSurvivalPopulation,
    KernelKind,
    PlainPopulation,
    assemble_kernel_matrix,
    bb_cov,
    boot_coeff,
    exponential_survival_population,
    indicator_kernel,
    km_kernel,
    na_kernel,
    perm_coeff,
    survival_cross_kernel,
)

LAM = LambdaVector((0.25, 0.75))


def test_perm_coeff_values():
    assert perm_coeff(LAM, 0, 0) == pytest.approx(3.0)  # 1/0.25 - 1
    assert perm_coeff(LAM, 1, 1) == pytest.approx(1 / 3)
    assert perm_coeff(LAM, 0, 1) == -1.0


def test_boot_coeff_values():
    assert boot_coeff(LAM, 0, 0) == pytest.approx(4.0)
    assert boot_coeff(LAM, 0, 1) == 0.0


def test_perm_coeff_weighted_rows_vanish():
    # sum_j lambda_j * coeff(i, j) = 0: the conservation constraint
    for m in (2, 3, 5):
        lam = LambdaVector.from_sizes(tuple(range(1, m + 1)))
        for i in range(m):
            s = sum(lam[j] * perm_coeff(lam, i, j) for j in range(m))
            assert s == pytest.approx(0, abs=1e-14)


def test_bb_cov_uniform():
    pop = PlainPopulation(lambda t: min(max(t, 0.0), 1.0))
    assert bb_cov(pop, 0.5, 0.5) == pytest.approx(0.25)
    assert bb_cov(pop, 0.25, 0.75) == pytest.approx(0.25 - 0.25 * 0.75)


def test_indicator_kernel_wrong_kind():
    pop = PlainPopulation(lambda t: t)
    with pytest.raises(ContractError):
        indicator_kernel(KernelKind.PERM_KM, pop, LAM, 0, 0, 0.3, 0.3)


def test_exponential_population_c_function():
    # Exp(1) failures, no censoring: C(t) = e^t - 1 and Lambda(t) = t
    pop = exponential_survival_population([1.0, 1.0], [0.0, 0.0], LAM, tau=1.5)
    for t in (0.2, 0.8, 1.5):
        assert pop.C(t) == pytest.approx(math.exp(t) - 1, rel=1e-8)
        assert pop.cum_hazard(t) == pytest.approx(t)
        assert pop.S(t) == pytest.approx(math.exp(-t))
        assert pop.km_integral(t) == pop.C(t)


def test_exponential_population_with_censoring():
    # Exp(a) failure, Exp(c) censoring: Hbar = e^{-(a+c)t},
    # C(t) = a/(a+c) (e^{(a+c)t} - 1)
    a, c = 1.0, 0.5
    pop = exponential_survival_population([a, a], [c, c], LAM, tau=1.0)
    for t in (0.3, 1.0):
        assert pop.Hbar(t) == pytest.approx(math.exp(-(a + c) * t))
        expected = a / (a + c) * (math.exp((a + c) * t) - 1)
        assert pop.C(t) == pytest.approx(expected, rel=1e-8)


def test_empirical_population_small_dataset():
    obs = [(1, 1), (2, 0), (3, 1)]
    bundle = HazardBundle(at_risk_process(obs), uncensored_subdist(obs), tau=3)
    pop = EmpiricalSurvivalPopulation(bundle)
    assert pop.Hbar(2) == pytest.approx(2 / 3)
    assert pop.Huc(3) == pytest.approx(2 / 3)
    assert pop.S(2) == pytest.approx(2 / 3)
    # C = sum (1 - dL) dL / Hbar over events: (2/3)(1/3)/1 + 0
    assert pop.C(3) == pytest.approx(2 / 9)
    # km integral up to 2 only sees the event at 1: (1/3)/((2/3) * 1)
    assert pop.km_integral(2) == pytest.approx(0.5)
    with pytest.raises(SingularityError):
        pop.km_integral(3)  # hazard jump of 1 at the last death


def test_na_kernel_min_structure():
    pop = exponential_survival_population([1.0, 1.0], [0.0, 0.0], LAM, tau=2)
    v_st = na_kernel(KernelKind.PERM_SURVIVAL_NA, pop, LAM, 0, 0, 0.5, 1.5)
    v_ts = na_kernel(KernelKind.PERM_SURVIVAL_NA, pop, LAM, 0, 0, 1.5, 0.5)
    assert v_st == pytest.approx(v_ts)
    assert v_st == pytest.approx(perm_coeff(LAM, 0, 0) * (math.exp(0.5) - 1), rel=1e-8)


def test_km_kernel_zero_for_boot_offdiag():
    pop = exponential_survival_population([1.0, 1.0], [0.0, 0.0], LAM, tau=2)
    assert km_kernel(KernelKind.BOOT_KM, pop, LAM, 0, 1, 0.5, 0.5) == 0.0


def test_cross_kernel_block_symmetry():
    pop = exponential_survival_population([1.0, 1.2], [0.3, 0.4], LAM, tau=2)
    for s, t in ((0.4, 1.1), (1.1, 0.4), (0.7, 0.7)):
        b_ij = survival_cross_kernel(KernelKind.PERM_SURVIVAL_CROSS, pop, LAM, 0, 1, s, t)
        b_ji = survival_cross_kernel(KernelKind.PERM_SURVIVAL_CROSS, pop, LAM, 1, 0, t, s)
        assert np.allclose(b_ij, b_ji.T, atol=1e-10)


def test_assemble_matrix_symmetric_psd():
    pop = PlainPopulation(lambda t: 1 - math.exp(-t))
    grid = [0.2, 0.6, 1.1, 2.0]
    for kind in (KernelKind.PERM_INDICATOR, KernelKind.BOOT_INDICATOR):
        mat = assemble_kernel_matrix(kind, pop, LAM, grid)
        assert mat.shape == (8, 8)
        assert np.allclose(mat, mat.T, atol=1e-12)
        assert np.linalg.eigvalsh(mat).min() > -1e-10


def test_assemble_cross_matrix_shape():
    pop = exponential_survival_population([1.0, 1.0], [0.5, 0.5], LAM, tau=1.5)
    grid = [0.3, 0.9]
    mat = assemble_kernel_matrix(KernelKind.PERM_SURVIVAL_CROSS, pop, LAM, grid)
    assert mat.shape == (8, 8)
    assert np.allclose(mat, mat.T, atol=1e-9)


def test_boot_cross_matrix_block_diagonal():
    pop = exponential_survival_population([1.0, 1.0], [0.5, 0.5], LAM, tau=1.5)
    grid = [0.3, 0.9]
    mat = assemble_kernel_matrix(KernelKind.BOOT_SURVIVAL_CROSS, pop, LAM, grid)
    # groups independent: the off-diagonal 4x4 group blocks vanish
    assert np.allclose(mat[:4, 4:], 0, atol=1e-12)
    assert np.allclose(mat[4:, :4], 0, atol=1e-12)


def test_plugin_tracks_analytic_at_scale():
    # plug-in C from a large simulated pooled sample approaches e^t - 1
    rng = np.random.default_rng(77)
    z = rng.exponential(1.0, size=20000)
    obs = [(float(t), 1) for t in z]
    bundle = HazardBundle(at_risk_process(obs), uncensored_subdist(obs), tau=1.0)
    pop = EmpiricalSurvivalPopulation(bundle)
    for t in (0.3, 0.7, 1.0):
        assert pop.C(t) == pytest.approx(math.exp(t) - 1, rel=0.1)
