"""
Tests du rig de Fock : base, identités, récurrence de T, H_Λ renormalisé et spectre
"""
import math

import numpy as np
import pytest
from scipy import sparse

from app.config import settings
from app.exceptions import BasisTooLargeError, DomainError
from app.models.physics import GroundStateMethod
from app.services.fock_service import Grid, _max_abs, fock_service
from app.services.model_service import model_service


def test_grid_validation():
    with pytest.raises(DomainError):
        Grid([[1.0, 0.0], [1.0, 0.0]], [1.0, 1.0])
    with pytest.raises(DomainError):
        Grid([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0])
    with pytest.raises(DomainError):
        Grid([[1.0, 0.0]], [1.0, 2.0])
    with pytest.raises(DomainError):
        Grid.radial_shells(2, 3, 0.5, 4.0, directions=3)


def test_radial_shells_cover_the_ball(small_grid):
    assert small_grid.size == 4
    assert small_grid.weights.sum() == pytest.approx(4.0 * math.pi / 3.0 * (4.0 ** 3 - 0.5 ** 3))
    assert small_grid.max_radius == pytest.approx(math.sqrt(4.0 * math.sqrt(2.0)))


def test_single_point_rig(quadratic_model):
    rig = fock_service.build_rig(Grid([[1.0, 0.0, 0.0]], [1.0]), 2, quadratic_model)
    assert rig.dim == 3
    assert rig.dim_ext == 6


def test_small_rig_dimensions(small_rig):
    assert small_rig.dim == 15
    assert small_rig.dim_ext == 126
    assert small_rig.basis[0] == ()


def test_basis_cap(small_grid, quadratic_model, monkeypatch):
    monkeypatch.setattr(settings, "MAX_BASIS_DIM", 10)
    with pytest.raises(BasisTooLargeError):
        fock_service.build_rig(small_grid, 2, quadratic_model)


def test_annihilation_kills_the_vacuum(small_rig):
    assert small_rig.a()[:, 0].nnz == 0


def test_free_energies(small_rig):
    h0 = small_rig.h0_diag()
    assert h0[0] == pytest.approx(2.0)
    radius = np.linalg.norm(small_rig.grid.points[0])
    single = small_rig.index[(0,)]
    assert h0[single] == pytest.approx(2.0 * (1.0 + radius ** 2) + 1.0)


def test_rig_identities(small_rig, small_grid):
    checks = fock_service.rig_identities(small_rig, small_grid.max_radius)
    names = {check.name for check in checks}
    assert {"adjointness", "canonical_commutators", "pull_through", "T_symmetry"} <= names
    failed = [check.name for check in checks if not check.passed]
    assert failed == []


def test_T_blocks(small_rig, small_grid):
    cutoff = small_grid.max_radius
    for n in (1, 2):
        T = fock_service.assemble_T(small_rig, n, cutoff)
        assert T.shape == (small_rig.dim, small_rig.dim)
        assert _max_abs(T - T.T) < 1e-12
        assert T[0, 0] == 0.0
    with pytest.raises(DomainError):
        fock_service.assemble_T(small_rig, 3, cutoff)
    with pytest.raises(DomainError):
        fock_service.assemble_T(small_rig, 1, 10.0)


def test_kernels_match_matrices(small_rig, small_grid):
    report = fock_service.oracle_check(small_rig, small_grid.max_radius)
    assert report.dim == 15
    assert [check.name for check in report.checks if not check.passed] == []
    assert report.passed


def test_renormalised_hamiltonian(small_rig, small_grid):
    renormalised = fock_service.assemble_renormalized_H(small_rig, small_grid.max_radius)
    assert renormalised.identity_residual <= 1e-9
    assert renormalised.r_formula_residual <= 1e-9
    assert renormalised.norm_G <= settings.G_NORM_TARGET
    assert renormalised.escalation[-1].E_0 == renormalised.E_0
    assert fock_service.domain_identity_residual(small_rig, renormalised, samples=5) <= 1e-8


def test_free_model_has_no_dressing(small_grid, quadratic_model):
    rig = fock_service.build_rig(small_grid, 2, quadratic_model.with_updates(g=0.0))
    cutoff = small_grid.max_radius
    sequence = fock_service.t_sequence(rig, cutoff)
    assert sequence.E == [0.0, 0.0]
    assert all(term.nnz == 0 or _max_abs(term) == 0.0 for term in sequence.T)
    renormalised = fock_service.assemble_renormalized_H(rig, cutoff)
    assert renormalised.norm_G == 0.0
    assert _max_abs(renormalised.R) == 0.0


def test_resolvent_expansion(small_rig, small_grid):
    report = fock_service.resolvent_expansion_check(small_rig, 2, small_grid.max_radius, 2)
    assert report.passed
    assert len(report.residuals) == 3
    for L, order in enumerate(report.neumann_orders):
        assert order == pytest.approx(L + 1, abs=0.3)


def test_resolvent_expansion_preconditions(small_rig, small_grid):
    with pytest.raises(DomainError):
        fock_service.resolvent_expansion_check(small_rig, 3, small_grid.max_radius, 1)
    with pytest.raises(DomainError):
        fock_service.resolvent_expansion_check(small_rig, 1, small_grid.max_radius, -1)


def test_ground_state_of_diagonal_matrix():
    matrix = sparse.diags([3.0, 1.0, 2.0, 5.0]).tocsr()
    energy, vector, residual = fock_service.ground_state(matrix, GroundStateMethod.DENSE)
    assert energy == pytest.approx(1.0)
    assert abs(vector[1]) == pytest.approx(1.0)
    assert residual < 1e-12


def test_lanczos_agrees_with_dense():
    rng = np.random.default_rng(4)
    noise = rng.standard_normal((500, 500))
    matrix = np.diag(np.arange(500.0)) + 0.01 * (noise + noise.T)
    lanczos = fock_service.ground_state_result(matrix, GroundStateMethod.LANCZOS)
    dense = fock_service.ground_state_result(matrix, GroundStateMethod.DENSE)
    assert lanczos.energy == pytest.approx(dense.energy, abs=1e-9)
    assert lanczos.dim == 500
    assert lanczos.residual < 1e-6


def test_ground_state_needs_symmetric_matrix():
    with pytest.raises(DomainError):
        fock_service.ground_state(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_free_ground_state(small_rig):
    energy, _, _ = fock_service.ground_state(small_rig.operators["H_0"])
    assert energy == pytest.approx(2.0)


@pytest.fixture
def line_grid():
    # coquilles en 3.54, 7.07, 14.1, 28.3, 56.6, 113
    return Grid.radial_shells(1, 6, 2.5, 160.0)


def test_convergence_study(line_grid, spec_factory):
    model = model_service.validate_model(spec_factory["relativistic"](g=0.3, E_0=1.0))
    table = fock_service.convergence_study(model, line_grid, [10.0, 20.0, 40.0, 80.0], N_max=2, seed=3)
    assert table.dim == 91
    rows = table.rows
    assert rows[0].resolvent_cauchy_diff is None
    for row in rows[1:]:
        assert row.energy_cauchy_diff < row.raw_energy_diff
    assert rows[-1].resolvent_cauchy_diff < rows[1].resolvent_cauchy_diff
    assert "indice" in table.note


def test_convergence_study_without_coupling(line_grid, spec_factory):
    model = model_service.validate_model(spec_factory["relativistic"](E_0=1.0)).with_updates(g=0.0)
    table = fock_service.convergence_study(model, line_grid, [10.0, 20.0, 40.0], N_max=1)
    assert [row.E_gs_raw for row in table.rows] == pytest.approx([1.0] * 3)
    assert all(row.resolvent_cauchy_diff == 0.0 for row in table.rows[1:])
    assert table.cauchy_decay_exponent is None


def test_convergence_study_needs_increasing_cutoffs(line_grid, relativistic_model):
    with pytest.raises(DomainError):
        fock_service.convergence_study(relativistic_model, line_grid, [20.0, 10.0], N_max=1)


def test_operator_bounds(small_rig, small_grid):
    report = fock_service.verify_operator_bounds(small_rig, small_grid.max_radius)
    assert all(check.passed for check in report.a_omega.values())
    assert report.norm_G < 1.0
    assert report.passed
    assert len(report.escalation_witness) == 4
    assert report.G_bound_exponent == pytest.approx(0.875)
    assert len(report.T_relative_constants) == 3
