"""Flux models: evaluation, gradient-slot Jacobians, structure checks."""

import numpy as np
import pytest

from slabflow import (
    FluxModel,
    JacobianSingularError,
    NumericInputError,
    SlabflowError,
    check_structure,
    evaluate_flux,
    jacobian_xi,
    parse_expr,
)

FLUX_VARS = ("t", "x", "y", "z", "xi1", "xi2")


def test_linear_flux_is_identity():
    flux = FluxModel.linear_diffusion(dim=2)
    xi = np.array([0.3, -0.7])
    out = evaluate_flux(flux, 0.0, (0.0, 0.0), 0.0, xi)
    assert np.allclose(out, xi, atol=0, rtol=0)


def test_p4_flux_formula():
    # p = 4 without regularisation: |xi|^2 xi
    flux = FluxModel.p_laplacian(4.0, dim=2, eps_reg=0.0)
    xi = np.array([1.0, 2.0])
    out = evaluate_flux(flux, 0.0, (0.0, 0.0), 0.0, xi)
    assert np.allclose(out, 5.0 * xi, rtol=1e-15)


def test_zero_gradient_maps_to_zero_for_all_builtins():
    for flux in (
        FluxModel.linear_diffusion(dim=1),
        FluxModel.p_laplacian(1.5, dim=1),
        FluxModel.p_laplacian(3.0, dim=2),
        FluxModel.z_modulated(2.0, dim=2),
    ):
        zero = np.zeros(flux.dim)
        out = evaluate_flux(flux, 0.3, (0.1,) * flux.dim, 0.7, zero)
        assert np.all(out == 0.0)


def test_p_must_exceed_one():
    with pytest.raises(SlabflowError) as err:
        FluxModel.p_laplacian(1.0, dim=1)
    assert "p must exceed 1" in str(err.value)
    with pytest.raises(SlabflowError):
        FluxModel.p_laplacian(0.5, dim=1)


def test_nonfinite_input_rejected():
    flux = FluxModel.linear_diffusion(dim=1)
    with pytest.raises(NumericInputError):
        evaluate_flux(flux, 0.0, (np.nan,), 0.0, np.array([1.0]))
    with pytest.raises(NumericInputError):
        evaluate_flux(flux, 0.0, (0.0,), 0.0, np.array([np.inf]))


def test_rotation_equivariance_of_isotropic_flux():
    """A(R xi) = R A(xi) for rotation matrices R."""
    flux = FluxModel.p_laplacian(3.0, dim=2)
    rng = np.random.default_rng(5)
    for _ in range(20):
        theta = rng.uniform(0, 2 * np.pi)
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        xi = rng.normal(size=2)
        lhs = evaluate_flux(flux, 0.0, (0.0, 0.0), 0.0, R @ xi)
        rhs = R @ evaluate_flux(flux, 0.0, (0.0, 0.0), 0.0, xi)
        assert np.allclose(lhs, rhs, atol=1e-14)


def test_custom_flux_matches_expression():
    comp = parse_expr("(1 + t)*xi1", FLUX_VARS)
    flux = FluxModel.custom([comp], p=2.0, dim=1, growth_c=2.0, coercivity_alpha=1.0)
    out = evaluate_flux(flux, 0.5, (0.2,), 0.0, np.array([2.0]))
    assert out[0] == pytest.approx(3.0)


def test_regularisation_error_is_second_order():
    """The smoothing parameter perturbs the flux by O(eps^2)."""
    xi = np.array([1.0])
    exact = evaluate_flux(FluxModel.p_laplacian(3.0, dim=1, eps_reg=0.0), 0.0, (0.0,), 0.0, xi)
    errs = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        smoothed = evaluate_flux(FluxModel.p_laplacian(3.0, dim=1, eps_reg=eps), 0.0, (0.0,), 0.0, xi)
        errs.append(abs(float(smoothed[0] - exact[0])))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


# --- Jacobians ---------------------------------------------------------------


def test_jacobian_p4_reference_point():
    flux = FluxModel.p_laplacian(4.0, dim=2, eps_reg=0.0)
    J = jacobian_xi(flux, 0.0, (0.0, 0.0), 0.0, (1.0, 0.0))
    assert np.allclose(J, [[3.0, 0.0], [0.0, 1.0]], atol=1e-14)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_jacobian_matches_finite_differences(p):
    flux = FluxModel.p_laplacian(p, dim=2)
    rng = np.random.default_rng(int(10 * p))
    for _ in range(10):
        xi = rng.normal(size=2)
        J = jacobian_xi(flux, 0.0, (0.0, 0.0), 0.0, xi)
        step = 1e-6 * (1 + np.linalg.norm(xi))
        fd = np.zeros((2, 2))
        for k in range(2):
            dxi = np.zeros(2)
            dxi[k] = step
            hi = evaluate_flux(flux, 0.0, (0.0, 0.0), 0.0, xi + dxi)
            lo = evaluate_flux(flux, 0.0, (0.0, 0.0), 0.0, xi - dxi)
            fd[:, k] = (hi - lo) / (2 * step)
        assert np.allclose(J, fd, rtol=1e-5, atol=1e-7)


def test_jacobian_at_zero_gradient():
    # p = 2: identity; p > 2: zero matrix; p < 2 unregularised: singular
    J2 = jacobian_xi(FluxModel.linear_diffusion(dim=2), 0.0, (0.0, 0.0), 0.0, (0.0, 0.0))
    assert np.allclose(J2, np.eye(2))
    J4 = jacobian_xi(FluxModel.p_laplacian(4.0, dim=2, eps_reg=0.0), 0.0, (0.0, 0.0), 0.0, (0.0, 0.0))
    assert np.allclose(J4, 0.0)
    with pytest.raises(JacobianSingularError):
        jacobian_xi(FluxModel.p_laplacian(1.5, dim=1, eps_reg=0.0), 0.0, (0.0,), 0.0, (0.0,))


def test_custom_jacobian_uses_finite_differences():
    comp = parse_expr("xi1^3", FLUX_VARS)
    flux = FluxModel.custom([comp], p=4.0, dim=1, growth_c=1.0, coercivity_alpha=1.0)
    J = jacobian_xi(flux, 0.0, (0.0,), 0.0, (2.0,))
    assert J[0, 0] == pytest.approx(12.0, rel=1e-6)


def test_jacobian_is_symmetric_for_gradient_fluxes():
    flux = FluxModel.p_laplacian(3.0, dim=2)
    rng = np.random.default_rng(9)
    for _ in range(10):
        xi = rng.normal(size=2)
        J = jacobian_xi(flux, 0.0, (0.0, 0.0), 0.0, xi)
        assert np.allclose(J, J.T, atol=1e-12)


# --- structure checks ----------------------------------------------------------


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_p_laplacian_satisfies_structure(p):
    report = check_structure(FluxModel.p_laplacian(p, dim=1), samples=3000, seed=0)
    assert report.passed, report.summary_lines()


def test_z_modulated_satisfies_structure():
    report = check_structure(FluxModel.z_modulated(2.0, dim=2), samples=3000, seed=0)
    assert report.passed, report.summary_lines()


def test_adversarial_flux_fails_the_right_conditions():
    comp = parse_expr("-xi1", FLUX_VARS)
    flux = FluxModel.custom([comp], p=2.0, dim=1, growth_c=1.0, coercivity_alpha=1.0)
    report = check_structure(flux, samples=3000, seed=1)
    assert not report.passed
    assert not report.conditions["coercivity"].passed
    assert not report.conditions["monotonicity"].passed
    assert report.conditions["growth"].passed


def test_structure_check_is_seeded():
    flux = FluxModel.p_laplacian(3.0, dim=1)
    a = check_structure(flux, samples=500, seed=42)
    b = check_structure(flux, samples=500, seed=42)
    for name in a.conditions:
        assert a.conditions[name].margin == b.conditions[name].margin


def test_structure_report_lines_are_printable():
    report = check_structure(FluxModel.linear_diffusion(dim=1), samples=200, seed=0)
    lines = report.summary_lines()
    assert any("coercivity" in line for line in lines)
    assert all(("PASS" in line or "FAIL" in line) for line in lines if "margin" in line)


def test_undersized_growth_constant_is_caught():
    # |A| = 2|xi| declared with c = 1 must fail the growth condition
    comp = parse_expr("2*xi1", FLUX_VARS)
    flux = FluxModel.custom([comp], p=2.0, dim=1, growth_c=1.0, coercivity_alpha=1.0)
    report = check_structure(flux, samples=2000, seed=3)
    assert not report.conditions["growth"].passed
    assert report.conditions["monotonicity"].passed
