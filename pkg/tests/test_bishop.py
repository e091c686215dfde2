import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discwedge.bishop import (BishopError, BishopProblem, DegenerateDisc, DomainEscape, attached_disc,
                              attachment_residual, bishop_residual, bump, center_map_smoothness,
                              family_attachment_residuals, fill_wedge_check, foliation_check,
                              parameter_grid, sample_edge_points, solve_bishop, solve_family,
                              transversal_grid, transversality_margin, upper_mask)
from discwedge.circle import AnalyticDisc, CircleFunction, grid
from discwedge.wedge import WedgeSpec, flat_graph, in_wedge, quadratic_graph

FLAT = flat_graph(2)
BENT = quadratic_graph(2, 0.05)


def test_bump_shape():
    psi = bump(256)
    up = upper_mask(256)
    assert np.all(psi[up] == 0) and np.all(psi[~up] < 0)
    assert psi.min() == pytest.approx(-np.exp(-4 / np.pi ** 2), rel=1e-3)


def test_flat_edge_is_solved_in_one_step():
    p = BishopProblem(FLAT, [0.1, -0.2], [0.3, 0.1])
    sol = solve_bishop(p)
    assert sol.iterations == 1 and sol.residual == 0.0
    assert np.array_equal(sol.u.samples, p.t[:, None] * p.psi)


def test_perturbed_edge_converges():
    p = BishopProblem(BENT, [0.0, 0.0], [1.0, 0.0])
    sol = solve_bishop(p)
    assert sol.iterations <= 50 and sol.residual < 1e-10
    # independent check by substitution into the equation
    assert bishop_residual(BENT, p.psi, sol.u.samples, p.c, p.t) < 1e-10
    disc = attached_disc(p, sol)
    assert attachment_residual(disc, BENT) < 1e-8
    assert disc.cauchy_riemann_residual() < 1e-7


def test_iteration_history_contracts():
    sol = solve_bishop(BishopProblem(BENT, [0.2, 0.1], [0.5, 0.5]))
    h = np.array(sol.history)
    assert np.all(h[1:] <= h[:-1] * 0.5 + 1e-15)


def test_large_lipschitz_rejected():
    with pytest.raises(BishopError):
        solve_bishop(BishopProblem(quadratic_graph(2, 0.2), [0, 0], [0.1, 0.1]))


def test_escape_from_working_box():
    with pytest.raises(DomainEscape):
        solve_bishop(BishopProblem(BENT, [0.0, 0.0], [5.0, 5.0]))


def test_problem_validation():
    with pytest.raises(ValueError):
        BishopProblem(FLAT, [0, 0], [-0.1, 0])
    with pytest.raises(ValueError):
        BishopProblem(FLAT, [0, 0], [0.1, 0], N=16, psi=np.ones((2, 16)))


def test_transversality():
    sol = attached_disc(BishopProblem(FLAT, [0, 0], [1.0, 0.0]))
    assert transversality_margin(sol, FLAT, np.pi / 2) == pytest.approx(np.pi / 2, abs=1e-6)
    bent = attached_disc(BishopProblem(BENT, [0, 0], [1.0, 0.0]))
    assert transversality_margin(bent, BENT, np.pi / 2) > 1.0
    # zeta -> (zeta, 0) is tangent to E = iR^2 at e^{i pi/2}
    th = grid(64)
    tangent = AnalyticDisc(CircleFunction(np.vstack([np.exp(1j * th), np.zeros(64)])))
    assert transversality_margin(tangent, FLAT, np.pi / 2) == pytest.approx(0.0, abs=1e-6)
    const = AnalyticDisc(CircleFunction(np.full((2, 64), 0.1j)))
    with pytest.raises(DegenerateDisc):
        transversality_margin(const, FLAT, 1.0)
    with pytest.raises(ValueError):
        transversality_margin(sol, FLAT, 4.0)


def test_family_residuals():
    fam = solve_family(BishopProblem(BENT, [0, 0], [0, 0]), *parameter_grid(2, 3))
    assert fam.size == 81
    assert np.max(fam.residual) <= 1e-12
    assert np.max(family_attachment_residuals(fam)) < 1e-8
    k = 40
    assert np.allclose(fam.member(k).trace, fam.traces()[k])


def test_center_map_smoothness():
    tmpl_flat = BishopProblem(FLAT, [0, 0], [0, 0])
    flat = center_map_smoothness(solve_family(tmpl_flat, *parameter_grid(2, 3)))
    assert max(flat.quotients) < 1e-9 and flat.bounded
    bent = center_map_smoothness(solve_family(BishopProblem(BENT, [0, 0], [0, 0]), *parameter_grid(2, 3)))
    assert bent.bounded and bent.quotients[0] > 1e-3


def test_fill_and_foliation_small():
    tmpl = BishopProblem(FLAT, [0, 0], [0, 0])
    fam = solve_family(tmpl, *parameter_grid(2, 7))
    rep = fill_wedge_check(fam, WedgeSpec(FLAT.edge_spec(), 0.2), 40, seed=1)
    assert rep.coverage >= 0.95
    for z, ok, q in zip(rep.samples, rep.success, rep.solutions):
        if not ok:
            continue
        # q = (Re zeta, Im zeta, c, t); re-solve the disc and evaluate it independently
        disc = attached_disc(BishopProblem(FLAT, q[2:4], q[4:6]))
        assert np.allclose(disc.evaluate(np.array([q[0] + 1j * q[1]]))[0], z, atol=1e-6)
    sub = solve_family(tmpl, *transversal_grid([0.2, 0.2]))
    pts = sample_edge_points(sub, 100, seed=2)
    assert np.allclose(pts.real, 0.0)
    assert foliation_check(sub, pts).single_fraction >= 0.99


def test_fill_requires_shrinking():
    fam = solve_family(BishopProblem(FLAT, [0, 0], [0, 0]), *parameter_grid(2, 3))
    with pytest.raises(ValueError):
        fill_wedge_check(fam, WedgeSpec(FLAT.edge_spec(), 0.0), 10, seed=0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(0.01, 0.5), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3),
       st.floats(0.0, 0.9), st.floats(0, 2 * np.pi))
def test_flat_discs_enter_the_wedge(t1, t2, c1, c2, r, phi):
    disc = attached_disc(BishopProblem(FLAT, [c1, c2], [t1, t2]))
    z = disc.evaluate(np.array([r * np.exp(1j * phi)]))
    assert in_wedge(WedgeSpec(FLAT.edge_spec()), z)[0]


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.5), st.floats(0.05, 0.5), st.floats(-0.3, 0.3), st.floats(0.0, 0.9),
       st.floats(0, 2 * np.pi))
def test_perturbed_discs_enter_the_wedge(t1, t2, c1, r, phi):
    disc = attached_disc(BishopProblem(BENT, [c1, -c1], [t1, t2]))
    z = disc.evaluate(np.array([r * np.exp(1j * phi)]))
    assert in_wedge(WedgeSpec(BENT.edge_spec()), z)[0]
