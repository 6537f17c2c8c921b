import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from pgd_strip import pgd
from pgd_strip.discretization import build_mesh, build_operators, ThicknessBasis
from pgd_strip.metrics import kinematics_diagnostics
from pgd_strip.model import (AxialOrder, CASE_IDS, Integration, SolverSettings, make_case,
                             plane_strain_moduli)
from pgd_strip.pgd import (SeparatedTerm, SingularSystemError, center_deflection,
                           energy_norm_diff, evaluate_displacement, external_work,
                           fixed_point_block, greedy_enrich, nodal_load, operators_for,
                           solve_block, solve_greedy, solve_inplane_step,
                           solve_thickness_step, strain_energy)

SMALL = SolverSettings(n_axial_elements=24, fp_tolerance=1e-6)


def full_tensor_solution(ops, mat, case):
    """Galerkin solution in the whole (axial x thickness) tensor space."""
    n, m = ops.n_axial, ops.n_thick
    eye = np.eye(m)
    blocks = {}
    for ci in (1, 3):
        for cj in (1, 3):
            blocks[ci, cj] = [[pgd.axial_pair_matrix(ops, mat, ci, eye[a], cj, eye[b])
                               for b in range(m)] for a in range(m)]
    size = 2 * m * n

    def index(c, a):
        return (0 if c == 1 else m * n) + a * n

    A = np.zeros((size, size))
    for (ci, cj), grid in blocks.items():
        for a in range(m):
            for b in range(m):
                i, j = index(ci, a), index(cj, b)
                A[i:i + n, j:j + n] = grid[a][b]
    g3 = nodal_load(ops, case)
    rhs = np.zeros(size)
    for a in range(m):
        i = index(3, a)
        rhs[i:i + n] = ops.f3_trace[a] * (ops.m1 @ g3)
    free = np.ones(size, dtype=bool)
    for a in range(m):
        for c in (1, 3):
            fm = pgd.free_mask(ops, c, case.clamped)
            free[index(c, a):index(c, a) + n] &= fm
    x = np.zeros(size)
    x[free] = np.linalg.solve(A[np.ix_(free, free)], rhs[free])
    return [SeparatedTerm(c, eye[a], x[index(c, a):index(c, a) + n])
            for c in (1, 3) for a in range(m)]


class TestInplaneStep:
    def test_zero_load_gives_zero_axial_functions(self, mat):
        case = make_case("CC-UP", 20, amplitude=0.0)
        ops = operators_for(case, SMALL)
        r1, s3 = pgd.initial_thickness_functions(ops.basis)
        v1, v3, w3 = solve_inplane_step(ops, mat, case, r1, s3, nodal_load(ops, case))
        assert not np.any(v1) and not np.any(v3) and not np.any(w3)

    def test_block_matrix_is_symmetric(self, mat, rng):
        ops = operators_for(make_case("SS-UP", 10), SMALL)
        A = pgd.inplane_matrix(ops, mat, rng.standard_normal(5), rng.standard_normal(5))
        np.testing.assert_allclose(A, A.T, rtol=0, atol=1e-12 * np.abs(A).max())

    @pytest.mark.parametrize("case_id", CASE_IDS)
    def test_boundary_conditions_hold_at_every_iteration(self, mat, case_id, monkeypatch):
        seen = []
        original = pgd.solve_inplane_step

        def recording(*args, **kwargs):
            out = original(*args, **kwargs)
            seen.append(out)
            return out

        monkeypatch.setattr(pgd, "solve_inplane_step", recording)
        case = make_case(case_id, 30)
        fixed_point_block(case, mat, SMALL)
        assert len(seen) >= 2
        for v1, v3, w3 in seen:
            assert v3[0] == 0.0 and v3[-1] == 0.0
            assert w3[0] == 0.0 and w3[-1] == 0.0
            if case.clamped:
                assert v1[0] == 0.0 and v1[-1] == 0.0
            else:
                assert v1[0] != 0.0

    @pytest.mark.parametrize("case_id", CASE_IDS)
    def test_mirror_symmetry_of_axial_functions(self, mat, case_id):
        case = make_case(case_id, 25)
        sol = fixed_point_block(case, mat, SMALL)
        b = sol.block
        # the boundary-layer mesh is symmetric, so node reversal is reflection
        x = sol.ops.mesh.node_coords
        np.testing.assert_allclose(case.length - x[::-1], x, atol=1e-14)
        scale = np.abs(b.v3).max()
        np.testing.assert_allclose(b.v3, b.v3[::-1], atol=1e-9 * scale)
        np.testing.assert_allclose(b.w3, b.w3[::-1], atol=1e-9 * np.abs(b.w3).max())
        np.testing.assert_allclose(b.v1, -b.v1[::-1], atol=1e-9 * np.abs(b.v1).max())

    def test_reflected_mesh_gives_mirrored_solution(self, mat):
        case = make_case("CC-UP", 15)
        s = SolverSettings(n_axial_elements=9, fp_tolerance=1e-8, boundary_layer_mesh=False)
        verts = np.sort(np.r_[0.0, np.cumsum(np.linspace(1, 2, 9))])
        verts *= case.length / verts[-1]
        basis = ThicknessBasis(4, case.thickness)
        mesh = build_mesh(1.0, case.thickness, 1).from_vertices(verts, AxialOrder.QUADRATIC)
        ops_a = build_operators(mesh, basis)
        ops_b = build_operators(mesh.reflected(), basis)
        a = fixed_point_block(case, mat, s, ops=ops_a)
        b = fixed_point_block(case, mat, s, ops=ops_b)
        x1 = np.linspace(0.0, case.length, 17)
        x3 = 0.3 * case.thickness
        u1a, u3a = evaluate_displacement(a, x1, x3)
        u1b, u3b = evaluate_displacement(b, case.length - x1, x3)
        scale = np.abs(u3a).max()
        np.testing.assert_allclose(u3a, u3b, atol=1e-8 * scale)
        np.testing.assert_allclose(u1a, -u1b, atol=1e-8 * scale)


def recorded_solves(monkeypatch):
    """Collect (A, b, x) of every linear solve performed by the PGD routines."""
    seen = []
    original = pgd._spd_solve

    def recording(A, b, what):
        x = original(A, b, what)
        seen.append((A, b, x))
        return x

    monkeypatch.setattr(pgd, "_spd_solve", recording)
    return seen


class TestLinearSolves:
    @pytest.mark.parametrize("slenderness", [1, 5, 10])
    def test_relative_residual_moderate_slenderness(self, mat, slenderness, monkeypatch):
        seen = recorded_solves(monkeypatch)
        for cid in CASE_IDS:
            case = make_case(cid, slenderness)
            fixed_point_block(case, mat)
            solve_greedy(case, mat, n_modes=2)
        for A, b, x in seen:
            r = A.astype(np.longdouble) @ x - b
            assert np.linalg.norm(r.astype(float)) < 1e-10 * np.linalg.norm(b.astype(float))

    @pytest.mark.parametrize("slenderness", [100, 10_000])
    def test_backward_error_thin_strips(self, mat, slenderness, monkeypatch):
        # x is stored in double precision, so the attainable residual is ~ eps ||A|| ||x||;
        # a stable Cholesky solve keeps the normwise backward error below n eps
        seen = recorded_solves(monkeypatch)
        for cid in ("SS-UP", "CC-UP"):
            case = make_case(cid, slenderness)
            fixed_point_block(case, mat)
            solve_greedy(case, mat, n_modes=2)
        for A, b, x in seen:
            Al, xl = A.astype(np.longdouble), x.astype(np.longdouble)
            r = float(np.abs(Al @ xl - b).max())
            scale = (np.linalg.norm(A.astype(float), np.inf) * np.abs(x).max()
                     + np.abs(b.astype(float)).max())
            assert r / scale < len(b) * np.finfo(float).eps


class TestThicknessStep:
    def test_singular_when_axial_functions_vanish(self, mat):
        case = make_case("SS-UP", 10)
        ops = operators_for(case, SMALL)
        zero = np.zeros(ops.n_axial)
        v3 = np.sin(np.pi * ops.mesh.node_coords)
        with pytest.raises(SingularSystemError):
            solve_thickness_step(ops, mat, zero, v3, zero, nodal_load(ops, case))

    def test_thickness_matrix_is_symmetric(self, mat, rng):
        ops = operators_for(make_case("CC-SP", 10), SMALL)
        A = pgd.thickness_matrix(ops, mat, rng.standard_normal(ops.n_axial),
                                 rng.standard_normal(ops.n_axial))
        np.testing.assert_allclose(A, A.T, rtol=0, atol=1e-12 * np.abs(A).max())


class TestEnergyNorm:
    def test_identical_and_scaled(self, mat, rng):
        ops = operators_for(make_case("CC-UP", 10), SMALL)
        b = [SeparatedTerm(1, rng.standard_normal(5), rng.standard_normal(ops.n_axial)),
             SeparatedTerm(3, rng.standard_normal(5), rng.standard_normal(ops.n_axial))]
        a = [SeparatedTerm(p.component, p.thickness, 2.0 * p.axial) for p in b]
        assert energy_norm_diff(b, b, ops, mat) == pytest.approx(0.0, abs=1e-7)
        assert energy_norm_diff(a, b, ops, mat) == pytest.approx(1.0, rel=1e-12)

    def test_zero_reference_raises(self, mat):
        ops = operators_for(make_case("CC-UP", 10), SMALL)
        zero = [SeparatedTerm(3, ops.r3_const, np.zeros(ops.n_axial))]
        with pytest.raises(ValueError):
            energy_norm_diff(zero, zero, ops, mat)


class TestBlockFixedPoint:
    def test_zero_load_returns_zero_mode(self, mat):
        sol = fixed_point_block(make_case("SS-UP", 10, amplitude=0.0), mat, SMALL)
        assert sol.report.converged and sol.report.iterations == 1
        assert center_deflection(sol) == 0.0

    @pytest.mark.parametrize("case_id", CASE_IDS)
    @pytest.mark.parametrize("slenderness", [5, 50, 500, 10_000])
    def test_energy_identity(self, mat, case_id, slenderness):
        sol = fixed_point_block(make_case(case_id, slenderness), mat, SMALL)
        assert sol.report.converged
        work = external_work(sol)
        assert 2.0 * strain_energy(sol) == pytest.approx(work, rel=1e-8)

    @given(amp=st.floats(0.01, 100.0))
    @hsettings(max_examples=10)
    def test_linear_in_load_amplitude(self, amp):
        mat = plane_strain_moduli(1.0, 0.3)
        base = fixed_point_block(make_case("CC-UP", 20), mat, SMALL)
        scaled = fixed_point_block(make_case("CC-UP", 20, amplitude=amp), mat, SMALL)
        assert center_deflection(scaled) == pytest.approx(amp * center_deflection(base),
                                                          rel=1e-6)

    @pytest.mark.parametrize("case_id", CASE_IDS)
    def test_normalization_does_not_change_displacement(self, mat, case_id):
        case = make_case(case_id, 40)
        a = fixed_point_block(case, mat, SMALL, normalize=True)
        b = fixed_point_block(case, mat, SMALL, normalize=False)
        x1 = np.linspace(0, 1, 11)
        for x3 in (-0.5 * case.thickness, 0.0, 0.2 * case.thickness):
            ua, ub = evaluate_displacement(a, x1, x3), evaluate_displacement(b, x1, x3)
            for fa, fb in zip(ua, ub):
                np.testing.assert_allclose(fa, fb, atol=1e-8 * np.abs(ua[1]).max())

    def test_random_initial_guess_reaches_same_mode(self, mat):
        case = make_case("CC-UP", 50)
        a = fixed_point_block(case, mat, SMALL)
        b = fixed_point_block(case, mat, SMALL, initial="random", seed=3)
        assert center_deflection(b) == pytest.approx(center_deflection(a), rel=1e-5)

    def test_unknown_initial_guess(self, mat):
        with pytest.raises(ValueError):
            fixed_point_block(make_case("CC-UP", 50), mat, SMALL, initial="nope")

    @pytest.mark.parametrize("case_id", CASE_IDS)
    def test_first_mode_kinematics_when_thin(self, mat, case_id):
        sol = fixed_point_block(make_case(case_id, 1000), mat, SolverSettings())
        r1_res, shear = kinematics_diagnostics(sol)
        assert r1_res < 1e-3
        assert shear < 1e-2

    def test_r1_is_linear_without_poisson_coupling(self, mat0):
        sol = fixed_point_block(make_case("CC-UP", 1000), mat0, SolverSettings())
        r1_res, _ = kinematics_diagnostics(sol)
        assert r1_res < 1e-6

    def test_moderately_thick_clamped_corrector_is_quadratic(self, mat):
        sol = fixed_point_block(make_case("CC-UP", 20), mat, SolverSettings())
        half_t = 0.5 * sol.case.thickness
        basis = sol.ops.basis
        weight = np.abs(sol.block.s3) * half_t ** basis.powers
        weight[basis.powers == 0] = 0.0  # the constant is a gauge choice
        assert basis.powers[np.argmax(weight)] == 2

    def test_divergence_window_zero_disables_rule(self, mat):
        s = SolverSettings(divergence_window=0, fp_max_iters=3, fp_tolerance=1e-14)
        sol = fixed_point_block(make_case("CC-UP", 20), mat, s)
        assert sol.report.iterations == 3
        assert not sol.report.converged and not sol.report.diverged

    def test_track_change(self):
        assert pgd._track_change([1, 2, 3, 4], 3)
        assert not pgd._track_change([1, 2, 3], 3)
        assert not pgd._track_change([1, 2, 1.5, 4], 3)
        assert not pgd._track_change([1, 2, 3, 4, 5, 6], 0)


class TestLocking:
    LINEAR = dict(axial_order=AxialOrder.LINEAR, boundary_layer_mesh=False,
                  n_axial_elements=64)

    def ratio(self, mat, slenderness, integration):
        from pgd_strip.oracles import kl_solution
        case = make_case("SS-SP", slenderness)
        sol = fixed_point_block(case, mat, SolverSettings(integration=integration,
                                                          **self.LINEAR))
        return center_deflection(sol) / kl_solution(case, mat).w_center

    def test_selective_integration_is_locking_free(self, mat):
        assert self.ratio(mat, 40, Integration.SELECTIVE) == pytest.approx(1.0009, abs=0.002)
        assert self.ratio(mat, 10_000, Integration.SELECTIVE) == pytest.approx(0.9994,
                                                                               abs=0.002)

    def test_full_integration_locks(self, mat):
        assert self.ratio(mat, 10_000, Integration.FULL) <= 1e-3


class TestGreedy:
    def test_potential_energy_decreases_with_modes(self, mat):
        case = make_case("CC-UP", 20)
        sol = solve_greedy(case, mat, SMALL, n_modes=5)
        g3 = nodal_load(sol.ops, case)
        potentials = []
        for k in range(1, 6):
            terms = [t for mode in sol.extras[:k] for t in mode.terms()]
            potentials.append(strain_energy(terms, sol.ops, mat)
                              - pgd.load_functional(sol.ops, g3, terms))
        assert all(b <= a for a, b in zip(potentials, potentials[1:]))
        # each mode lowers the potential energy by half its own energy
        for k in range(1, 5):
            drop = strain_energy(sol.extras[k].terms(), sol.ops, mat)
            assert potentials[k - 1] - potentials[k] == pytest.approx(drop, rel=1e-8)

    @pytest.mark.parametrize("case_id", ["SS-UP", "CC-UP"])
    def test_block_and_greedy_stay_below_full_tensor_energy(self, mat, case_id):
        case = make_case(case_id, 10)
        ops = operators_for(case, SMALL)
        full = full_tensor_solution(ops, mat, case)
        e_full = strain_energy(full, ops, mat)
        block = fixed_point_block(case, mat, SMALL, ops=ops)
        enriched = greedy_enrich(block, 4)
        e_block, e_rich = strain_energy(block), strain_energy(enriched)
        assert e_block <= e_full * (1 + 1e-10)
        assert e_block <= e_rich * (1 + 1e-10) <= e_full * (1 + 1e-9)
        assert energy_norm_diff(enriched.terms(), full, ops, mat) < energy_norm_diff(
            block.terms(), full, ops, mat)

    def test_mode_vanishes_once_residual_is_zero(self, mat):
        case = make_case("CC-UP", 10)
        ops = operators_for(case, SMALL)
        full = full_tensor_solution(ops, mat, case)
        mode, report = pgd.compute_greedy_mode(ops, mat, case, SMALL, full)
        assert report.converged and report.iterations == 1
        assert not np.any(mode.v1) and not np.any(mode.v3)

    def test_energy_identity_per_mode_count(self, mat):
        sol = solve_greedy(make_case("SS-SP", 30), mat, SMALL, n_modes=3)
        assert 2.0 * strain_energy(sol) == pytest.approx(external_work(sol), rel=1e-6)

    def test_enrich_rejects_nonpositive_count(self, mat):
        sol = fixed_point_block(make_case("CC-UP", 10), mat, SMALL)
        with pytest.raises(ValueError):
            greedy_enrich(sol, 0)

    def test_solve_block_appends_requested_modes(self, mat):
        sol = solve_block(make_case("CC-UP", 10), mat, SMALL.replace(n_greedy_modes=2))
        assert sol.n_modes == 4 and len(sol.mode_reports) == 2


class TestEvaluation:
    def test_clamped_ends_are_fixed(self, mat):
        sol = fixed_point_block(make_case("CC-SP", 20), mat, SMALL)
        x3 = np.linspace(-0.025, 0.025, 5)
        for x1 in (0.0, 1.0):
            u1, u3 = evaluate_displacement(sol, x1, x3)
            assert np.all(u1 == 0.0) and np.all(u3 == 0.0)

    def test_outside_points_rejected(self, mat):
        sol = fixed_point_block(make_case("CC-SP", 20), mat, SMALL)
        with pytest.raises(ValueError):
            evaluate_displacement(sol, 1.1, 0.0)
        with pytest.raises(ValueError):
            evaluate_displacement(sol, 0.5, 0.03)

    def test_center_deflection_matches_field(self, mat):
        sol = fixed_point_block(make_case("SS-UP", 20), mat, SMALL)
        _, u3 = evaluate_displacement(sol, 0.5, 0.0)
        assert center_deflection(sol) == pytest.approx(u3[0], rel=1e-13)
        # mid-surface u1 vanishes by antisymmetry of r1 in x3
        u1, _ = evaluate_displacement(sol, np.linspace(0, 1, 7), 0.0)
        assert np.abs(u1).max() < 1e-10 * abs(u3[0])
