import math

import numpy as np
import pytest

from mrof import (
    EnergyParams,
    SolveConfig,
    SolveReport,
    continuation,
    default_schedule,
    el_residual,
    energy,
    make_grid,
    minimize,
    parse_manifold,
    retract_into_ball,
    taut_string_1d,
)
from mrof.errors import DomainError, NoConvergence, RangeViolation, RequiresPositiveEps
from mrof.solver import (
    TRACE_HEADER,
    data_ball,
    geometric_schedule,
    stagewise_lipschitz_bounded,
    validate_schedule,
    write_trace_csv,
)
from mrof.verify import geodesic_path_family

E1 = parse_manifold("euclidean:1")
S2 = parse_manifold("sphere:2")
H2 = parse_manifold("hyperbolic:2")
ROUNDOFF = 64 * np.finfo(float).eps


def step_signal(n=64):
    g = make_grid(f"interval:{n}")
    x = g.coords[:, 0]
    return g, np.where(x < 0.4, 0.0, 1.0)[:, None] + 0.3 * (x > 0.75)[:, None]


def noisy_arc(rng, n=32, amp=0.05):
    g = make_grid(f"circle:{n}")
    t = 0.5 * np.sin(g.coords[:, 0])
    arc = np.column_stack([np.cos(t), np.sin(t), np.zeros_like(t)])
    noise = S2.random_tangent(rng, arc)
    return g, S2.exp(arc, amp * noise / np.maximum(1.0, S2.norm(arc, noise))[:, None])


def assert_trace_nonincreasing(report):
    tot = [e.total for e in report.energy_trace]
    for a, b in zip(tot, tot[1:]):
        assert b <= a + ROUNDOFF * max(abs(a), 1.0)


class TestMinimize:
    def test_constant_data(self, grid):
        f = np.tile(H2.origin(), (grid.n_nodes, 1))
        u, rep = minimize(H2, grid, f, EnergyParams(lam=1.0, eps=0.1))
        assert rep.iterations <= 1 and rep.converged
        np.testing.assert_array_equal(u, f)

    def test_sphere_arc(self, rng):
        g, f = noisy_arc(rng)
        params = EnergyParams(lam=4.0, sigma=0.01, eps=0.01)
        u, rep = minimize(S2, g, f, params)
        assert rep.converged
        assert energy(S2, g, u, f, params).total <= energy(S2, g, f, f, params).total
        assert rep.range_max_dist <= math.pi / 4
        assert_trace_nonincreasing(rep)

    @pytest.mark.parametrize("spec,gspec", [("euclidean:2", "rect2d:5x4"), ("hyperbolic:2", "interval:40"),
                                            ("spd:2", "circle:10"), ("sphere:2", "rect2d:4x4:rho=sphere_patch")])
    def test_converged_residual_and_fidelity(self, spec, gspec, rng):
        M = parse_manifold(spec)
        g = make_grid(gspec)
        c = M.random_point(rng, None, 0.3)
        f = M.random_point(rng, c, 0.3, size=g.n_nodes)
        params = EnergyParams(lam=3.0, sigma=0.05, eps=0.05)
        cfg = SolveConfig(grad_tol=1e-8)
        u, rep = minimize(M, g, f, params, cfg)
        assert rep.converged and rep.final_grad_norm <= cfg.grad_tol
        _, res = el_residual(M, g, u, f, params)
        assert res <= 10 * cfg.grad_tol / g.node_weight.min()
        assert res <= 1e-6
        e_f = energy(M, g, f, f, params).total
        e_u = energy(M, g, u, f, params)
        assert e_u.total <= e_f and e_u.fidelity <= e_f
        assert rep.range_max_dist <= rep.range_radius + 1e-8
        assert_trace_nonincreasing(rep)

    def test_retraction_never_lowers_energy_further(self, rng):
        g = make_grid("interval:30")
        c = H2.origin()
        f = H2.random_point(rng, c, 1.0, size=30)
        params = EnergyParams(lam=2.0, eps=0.05)
        u, rep = minimize(H2, g, f, params)
        p, R = data_ball(H2, f)
        assert energy(H2, g, retract_into_ball(H2, p, R, u), f, params).total <= energy(H2, g, u, f, params).total

    @pytest.mark.parametrize("direction", ["irls", "gradient"])
    def test_alternative_directions_decrease(self, direction, rng):
        g, f = step_signal(32)
        params = EnergyParams(lam=8.0, eps=0.1)
        cfg = SolveConfig(direction=direction, max_iter=300, on_max_iter="flag")
        u, rep = minimize(E1, g, f, params, cfg)
        assert rep.final_energy.total < rep.energy_trace[0].total
        assert_trace_nonincreasing(rep)

    def test_max_iter_policy(self):
        g, f = step_signal(32)
        params = EnergyParams(lam=8.0, eps=1e-3)
        with pytest.raises(NoConvergence):
            minimize(E1, g, f, params, SolveConfig(max_iter=1))
        _, rep = minimize(E1, g, f, params, SolveConfig(max_iter=1, on_max_iter="flag"))
        assert "max_iter" in rep.flags and not rep.converged

    def test_preconditions(self):
        g = make_grid("interval:3")
        with pytest.raises(RequiresPositiveEps):
            minimize(E1, g, np.zeros((3, 1)), EnergyParams(lam=1.0))
        equator = np.array([[1.0, 0, 0], [0, 1.0, 0], [-1.0, 0, 0]])
        with pytest.raises(RangeViolation):
            minimize(S2, g, equator, EnergyParams(lam=1.0, eps=0.1), center=np.array([0, 0, 1.0]))

    def test_outside_strong_radius_flag(self):
        g = make_grid("interval:3")
        t = np.array([-1.0, 0.0, 1.0])
        f = np.column_stack([np.cos(t), np.sin(t), np.zeros(3)])
        _, rep = minimize(S2, g, f, EnergyParams(lam=1.0, eps=0.1))
        assert "outside_strong_radius" in rep.flags

    @pytest.mark.parametrize("kw", [{"armijo_c": 1.0}, {"step_shrink": 0.0}, {"grad_tol": 0.0},
                                    {"direction": "cg"}, {"on_max_iter": "ignore"}, {"max_iter": -1}])
    def test_config_validation(self, kw):
        with pytest.raises(DomainError):
            SolveConfig(**kw)

    def test_deterministic(self, rng):
        g, f = noisy_arc(rng, 16)
        params = EnergyParams(lam=4.0, eps=0.02)
        a = minimize(S2, g, f, params)
        b = minimize(S2, g, f, params)
        assert np.array_equal(a[0], b[0])
        assert a[1].to_json() == b[1].to_json()


class TestContinuation:
    def test_one_stage_equals_minimize(self, rng):
        g, f = noisy_arc(rng, 16)
        u1, reps = continuation(S2, g, f, 4.0, [(0.05, 0.01, 0.0)])
        u2, rep = minimize(S2, g, f, EnergyParams(lam=4.0, sigma=0.01, eps=0.05))
        assert np.array_equal(u1, u2)
        assert reps[0].to_json() == rep.to_json()

    def test_step_signal_matches_taut_string(self):
        g, f = step_signal(64)
        u, reps = continuation(E1, g, f, 8.0, geometric_schedule(1e-1, 0.25, 6))
        assert reps[-1].params["eps"] < 1e-4
        ts = taut_string_1d(f[:, 0], 8.0, grid=g).values
        assert np.max(np.abs(u[:, 0] - ts)) <= 1e-3

    def test_geometric_schedule_five_stages(self, rng):
        g = make_grid("interval:64")
        f = np.interp(g.coords[:, 0], np.linspace(0, 1, 8), rng.uniform(-1, 1, 8))
        u, reps = continuation(E1, g, f[:, None], 8.0, geometric_schedule(1e-1, 0.25, 5))
        assert len(reps) == 5 and all(r.converged for r in reps)
        assert np.max(np.abs(u[:, 0] - taut_string_1d(f, 8.0, grid=g).values)) <= 1e-3

    def test_stagewise_lipschitz_hyperbolic(self):
        fam = geodesic_path_family(H2)
        g = make_grid("interval:128")
        _, reps = continuation(H2, g, fam.sample(g), 100.0, geometric_schedule(1e-1, 0.25, 5, sigma_tied=True))
        assert all(r.converged for r in reps)
        assert stagewise_lipschitz_bounded(reps, 1.05)
        assert max(r.lipschitz_of_u for r in reps) <= fam.lip * (1 + 1e-6)

    def test_default_schedule(self):
        g = make_grid("interval:11")
        s = default_schedule(g)
        assert len(s) == 6
        assert s[0] == (0.1, 0.1, 0.2) and s[-1][0] == pytest.approx(1e-4)
        assert all(st[2] == 0.0 for st in s[1:])
        assert all(st[1] == 0.5 for st in default_schedule(g, sigma=0.5))
        validate_schedule(s)

    @pytest.mark.parametrize("sched,err", [([], DomainError), ([(0.0, 0.0, 0.0)], RequiresPositiveEps),
                                           ([(0.1, 0.0, 0.0), (0.2, 0.0, 0.0)], DomainError),
                                           ([(0.1, 0.0)], DomainError), ([(0.1, -1.0, 0.0)], DomainError)])
    def test_schedule_validation(self, sched, err):
        with pytest.raises(err):
            validate_schedule(sched)

    def test_report_round_trip_and_trace(self, tmp_path, rng):
        g, f = noisy_arc(rng, 12)
        _, reps = continuation(S2, g, f, 4.0, default_schedule(g, n_stages=3))
        for r in reps:
            assert SolveReport.from_json(r.to_json()).to_json() == r.to_json()
        write_trace_csv(tmp_path / "t.csv", reps)
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == ",".join(TRACE_HEADER)
        assert len(lines) == 1 + sum(len(r.energy_trace) for r in reps)
        assert [int(line.split(",")[0]) for line in lines[1:]] == list(range(len(lines) - 1))
