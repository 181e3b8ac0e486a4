"""
Lane-change scenario: ellipses, level sets, reaction delay, mode machine, SA.
"""
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from raresim.scenario import (EL, ER_AWARE, ER_CHANGING, ER_PHASE, ER_REVERTING, ETA, SA,
                              STRAIGHT, EL_CHANGING, DrivingMode, EllipseFamily,
                              LaneChangeScenario, ModeMachineError, Phase, SaVector,
                              ScenarioState, build_scenario_model, copy_sa, delay_rate,
                              ellipses_intersect, level_predicate, step_discrete)
from core.streams import Purpose
from core.types import HybridState
from raresim.shs import execute_until, initial_population
from raresim.splitting import monte_carlo_hits
from raresim.toy_models import never
from raresim.ttc import ConflictKind, TtcKind, TtcOutcome
from raresim.vehicle import VehicleParams, VehicleState


def _state(er=(0.0, 0.0), el=(0.0, 7.0), er_mode=STRAIGHT, el_mode=STRAIGHT, aware=False,
           pending=True, clock=0.0, el_heading=0.0, el_v_lat=0.0, est_mode=None):
    sa = SaVector(x=el[0], y=el[1], heading=el_heading, v_lat=el_v_lat, timer=0.0,
                  est_mode=est_mode or el_mode)
    return ScenarioState(er=VehicleState(*er), el=VehicleState(*el, el_heading, el_v_lat),
                         sa=sa, er_mode=er_mode, el_mode=el_mode, aware=aware,
                         er_pending=pending, el_pending=pending, clock=clock)


def _with(cfg, **scenario):
    return replace(cfg, scenario=replace(cfg.scenario, **scenario))


class TestEllipses:
    def test_coincident(self):
        assert ellipses_intersect((0.0, 0.0), (0.0, 0.0), 2.0, 1.0)

    def test_tangent_counts(self):
        assert ellipses_intersect((0.0, 0.0), (4.0, 0.0), 2.0, 1.0)

    def test_just_apart(self):
        assert not ellipses_intersect((0.0, 0.0), (4.002, 0.0), 2.0, 1.0)

    def test_vectorised(self):
        c1 = np.zeros((3, 2))
        c2 = np.array([[0.0, 1.0], [0.0, 2.0], [0.0, 2.1]])
        assert ellipses_intersect(c1, c2, 2.0, 1.0).tolist() == [True, True, False]

    def test_family_from_footprint(self):
        fam = EllipseFamily.from_params(VehicleParams(), (2.0, 1.0))
        assert fam.rx == pytest.approx(math.sqrt(2) / 2 * 4.508)
        assert fam.radii(2.0) == pytest.approx((2 * fam.rx, 2 * fam.ry))


class TestLevels:
    def test_six_nested_levels(self, scenario):
        schedule = scenario.level_schedule(10.0)
        assert len(schedule) == 6
        rng = np.random.default_rng(0)
        cont = np.zeros((2000, 15))
        cont[:, EL.start] = rng.uniform(-20, 20, 2000)
        cont[:, EL.start + 1] = rng.uniform(-8, 8, 2000)
        mode = np.zeros((2000, 11), dtype=np.int64)
        schedule.verify_nesting(mode, cont)

    def test_hit_lies_in_every_level(self, scenario):
        mode = np.zeros((1, 11), dtype=np.int64)
        mode[0, ER_PHASE] = Phase.HIT
        cont = np.zeros((1, 15))
        cont[0, EL.start + 1] = 50.0
        for k in range(1, 7):
            assert level_predicate(k, scenario.family)(mode, cont)[0]

    def test_level_index_checked(self, scenario):
        with pytest.raises(ValueError):
            level_predicate(7, scenario.family)

    def test_start_outside_first_level(self, cfg):
        model, scenario = build_scenario_model(cfg)
        assert scenario.level_schedule(10.0).initial_hits(model, 1, 10) == 0

    @pytest.mark.parametrize("ratio", [0.0, 1.5825])
    def test_reachable_states_are_nested(self, cfg, ratio):
        model, scenario = build_scenario_model(cfg, awareness_ratio=ratio)
        schedule = scenario.level_schedule(cfg.estimator.horizon)
        keys = [(i,) for i in range(50)]
        pop = initial_population(model, keys, 11, Purpose.MC_INIT)
        noise = model.noise_driver(11, Purpose.MONTE_CARLO, keys)
        snapshots = []
        for t in (4.0, 8.0, 9.0, 10.0, 11.0):
            pop = execute_until(pop, model, never, t, noise, dt=0.01)
            snapshots.append(pop.state.copy())
        states = HybridState.stack(snapshots)
        schedule.verify_nesting(states.mode, states.cont)
        if ratio == 0.0:
            assert (states.mode[:, ER_PHASE] == Phase.HIT).any()
            assert schedule.predicates[0](states.mode, states.cont).any()


class TestDelayRate:
    def test_zero_timer(self):
        assert delay_rate(0.0, ER_CHANGING, 0.6) == 0.0

    def test_other_modes_off(self):
        assert delay_rate(0.6, ER_AWARE, 0.6) == 0.0
        assert delay_rate(0.6, STRAIGHT, 0.6) == 0.0

    def test_rayleigh_hazard(self):
        mu, eta = 0.6, 0.6
        density = lambda s: s / mu ** 2 * math.exp(-s * s / (2 * mu * mu))
        tail, _ = quad(density, eta, math.inf, epsabs=1e-14, epsrel=1e-12)
        assert abs(delay_rate(eta, ER_CHANGING, mu) - density(eta) / tail) < 1e-8
        assert delay_rate(eta, ER_CHANGING, mu) == pytest.approx(0.6 / 0.36)

    def test_hazard_over_sampled_timers(self):
        mu = 0.6
        density = lambda s: s / mu ** 2 * math.exp(-s * s / (2 * mu * mu))
        for eta in np.random.default_rng(11).uniform(0.01, 3.0, 100):
            rate = delay_rate(float(eta), ER_CHANGING, mu)
            assert abs(rate - eta / mu ** 2) <= 1e-8
            tail, _ = quad(density, eta, math.inf, epsabs=0.0, epsrel=1e-10)
            assert rate == pytest.approx(density(eta) / tail, rel=1e-6)

    def test_gshs_rate_needs_awareness(self, scenario):
        state = _state(er_mode=ER_CHANGING, el_mode=EL_CHANGING, aware=True, pending=False)
        mode, cont = state.to_rows()
        cont[0, ETA] = 0.6
        assert scenario.jump_rate(mode, cont)[0] == pytest.approx(0.6 / 0.36)
        mode[0, 6] = 0
        assert scenario.jump_rate(mode, cont)[0] == 0.0


class TestStepDiscrete:
    def test_nothing_due(self, cfg):
        scenario = LaneChangeScenario.from_config(_with(cfg, er_decision_time=5.0,
                                                        el_decision_time=5.0))
        before = _state(clock=1.0)
        after = step_discrete(before, scenario)
        assert after == before

    def test_decision_starts_both_changes(self, scenario):
        after = step_discrete(_state(clock=1.0), scenario)
        assert after.er_mode == ER_CHANGING
        assert after.el_mode == EL_CHANGING
        assert not after.er_pending and not after.el_pending

    def test_decisions_due_separately(self, scenario):
        after = step_discrete(_state(), scenario)
        assert after.er_mode == ER_CHANGING
        assert after.el_mode == STRAIGHT and after.el_pending

    def test_collision_is_absorbing(self, scenario):
        after = step_discrete(_state(el=(0.0, 1.0)), scenario)
        assert after.er_mode.is_hit and after.el_mode.is_hit
        again = step_discrete(after, scenario)
        assert again.er_mode.is_hit and again.el_mode.is_hit

    def test_awareness_onset_copies_el(self, cfg):
        scenario = LaneChangeScenario.from_config(cfg, awareness_ratio=1.7375)
        before = _state(el=(1.0, 3.7), er_mode=ER_CHANGING, el_mode=EL_CHANGING, pending=False,
                        el_heading=-0.01, el_v_lat=-0.2, est_mode=STRAIGHT)
        after = step_discrete(before, scenario)
        assert after.aware
        assert (after.sa.x, after.sa.y, after.sa.heading, after.sa.v_lat) == (1.0, 3.7, -0.01, -0.2)
        assert after.sa.est_mode == EL_CHANGING
        assert after.sa.timer == 0.0
        assert after.er_mode == ER_CHANGING

    def test_aware_but_far_ttc_keeps_manoeuvre(self, scenario, monkeypatch):
        far = TtcOutcome(kind=TtcKind.FINITE, conflict=ConflictKind.ANGULAR, seconds=12.0)
        monkeypatch.setattr(scenario, "er_ttc", lambda mode, cont: far)
        before = _state(er=(0.0, 1.0), el=(30.0, 5.0), er_mode=ER_AWARE, el_mode=EL_CHANGING,
                        aware=True, pending=False)
        assert step_discrete(before, scenario).er_mode == ER_AWARE

    def test_aware_with_short_ttc_reverts(self, scenario, monkeypatch):
        near = TtcOutcome(kind=TtcKind.FINITE, conflict=ConflictKind.ANGULAR, seconds=8.0)
        monkeypatch.setattr(scenario, "er_ttc", lambda mode, cont: near)
        before = _state(er=(0.0, 1.0), el=(30.0, 5.0), er_mode=ER_AWARE, el_mode=EL_CHANGING,
                        aware=True, pending=False)
        after = step_discrete(before, scenario)
        assert after.er_mode == ER_REVERTING
        assert scenario.er_target(after.to_rows()[0])[0] == 0.0

    def test_settles_into_shared_lane(self, scenario):
        before = _state(er=(0.0, 3.49), el=(40.0, 7.0), er_mode=ER_CHANGING, pending=False)
        after = step_discrete(before, scenario)
        assert after.er_mode == STRAIGHT
        assert after.er_lane == 1

    def test_corrupt_mode_detected(self, scenario):
        mode, cont = _state().to_rows()
        mode[0, ER_PHASE], mode[0, 1] = Phase.AWARE, 1
        with pytest.raises(ModeMachineError):
            scenario.reset(mode, cont, np.empty((1, 0)))

    def test_er_ttc_runs_on_real_state(self, scenario):
        state = _state(er=(0.0, 1.5), el=(0.0, 5.5), er_mode=ER_AWARE, el_mode=EL_CHANGING,
                       aware=True, pending=False, el_heading=-0.02, el_v_lat=-0.1)
        out = scenario.er_ttc(*(a[0] for a in state.to_rows()))
        assert out.kind in (TtcKind.FINITE, TtcKind.NO_COLLISION)


class TestSituationalAwareness:
    def test_copy_requires_awareness(self):
        with pytest.raises(ValueError):
            copy_sa(_state())

    def test_copy_matches_el(self):
        sa = copy_sa(_state(el=(2.0, 6.0), el_mode=EL_CHANGING, aware=True, el_heading=-0.05,
                            el_v_lat=0.3))
        assert (sa.x, sa.y, sa.heading, sa.v_lat) == (2.0, 6.0, -0.05, 0.3)
        assert sa.est_mode == EL_CHANGING

    def test_estimate_follows_el_drift(self, scenario):
        mode, cont = _state(el=(10.0, 7.0), er_mode=ER_CHANGING, aware=True,
                            pending=False).to_rows()
        d = scenario.drift(mode, cont)
        assert d[0, SA.start] == pytest.approx(20.0)
        assert d[0, SA.start + 1] == pytest.approx(0.0)
        assert d[0, ETA] == 1.0

    def test_estimate_has_no_noise(self, scenario):
        mode, cont = _state().to_rows()
        g = scenario.diffusion(mode, cont)
        assert np.all(g[SA.start:ETA + 1] == 0.0)
        assert np.all(g[EL.start:EL.start + 2, 1] == 1e-2)

    def test_hit_freezes_motion(self, scenario):
        mode, cont = _state().to_rows()
        mode[0, ER_PHASE] = mode[0, 2] = Phase.HIT
        assert np.all(scenario.drift(mode, cont) == 0.0)
        assert np.all(scenario.diffusion(mode, cont) == 0.0)


class TestScenarioModel:
    def test_initial_rows(self, scenario):
        mode, cont = scenario.initial_rows(3)
        state = ScenarioState.from_rows(mode[0], cont[0])
        assert state.er_mode == ER_CHANGING
        # EL decides later than ER
        assert state.el_mode == STRAIGHT and state.el_pending
        assert (state.el.x, state.el.y) == (5.0, 7.0)
        assert not state.aware

    def test_without_awareness_vehicles_collide(self, cfg):
        model, scenario = build_scenario_model(cfg, awareness_ratio=0.0)
        terminal = level_predicate(6, scenario.family)
        hits = monte_carlo_hits(model, terminal, cfg.estimator.horizon, 200, 3, dt=0.01)
        assert hits >= 100

    def test_driving_mode_is_value(self):
        assert DrivingMode(Phase.CHANGING, 2) == ER_CHANGING
