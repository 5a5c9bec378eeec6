# tests/test_expert.py
"""
Tests for the adaptive expert controller and demonstration generation.
"""
import statistics

import numpy as np
import pytest

from src.agents.expert_agent import (
    CLOSING,
    HOLDING,
    SQUEEZING,
    ControllerGains,
    ExpertAgent,
    ExpertConfig,
    ExpertParams,
    ExpertState,
    GenerationConfig,
    MissedObjectError,
    expert_step,
    generate_demonstrations,
    run_expert_grasp,
    target_force,
)
from src.core.catalog import evaluation_catalog
from src.core.physics import GripperObservation, SimConfig
from src.core.rng import make_rng

TOMATO_PARAMS = ExpertParams(est_mass=0.12, est_mu=0.6, est_k=0.35)


def _obs(aperture, contact, applied=0.15):
    return GripperObservation(aperture=aperture, applied_force=applied, contact_force=contact, timestamp=0.0)


class TestTargetForce:
    """Slip-safe holding force."""

    def test_formula(self):
        """margin * m * g / (2 * mu)."""
        assert target_force(TOMATO_PARAMS) == pytest.approx(1.2 * 0.12 * 9.81 / 1.2)

    def test_floor_and_cap(self):
        """Light objects get the floor; heavy slippery ones the cap."""
        assert target_force(ExpertParams(0.001, 1.0, 0.1)) == 0.15
        assert target_force(ExpertParams(0.5, 0.1, 0.1)) == 10.0

    def test_exact_estimates(self, tomato):
        """Zero noise reproduces the true parameters but still draws."""
        rng = make_rng(1, "estimate")
        reference = make_rng(1, "estimate")
        params = ExpertParams.estimate(tomato, 0.0, rng)
        assert (params.est_mass, params.est_mu, params.est_k) == (tomato.mass, tomato.friction_mu, tomato.stiffness_k)
        reference.normal(size=3)
        assert rng.random() == reference.random()


class TestExpertStep:
    """Phase machine of the controller."""

    def test_closes_before_contact(self):
        """Without contact the fingers close by one step at the initial force."""
        gains = ControllerGains()
        command, state = expert_step(_obs(50.0, 0.0), TOMATO_PARAMS, gains, ExpertState.initial(gains))
        assert command.target_aperture == pytest.approx(47.0)
        assert command.force_limit == gains.initial_force
        assert state.phase == CLOSING

    def test_contact_starts_squeeze(self):
        """Sensed contact raises the force limit proportionally."""
        gains = ControllerGains()
        goal = target_force(TOMATO_PARAMS)
        command, state = expert_step(_obs(40.0, 0.2), TOMATO_PARAMS, gains, ExpertState.initial(gains))
        assert state.phase == SQUEEZING
        assert command.force_limit == pytest.approx(0.15 + 0.5 * (goal - 0.2))

    def test_minimum_increment(self):
        """Near the goal the force still rises by the torque-limit quantum."""
        gains = ControllerGains()
        goal = target_force(TOMATO_PARAMS)
        state = ExpertState(phase=SQUEEZING, force_limit=goal - 0.01, last_target=35.0)
        command, _ = expert_step(_obs(38.0, goal - 0.01), TOMATO_PARAMS, gains, state)
        assert command.force_limit == pytest.approx(goal - 0.01 + gains.min_force_step)

    def test_no_increment_while_travelling(self):
        """The force holds while the fingers reach their target."""
        gains = ControllerGains()
        state = ExpertState(phase=SQUEEZING, force_limit=0.5, last_target=40.0)
        command, _ = expert_step(_obs(40.0, 0.4), TOMATO_PARAMS, gains, state)
        assert command.force_limit == 0.5

    def test_holds_at_goal(self):
        """Reaching the goal switches to holding with an unchanged force."""
        gains = ControllerGains()
        state = ExpertState(phase=SQUEEZING, force_limit=1.3, last_target=35.0)
        command, state = expert_step(_obs(38.0, 1.25), TOMATO_PARAMS, gains, state)
        assert state.phase == HOLDING
        assert command.force_limit == 1.3
        command, state = expert_step(_obs(38.0, 1.25), TOMATO_PARAMS, gains, state)
        assert state.phase == HOLDING
        assert command.force_limit == 1.3

    def test_stall_counts_as_contact(self):
        """Fingers held off their target declare contact below the threshold."""
        gains = ControllerGains()
        state = ExpertState(phase=CLOSING, force_limit=0.15, last_target=40.0)
        _, state = expert_step(_obs(41.0, 0.1), TOMATO_PARAMS, gains, state)
        assert state.phase == SQUEEZING

    def test_missed_object(self):
        """Closing fully without contact raises."""
        gains = ControllerGains()
        with pytest.raises(MissedObjectError):
            expert_step(_obs(0.0, 0.0), TOMATO_PARAMS, gains, ExpertState.initial(gains))

    def test_threshold_above_noise_floor(self):
        """A contact threshold inside the noise floor is rejected."""
        with pytest.raises(ValueError, match="noise"):
            ControllerGains(contact_threshold=0.05).check_noise_floor(SimConfig(sensor_noise_std=0.1))


class TestExpertGrasp:
    """Closed-loop expert grasps."""

    def test_tomato(self, sim_cfg, tomato):
        """Exact estimates and clean sensing hold the tomato quickly."""
        rollout = run_expert_grasp(tomato, TOMATO_PARAMS, ControllerGains(), sim_cfg, make_rng(0), 60.0)
        assert rollout.succeeded
        assert rollout.grasp_ticks < 12
        assert rollout.commands[-1].force_limit >= target_force(TOMATO_PARAMS)

    def test_raspberry_floor(self, sim_cfg, raspberry):
        """A light berry is held at the force floor without damage."""
        params = ExpertParams(raspberry.mass, raspberry.friction_mu, raspberry.stiffness_k)
        rollout = run_expert_grasp(raspberry, params, ControllerGains(), sim_cfg, make_rng(0), 27.0)
        assert rollout.succeeded
        assert rollout.commands[-1].force_limit < raspberry.yield_force

    def test_agent_interface(self, tomato):
        """The agent needs estimates and holds on missing observations."""
        agent = ExpertAgent()
        agent.reset("grasp the tomato")
        with pytest.raises(RuntimeError):
            agent.act(_obs(50.0, 0.0))
        agent.estimate_object(tomato, make_rng(0))
        assert agent.act(None) is None
        command = agent.act(_obs(50.0, 0.0))
        assert command.target_aperture == pytest.approx(47.0)
        assert agent.variant == "expert"

    def test_agent_holds_when_nothing_to_grasp(self, tomato):
        """A fully closed empty gripper stays put instead of failing."""
        agent = ExpertAgent()
        agent.reset()
        agent.estimate_object(tomato, make_rng(0))
        command = agent.act(_obs(0.0, 0.0))
        assert command.target_aperture == 0.0


class TestControllerInvariants:
    """Properties that hold across the evaluation objects."""

    @pytest.mark.parametrize("spec", evaluation_catalog(), ids=lambda s: s.name)
    def test_force_never_decreases(self, spec):
        """Commanded force limits only rise, even with noisy estimates and sensing."""
        for rep in range(3):
            rng = make_rng(4, "monotone", spec.name, rep)
            params = ExpertParams.estimate(spec, 0.2, rng)
            rollout = run_expert_grasp(spec, params, ControllerGains(), SimConfig(), rng, spec.rest_width + 5.0)
            forces = [c.force_limit for c in rollout.commands]
            assert all(b >= a for a, b in zip(forces, forces[1:]))

    @pytest.mark.parametrize("spec", evaluation_catalog(), ids=lambda s: s.name)
    def test_final_contact_within_overshoot_band(self, sim_cfg, spec):
        """Exact estimates and clean sensing end between the target and (1 + kp) times it."""
        gains = ControllerGains()
        params = ExpertParams(spec.mass, spec.friction_mu, spec.stiffness_k)
        goal = target_force(params, gains=gains)
        rollout = run_expert_grasp(spec, params, gains, sim_cfg, make_rng(0), spec.rest_width + 5.0)
        assert rollout.succeeded
        contact = rollout.outcome.final_true_contact
        assert goal - 1e-9 <= contact <= goal * (1.0 + gains.kp_force) + 1e-9

    def test_success_rate_with_default_sensing(self):
        """Exact estimates under default sensor noise hold at least 95% of grasps."""
        cfg = SimConfig()
        gains = ControllerGains()
        outcomes = []
        for spec in evaluation_catalog():
            for rep in range(5):
                rng = make_rng(9, "sensing", spec.name, rep)
                params = ExpertParams.estimate(spec, 0.0, rng)
                start = spec.rest_width + float(rng.uniform(2.0, 8.0))
                outcomes.append(run_expert_grasp(spec, params, gains, cfg, rng, start).succeeded)
        assert len(outcomes) == 50
        assert sum(outcomes) / len(outcomes) >= 0.95


class TestDemonstrations:
    """Corpus generation."""

    def test_manifest_counts(self, small_corpus):
        """Every feasible object gets 3-4 attempts; kept episodes are tallied."""
        catalog, episodes, manifest = small_corpus
        assert len(manifest.objects) == len(catalog)
        for record in manifest.objects:
            if not record["infeasible"]:
                assert 3 <= record["attempted"] <= 4
                assert record["kept"] + record["failed"] + record["surplus"] == record["attempted"]
        assert manifest.episodes == len(episodes) == sum(r["kept"] for r in manifest.objects)

    def test_keep_quota(self, tomato):
        """Successes past the per-object quota are counted as surplus, not kept."""
        gen = GenerationConfig(n_objects=1, per_object_min=7, per_object_max=7)
        exact = ExpertConfig(param_noise_std=0.0)
        episodes, manifest = generate_demonstrations([tomato], SimConfig(), seed=3, expert_cfg=exact, gen=gen)
        (record,) = manifest.objects
        assert record["attempted"] == 7
        assert 4 <= record["kept"] <= 5
        assert record["kept"] == len(episodes)
        assert record["kept"] + record["failed"] + record["surplus"] == 7

    def test_quota_bounds_checked(self):
        """An inverted keep range is rejected."""
        with pytest.raises(ValueError, match="keep_per_object"):
            GenerationConfig(keep_per_object_min=5, keep_per_object_max=4)

    def test_episode_structure(self, small_corpus):
        """Episodes run approach, grasp, home and end in a success."""
        _, episodes, _ = small_corpus
        assert episodes
        for episode in episodes:
            subtasks = [s.subtask for s in episode.steps]
            assert subtasks[:2] == ["approach", "approach"]
            assert subtasks[-2:] == ["home", "home"]
            assert "grasp" in subtasks
            assert episode.steps[0].is_first and episode.steps[-1].is_last
            assert episode.steps[-1].reward == 1.0

    def test_deterministic(self, small_corpus):
        """The same seed regenerates the same corpus."""
        catalog, episodes, _ = small_corpus
        again, _ = generate_demonstrations(
            catalog, SimConfig(), seed=11, gen=GenerationConfig(n_objects=6, per_object_min=3, per_object_max=4)
        )
        assert again == episodes

    def test_infeasible_object_skipped(self):
        """Objects that crush below their holding force are skipped."""
        from src.core.physics import ObjectSpec
        fragile = ObjectSpec("wet tissue parcel", rest_width=30.0, mass=0.4, friction_mu=0.3, stiffness_k=0.2,
                             crush_force=1.0, yield_force=0.5, plasticity=0.2)
        episodes, manifest = generate_demonstrations([fragile], SimConfig(), seed=0)
        assert episodes == []
        assert manifest.skip_rate == 1.0

    def test_empty_catalog(self):
        """An empty catalog is rejected."""
        with pytest.raises(ValueError):
            generate_demonstrations([], SimConfig(), seed=0)

    @pytest.mark.slow
    def test_default_corpus_size(self):
        """Thirty objects with default settings give roughly 130 episodes."""
        from src.core.catalog import sample_object_catalog
        catalog = sample_object_catalog(30, make_rng(0, "catalog"))
        episodes, manifest = generate_demonstrations(catalog, SimConfig(), seed=0)
        assert 100 <= len(episodes) <= 150
        assert all(r["kept"] <= 5 for r in manifest.objects)
        feasible = [r for r in manifest.objects if not r["infeasible"]]
        assert all(5 <= r["attempted"] <= 7 for r in feasible)

    @pytest.mark.slow
    def test_expert_baseline(self):
        """At least 95% success and a median under 10 ticks over 200+ grasps."""
        from src.core.catalog import sample_object_catalog
        from src.core.physics import is_feasible

        cfg = SimConfig()
        gains = ControllerGains()
        catalog = [s for s in sample_object_catalog(30, make_rng(0, "catalog")) if is_feasible(s, cfg)]
        successes, ticks, total = 0, [], 0
        for spec in catalog:
            for rep in range(8):
                rng = make_rng(0, "baseline", spec.name, rep)
                params = ExpertParams.estimate(spec, 0.0, rng)
                start = spec.rest_width + float(rng.uniform(2.0, 8.0))
                rollout = run_expert_grasp(spec, params, gains, cfg, rng, start)
                total += 1
                if rollout.succeeded:
                    successes += 1
                    ticks.append(rollout.grasp_ticks)
        assert total >= 200
        assert successes / total >= 0.95
        assert statistics.median(ticks) < 10
