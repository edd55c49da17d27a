import math
import warnings

import numpy as np
import pytest

from roachpilot.gap import (
    ALLOWED_EDGES,
    TERMINAL_STATES,
    ArrangementProfile,
    CalibrationError,
    GapError,
    NegotiationState,
    ShutterModel,
    TraversalTimeModel,
    fsm_step,
    load_calibration,
    monte_carlo,
    required_clearance,
    required_lift_force,
    run_gap_trial,
)

S = NegotiationState


def make_profile(weights, name="test", mean_s=10.0, sd_s=5.0, **kwargs):
    return ArrangementProfile(
        name=name,
        added_height_mm=kwargs.pop("added_height_mm", 0.0),
        transition_weights=weights,
        traversal_time=TraversalTimeModel(mean_s, sd_s),
        dwell_s={
            "contact": (0.5, 2.0),
            "explore": (1.0, 4.0),
            "climb": (2.0, 8.0),
            "tunnel_fail": (2.0, 8.0),
        },
        **kwargs,
    )


DIRECT_PASS = {
    (S.CONTACT, S.TUNNEL): 1.0,
    (S.TUNNEL, S.PASS): 1.0,
    (S.EXPLORE, S.TUNNEL): 1.0,
    (S.CLIMB, S.EXIT): 1.0,
}


class TestShutterMechanics:
    def test_lift_force_from_masses(self):
        # (146.5 - 96.5) g net at 9.81 m/s^2
        assert required_lift_force(ShutterModel()) == pytest.approx(0.4905, abs=1e-9)

    def test_balanced_masses(self):
        assert required_lift_force(ShutterModel(shutter_mass_g=100, counterweight_mass_g=100)) == 0.0

    def test_inverted_masses_warn(self):
        with pytest.warns(UserWarning):
            force = required_lift_force(
                ShutterModel(shutter_mass_g=96.5, counterweight_mass_g=146.5)
            )
        assert force == 0.0

    def test_clearance_intact(self):
        # compressed body 0.75 * 12 = 9 mm against an 8 mm gap
        profile = make_profile(DIRECT_PASS)
        assert required_clearance(profile, ShutterModel()) == pytest.approx(1.0)

    def test_clearance_mounted(self):
        profile = make_profile(DIRECT_PASS, added_height_mm=4.0)
        assert required_clearance(profile, ShutterModel()) == pytest.approx(5.0)

    def test_clearance_free_passage(self):
        profile = make_profile(DIRECT_PASS)
        assert required_clearance(profile, ShutterModel(gap_height_mm=20.0)) == 0.0

    def test_clearance_monotonicity(self):
        shutters = [ShutterModel(gap_height_mm=g) for g in (6.0, 8.0, 10.0, 12.0)]
        heights = (0.0, 2.0, 4.0, 8.0)
        for shutter in shutters:
            values = [
                required_clearance(make_profile(DIRECT_PASS, added_height_mm=h), shutter)
                for h in heights
            ]
            assert values == sorted(values)
        for h in heights:
            profile = make_profile(DIRECT_PASS, added_height_mm=h)
            values = [required_clearance(profile, s) for s in shutters]
            assert values == sorted(values, reverse=True)


class TestFsmStep:
    def test_degenerate_weights(self):
        profile = make_profile(DIRECT_PASS)
        rng = np.random.default_rng(0)
        assert all(fsm_step(S.TUNNEL, profile, rng) == S.PASS for _ in range(100))

    def test_terminal_state_is_usage_error(self):
        profile = make_profile(DIRECT_PASS)
        with pytest.raises(GapError):
            fsm_step(S.PASS, profile, np.random.default_rng(0))

    def test_implanted_calibrated_weights(self):
        profiles = load_calibration()
        implanted = profiles["implanted"]
        assert implanted.transition_weights[(S.CONTACT, S.TUNNEL)] == pytest.approx(37 / 41)
        assert implanted.transition_weights[(S.TUNNEL, S.PASS)] == pytest.approx(0.90)

    def test_sampled_frequencies_match_weights(self):
        profiles = load_calibration()
        intact = profiles["intact"]
        rng = np.random.default_rng(1)
        n = 20_000
        hits = sum(fsm_step(S.CONTACT, intact, rng) == S.TUNNEL for _ in range(n))
        p = 75 / 82
        assert abs(hits / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


class TestRunGapTrial:
    def test_direct_path(self):
        outcome = run_gap_trial(make_profile(DIRECT_PASS), seed=4)
        assert outcome.state_path == (S.CONTACT, S.TUNNEL, S.PASS)
        assert outcome.terminal == S.PASS
        assert outcome.traversal_time_s is not None

    def test_paths_start_contact_end_terminal_once(self):
        profiles = load_calibration()
        for i in range(300):
            outcome = run_gap_trial(profiles["mounted"], seed=np.random.SeedSequence((5, i)))
            path = outcome.state_path
            assert path[0] == S.CONTACT
            assert path[-1] in TERMINAL_STATES
            assert all(s not in TERMINAL_STATES for s in path[:-1])
            for a, b in zip(path, path[1:]):
                assert b in ALLOWED_EDGES[a] or b == S.STUCK  # cap conversion allowed

    def test_time_cap_converts_endless_tunnelling_to_stuck(self):
        # ping-pongs between tunnel and explore until the 60 s budget runs out
        loop = {
            (S.CONTACT, S.TUNNEL): 1.0,
            (S.TUNNEL, S.EXPLORE): 1.0,
            (S.EXPLORE, S.TUNNEL): 1.0,
            (S.CLIMB, S.EXIT): 1.0,
        }
        outcome = run_gap_trial(make_profile(loop), seed=0)
        assert outcome.terminal == S.STUCK
        assert outcome.elapsed_s <= 60.0
        assert outcome.traversal_time_s is None

    def test_deterministic_per_seed(self):
        profiles = load_calibration()
        a = run_gap_trial(profiles["intact"], seed=12)
        b = run_gap_trial(profiles["intact"], seed=12)
        assert a == b


@pytest.fixture(scope="module")
def summaries():
    profiles = load_calibration()
    return {name: monte_carlo(profiles[name], n=10_000, seed=99)[0] for name in profiles}


class TestMonteCarlo:
    def test_single_trial_histogram(self):
        profiles = load_calibration()
        summary, outcomes = monte_carlo(profiles["intact"], n=1, seed=0)
        assert summary.n_trials == 1
        assert sum(summary.terminal_counts.values()) == 1
        assert len(outcomes) == 1

    def test_intact_success_within_3_sigma(self, summaries):
        s = summaries["intact"]
        p = 74 / 77
        sigma = math.sqrt(p * (1 - p) / s.tunnel_attempts)
        assert abs(s.tunnel_success_rate - p) <= 3 * sigma

    def test_implanted_success_and_no_returns(self, summaries):
        s = summaries["implanted"]
        sigma = math.sqrt(0.9 * 0.1 / s.tunnel_attempts)
        assert abs(s.tunnel_success_rate - 0.90) <= 3 * sigma
        assert s.terminal_counts["return"] == 0

    def test_mounted_below_both_with_separated_ci99(self, summaries):
        lo_i, _ = summaries["intact"].success_rate_ci99()
        lo_p, _ = summaries["implanted"].success_rate_ci99()
        _, hi_m = summaries["mounted"].success_rate_ci99()
        assert summaries["mounted"].tunnel_success_rate < summaries["intact"].tunnel_success_rate
        assert summaries["mounted"].tunnel_success_rate < summaries["implanted"].tunnel_success_rate
        assert hi_m < lo_i and hi_m < lo_p

    @pytest.mark.parametrize(
        "name,target", [("intact", 11.77), ("mounted", 20.60), ("implanted", 8.81)]
    )
    def test_traversal_means(self, summaries, name, target):
        stats = summaries[name].traversal_stats()
        assert abs(stats["mean_s"] - target) <= 1.5

    def test_contact_tunnel_fraction_intact(self, summaries):
        s = summaries["intact"]
        contact_tunnel = s.edge_counts.get("contact->tunnel", 0)
        contact_total = sum(
            c for e, c in s.edge_counts.items() if e.startswith("contact->")
        )
        p = 75 / 82
        sigma = math.sqrt(p * (1 - p) / contact_total)
        assert abs(contact_tunnel / contact_total - p) <= 3 * sigma

    def test_order_independent_of_execution(self):
        profiles = load_calibration()
        a, _ = monte_carlo(profiles["implanted"], n=50, seed=7)
        # re-running individual trials reproduces the aggregate draws
        single = run_gap_trial(profiles["implanted"], seed=np.random.SeedSequence((7, 25)))
        _, outcomes = monte_carlo(profiles["implanted"], n=50, seed=7)
        assert outcomes[25] == single

    def test_se_definition(self, summaries):
        stats = summaries["intact"].traversal_stats()
        assert stats["se_s"] == pytest.approx(stats["sd_s"] / math.sqrt(stats["n"]), rel=1e-12)


class TestCalibrationFile:
    def test_profiles_present_and_valid(self):
        profiles = load_calibration()
        assert set(profiles) == {"intact", "mounted", "implanted"}
        assert profiles["mounted"].added_height_mm == 4.0
        assert profiles["intact"].body_height_mm == 12.0

    def test_weights_normalized(self):
        for profile in load_calibration().values():
            for src in ALLOWED_EDGES:
                total = sum(
                    w for (s, _), w in profile.transition_weights.items() if s == src
                )
                assert total == pytest.approx(1.0, abs=1e-9)

    def test_rejects_bad_edges(self):
        with pytest.raises(CalibrationError):
            make_profile({**DIRECT_PASS, (S.CONTACT, S.EXIT): 0.0})

    def test_rejects_unnormalized(self):
        bad = dict(DIRECT_PASS)
        bad[(S.CONTACT, S.TUNNEL)] = 0.9
        with pytest.raises(CalibrationError):
            make_profile(bad)

    def test_rejects_unknown_keys(self, tmp_path):
        path = tmp_path / "cal.yaml"
        path.write_text("profiles: {}\nextra_key: 1\n")
        with pytest.raises(CalibrationError):
            load_calibration(path)

    def test_custom_file_round_trip(self, tmp_path):
        path = tmp_path / "cal.yaml"
        path.write_text(
            """
profiles:
  custom:
    added_height_mm: 2.0
    transitions:
      contact: {tunnel: 1.0}
      tunnel: {pass: 0.5, stuck: 0.5}
      explore: {tunnel: 1.0}
      climb: {exit: 1.0}
    traversal_time: {family: gamma, mean_s: 5.0, sd_s: 2.0}
    dwell_s:
      contact: [0.5, 1.0]
      explore: [1.0, 2.0]
      climb: [1.0, 2.0]
      tunnel_fail: [1.0, 2.0]
"""
        )
        profiles = load_calibration(path)
        assert profiles["custom"].added_height_mm == 2.0
        summary, _ = monte_carlo(profiles["custom"], n=200, seed=1)
        assert 0.3 < summary.tunnel_success_rate < 0.7
