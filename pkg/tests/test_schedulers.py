"""Tests for schedulers module."""

import logging

import numpy as np
import pytest

from src.beta_stats import beta_quantile, fit_beta_mom, is_extreme
from src.core import ObservationSeries, StudyDesign, available_workers, parallel_map
from src.design import optimal_alpha
from src.errors import DesignError, SeriesError
from src.evaluate import split_trigger_sides
from src.schedulers import (
    SchedulerState, StaticScheduler, RandomScheduler, FixedChartScheduler, AdaptiveChartScheduler,
    create_scheduler, estimate_adherence_rate, estimate_final_samples, mean_present_count,
    subject_seed, run_control_chart_fixed, run_control_chart_adaptive, run_random, run_static
)
from src.simulate import SimConfig, generate_cohort


def adaptive_alpha(series, t, design):
    rate = estimate_adherence_rate(series, t, design)
    return optimal_alpha(estimate_final_samples(rate, design.total_slots), design.start_point, design.target_triggers)


class TestSchedulerState:
    """Tests for SchedulerState."""

    def test_capped_adherence(self):
        state = SchedulerState(adherence_seen={1: 8, 2: 3})
        assert state.capped_adherence(6) == 9
        assert state.capped_adherence(10) == 11


class TestStaticScheduler:
    """Tests for the static threshold policy."""

    def test_triggers_outside_thresholds(self, small_design):
        """Test threshold rule.

        Verifies that only values strictly outside [0.15, 0.85] from S* on
        trigger, and that missing slots never do.
        """
        series = ObservationSeries("s", (0.05, 0.10, 0.5, None, 0.85, 0.9), slots_per_day=3)
        log = run_static(series, small_design)
        assert [d.triggered for d in log.decisions] == [False, True, False, False, False, True]
        assert all(d.alpha is None for d in log.decisions)

    def test_cap(self):
        design = StudyDesign(trigger_cap=3)
        series = ObservationSeries("s", (0.95,) * 180)
        assert run_static(series, design).total == 3

    def test_cap_disabled(self):
        """Test stopping rule switched off.

        Verifies that without a cap every slot from S* on triggers on an
        all-extreme series.
        """
        series = ObservationSeries("s", (0.95,) * 180)
        assert run_static(series, StudyDesign(trigger_cap=None)).total == 175
        assert run_static(series, StudyDesign(static_uses_cap=False)).total == 175

    def test_without_start_point(self):
        series = ObservationSeries("s", (0.95,) * 180)
        design = StudyDesign(trigger_cap=None, static_uses_start_point=False)
        log = run_static(series, design)
        assert log.total == 180
        assert log.decisions[0].triggered


class TestRandomScheduler:
    """Tests for the shift-forward random policy."""

    def test_selection_within_window(self, design):
        scheduler = RandomScheduler(design, seed=1)
        assert len(scheduler.selected) == 10
        assert min(scheduler.selected) >= design.start_point
        assert max(scheduler.selected) <= design.total_slots

    def test_full_window(self):
        design = StudyDesign(random_full_window=True, random_trigger_count=180)
        scheduler = RandomScheduler(design, seed=1)
        assert scheduler.selected == frozenset(range(1, 181))

    def test_full_adherence_triggers_at_selected_slots(self, design, full_series):
        """Test triggering under full adherence.

        Verifies that every preselected slot triggers in place when all
        prompts are answered.
        """
        scheduler = RandomScheduler(design, seed=5)
        log = scheduler.run(full_series())
        assert sorted(d.slot for d in log.decisions if d.triggered) == sorted(scheduler.selected)
        assert log.total == 10

    def test_shift_forward(self, small_design):
        """Test shift-forward rule.

        Verifies that selections on missing slots move to the next answered
        prompts in order.
        """
        series = ObservationSeries("s", (0.1, None, None, 0.4, 0.5, None), slots_per_day=3)
        scheduler = RandomScheduler(small_design, seed=0)
        scheduler.selected = frozenset({2, 3})
        log = scheduler.run(series)
        assert [d.slot for d in log.decisions if d.triggered] == [4, 5]

    def test_lapse_at_series_end(self, small_design):
        series = ObservationSeries("s", (0.1, None, None, 0.4, 0.5, None), slots_per_day=3)
        scheduler = RandomScheduler(small_design, seed=0)
        scheduler.selected = frozenset({5, 6})
        assert scheduler.run(series).total == 1

    def test_lapse_logs_warning(self, small_design, caplog):
        series = ObservationSeries("s", (0.1, None, None, 0.4, 0.5, None), slots_per_day=3)
        scheduler = RandomScheduler(small_design, seed=0)
        scheduler.selected = frozenset({5, 6})
        with caplog.at_level(logging.WARNING, logger="src.schedulers"):
            scheduler.run(series)
        assert [r.levelname for r in caplog.records] == ["WARNING"]
        assert "1 random triggers lapsed" in caplog.text

    def test_ignores_cap(self):
        design = StudyDesign(trigger_cap=2)
        series = ObservationSeries("s", (0.5,) * 180)
        assert run_random(series, design, seed=3).total == 10

    def test_seed_by_subject(self, design):
        """Test per-subject substreams.

        Verifies that the selection depends on the subject id and root
        seed, and is reproducible.
        """
        a = RandomScheduler(design, subject_seed(7, "a")).selected
        assert a == RandomScheduler(design, subject_seed(7, "a")).selected
        assert a != RandomScheduler(design, subject_seed(7, "b")).selected


class TestControlCharts:
    """Tests for the fixed and adaptive control charts."""

    def test_first_fit_needs_two_values(self, small_design):
        """Test skipped estimation.

        Verifies that a slot with fewer than two prior values is skipped
        without bounds, and that the next slot fits with dummy values.
        """
        series = ObservationSeries("s", (0.5, 0.5, 0.99, None, None, None), slots_per_day=3)
        log = run_control_chart_fixed(series, small_design, n_bar_prime=6)
        skipped, fitted = log.decisions[1], log.decisions[2]
        assert not skipped.triggered and not skipped.has_bounds
        assert skipped.alpha == pytest.approx(0.2)
        assert fitted.triggered and fitted.has_bounds
        assert fitted.lower < 0.5 < fitted.upper < 0.99

    def test_alpha_one_triggers_until_cap(self, small_design):
        """Test the saturated branch.

        Verifies that alpha = 1 triggers at every present slot from S* on,
        even without history, until the cap is reached.
        """
        series = ObservationSeries("s", (0.5,) * 6, slots_per_day=3)
        log = run_control_chart_fixed(series, small_design, n_bar_prime=2)
        assert [d.triggered for d in log.decisions] == [False, True, True, False, False, False]

    def test_alpha_zero_never_triggers(self, small_design):
        series = ObservationSeries("s", (0.0, 1.0, 0.0, 1.0, 0.0, 1.0), slots_per_day=3)
        log = run_control_chart_fixed(series, small_design, n_bar_prime=1)
        assert log.total == 0
        assert {d.alpha for d in log.decisions if d.alpha is not None} == {0.0}

    def test_fixed_alpha(self, design):
        scheduler = FixedChartScheduler(design, 34.2)
        assert scheduler.alpha == pytest.approx(4 / 29.2)

    def test_fixed_requires_positive_prior(self, design):
        with pytest.raises(DesignError):
            FixedChartScheduler(design, 0)

    def test_adaptive_alpha_matches_estimator(self, design, sparse_series):
        """Test adaptive significance level.

        Verifies that the level used at each present slot equals alpha*
        applied to the running adherence estimate.
        """
        series = sparse_series(3)
        log = run_control_chart_adaptive(series, design)
        for decision in log.decisions:
            if decision.alpha is not None:
                assert decision.alpha == adaptive_alpha(series, decision.slot, design)

    def test_algorithms_identical_under_full_adherence(self, design):
        """Test equivalence of the two charts.

        Verifies bit-identical trigger logs for the fixed chart with
        N'_bar = N and the adaptive chart on fully adherent subjects.
        """
        cohort = generate_cohort(SimConfig(n_subjects=100, adherence_rate=1.0, seed=21))
        for series in cohort:
            fixed = run_control_chart_fixed(series, design, n_bar_prime=design.total_slots)
            adaptive = run_control_chart_adaptive(series, design)
            assert fixed.decisions == adaptive.decisions

    def test_decision_matches_is_extreme(self, sparse_series):
        """Test the chart rule.

        Verifies that every bounded decision equals is_extreme on the fit of
        the values reported before it.
        """
        design = StudyDesign(trigger_cap=None)
        for seed in range(5):
            scheduler = AdaptiveChartScheduler(design)
            for point in sparse_series(seed).timeline:
                history = list(scheduler.state.history)
                decision = scheduler.observe(point)
                if decision.has_bounds:
                    assert decision.triggered == is_extreme(point.value, fit_beta_mom(history), decision.alpha)

    def test_wrong_series_length(self, design):
        series = ObservationSeries("s", (0.5,) * 12)
        with pytest.raises(SeriesError):
            run_control_chart_adaptive(series, design)


class TestProperties:
    """Invariants that hold for every policy."""

    @pytest.mark.parametrize("policy", ["random", "static", "alg1", "alg2"])
    def test_no_trigger_at_missing_or_early_slots(self, design, sparse_series, policy):
        """Test trigger placement.

        Verifies that no policy triggers at a missing slot or before S*.
        """
        for seed in range(10):
            series = sparse_series(seed, f"s{seed}")
            scheduler = create_scheduler(policy, design, n_bar_prime=72.0, seed=seed)
            log = scheduler.run(series)
            for point, decision in zip(series.timeline, log.decisions):
                if decision.triggered:
                    assert point.present
                    assert point.slot >= design.start_point

    @pytest.mark.parametrize("policy", ["static", "alg1", "alg2"])
    def test_cap_never_exceeded(self, sparse_series, policy):
        design = StudyDesign(trigger_cap=2, target_triggers=20)
        for seed in range(10):
            log = create_scheduler(policy, design, n_bar_prime=30.0).run(sparse_series(seed))
            assert log.total <= 2

    def test_adaptive_alpha_monotone_in_adherence(self, design):
        """Test adherence monotonicity.

        Verifies on 1000 random flips that dropping one answered prompt
        before slot t never lowers the adaptive level at t, counting only
        flips where the level lies strictly between 0 and 1 on both sides.
        """
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 1000:
            present = rng.random(design.total_slots) < rng.uniform(0.1, 0.9)
            t = int(rng.integers(design.start_point, design.total_slots + 1))
            answered = [s for s in range(1, t) if present[s - 1]]
            if not answered:
                continue
            flipped = present.copy()
            flipped[int(rng.choice(answered)) - 1] = False
            values = rng.beta(2.0, 2.0, size=design.total_slots)
            before = ObservationSeries("m", tuple(float(x) if p else None for x, p in zip(values, present)))
            after = ObservationSeries("m", tuple(float(x) if p else None for x, p in zip(values, flipped)))
            alpha_before = adaptive_alpha(before, t, design)
            alpha_after = adaptive_alpha(after, t, design)
            if not (0.0 < alpha_before < 1.0 and 0.0 < alpha_after < 1.0):
                continue
            assert alpha_after >= alpha_before
            checked += 1

    @pytest.mark.parametrize("policy", ["random", "static", "alg1", "alg2"])
    def test_deterministic(self, design, sparse_series, policy):
        series = sparse_series(4)
        first = create_scheduler(policy, design, n_bar_prime=72.0, seed=subject_seed(7, series.subject_id))
        second = create_scheduler(policy, design, n_bar_prime=72.0, seed=subject_seed(7, series.subject_id))
        assert first.run(series) == second.run(series)

    def test_rerun_resets_state(self, design, sparse_series):
        scheduler = AdaptiveChartScheduler(design)
        assert scheduler.run(sparse_series(1)) == scheduler.run(sparse_series(1))


def fixed_chart_sides(series):
    design = StudyDesign(trigger_cap=None)
    log = run_control_chart_fixed(series, design, n_bar_prime=design.total_slots)
    sides = split_trigger_sides(series, log)
    return log.total, sides["high"], sides["low"], sides["unbounded"]


class TestCalibration:
    """Trigger counts of the fixed chart under full adherence."""

    def test_known_limits_hit_target(self):
        """Test calibration with the true model.

        Verifies that limits from the true Beta parameters flag v values per
        subject on average, half on each side.
        """
        design = StudyDesign()
        alpha = optimal_alpha(design.total_slots, design.start_point, design.target_triggers)
        rng = np.random.default_rng(5)
        high, low = [], []
        for delta, xi in rng.uniform(0.5, 10.0, size=(2000, 2)):
            lower, upper = beta_quantile(alpha / 2, delta, xi), beta_quantile(1 - alpha / 2, delta, xi)
            window = rng.beta(delta, xi, size=design.total_slots - design.start_point + 1)
            high.append(int(np.sum(window > upper)))
            low.append(int(np.sum(window < lower)))
        assert np.mean(high) + np.mean(low) == pytest.approx(4.0, abs=0.2)
        assert np.mean(high) == pytest.approx(2.0, abs=0.15)
        assert np.mean(low) == pytest.approx(2.0, abs=0.15)

    def test_fixed_chart_trigger_counts(self):
        """Test calibration of the online chart.

        Verifies on 10**4 fully adherent subjects without a cap that the
        fixed chart at alpha = v / (N - S* + 1) triggers 5.2 times on
        average, about 2.6 on each side. Limits refitted on short histories
        have heavier tails than the true model, so the mean sits about 1.2
        above v.
        """
        design = StudyDesign(trigger_cap=None)
        cohort = generate_cohort(
            SimConfig(n_subjects=10_000, adherence_rate=1.0, design=design, seed=99), workers=available_workers()
        )
        counts = np.array(parallel_map(fixed_chart_sides, cohort, available_workers()))
        total, high, low, unbounded = counts.mean(axis=0)
        assert unbounded == 0.0
        assert total == pytest.approx(5.20, abs=0.1)
        assert high == pytest.approx(2.59, abs=0.08)
        assert low == pytest.approx(2.61, abs=0.08)
        assert total > design.target_triggers + 0.9


class TestFactoryAndEstimators:
    """Tests for create_scheduler and the adherence estimators."""

    def test_factory_types(self, design):
        assert isinstance(create_scheduler("static", design), StaticScheduler)
        assert isinstance(create_scheduler("alg2", design), AdaptiveChartScheduler)
        assert isinstance(create_scheduler("alg1", design, n_bar_prime=50), FixedChartScheduler)
        assert isinstance(create_scheduler("random", design, seed=1), RandomScheduler)

    @pytest.mark.parametrize("policy, kwargs", [
        ("alg1", {}),
        ("random", {}),
        ("unknown", {"seed": 1}),
    ])
    def test_factory_errors(self, design, policy, kwargs):
        with pytest.raises(DesignError):
            create_scheduler(policy, design, **kwargs)

    def test_estimate_adherence_rate(self, design):
        series = ObservationSeries("s", tuple(0.5 if i % 2 else None for i in range(180)))
        assert estimate_adherence_rate(series, 6, design) == pytest.approx(0.5)
        with pytest.raises(SeriesError):
            estimate_adherence_rate(series, 5, design)

    def test_estimate_final_samples(self):
        assert estimate_final_samples(0.19, 180) == pytest.approx(34.2)
        with pytest.raises(DesignError):
            estimate_final_samples(1.5, 180)

    def test_mean_present_count(self, design):
        cohort = [
            ObservationSeries("a", (0.5,) * 180),
            ObservationSeries("b", (0.5,) * 90 + (None,) * 90),
        ]
        assert mean_present_count(cohort, design) == pytest.approx(135.0)
        with pytest.raises(DesignError):
            mean_present_count([], design)
