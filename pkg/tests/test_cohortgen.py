"""Synthetic cohort: determinism, structure, identity and label signals."""

import numpy as np
import pytest

from tsalign.cohortgen import (
    GA_SAMPLE_HIGH,
    GA_SAMPLE_LOW,
    PatientProfile,
    generate_cohort,
    generate_profiles,
    synthesize_patch,
)
from tsalign.datamodel import Domain, RunConfig
from tsalign.errors import ConfigurationError


def small_config(**kw):
    base = dict(n_patients=6, patches_per_patient=3, patch_days=7)
    base.update(kw)
    return RunConfig(**base)


def profile(**kw):
    base = dict(patient_id="p000", ga_weeks=33, circadian_phase=8.0,
                diurnal_ratio=1.0, night_floor=0.35, activity_baseline=150.0,
                weekly_pattern=(1.0,) * 7, day_jitter=0.0, noise_frac=0.0,
                trend_frac=0.0)
    base.update(kw)
    return PatientProfile(**base)


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------

def test_profiles_deterministic_and_distinct():
    config = small_config()
    a = generate_profiles(6, config, seed=5)
    b = generate_profiles(6, config, seed=5)
    assert a == b
    c = generate_profiles(6, config, seed=6)
    assert a != c
    assert len({p.patient_id for p in a}) == 6
    # Identity cues differ between patients.
    assert len({p.activity_baseline for p in a}) == 6
    assert len({p.circadian_phase for p in a}) == 6


def test_profile_ga_within_sampling_window():
    profiles = generate_profiles(40, small_config(), seed=1)
    for p in profiles:
        assert GA_SAMPLE_LOW <= p.ga_weeks <= GA_SAMPLE_HIGH


def test_profile_ga_respects_narrow_bin_range():
    config = small_config(bin_min=30, n_bins=5)  # weeks 30..34
    profiles = generate_profiles(20, config, seed=2)
    for p in profiles:
        assert 30 <= p.ga_weeks <= 34


def test_profile_generation_needs_room_for_ga():
    with pytest.raises(ConfigurationError):
        generate_profiles(4, small_config(bin_min=50, n_bins=3), seed=0)
    with pytest.raises(ConfigurationError):
        generate_profiles(1, small_config(), seed=0)


def test_profile_validation():
    with pytest.raises(ConfigurationError):
        profile(activity_baseline=0.0)
    with pytest.raises(ConfigurationError):
        profile(night_floor=1.5)
    with pytest.raises(ConfigurationError):
        profile(weekly_pattern=(1.0,) * 6)
    with pytest.raises(ConfigurationError):
        profile(day_jitter=1.0)


def test_diurnal_contrast_grows_with_ga():
    # The label signal: averaged over patients, later GA means a higher
    # day-bump-to-baseline ratio.
    profiles = generate_profiles(200, small_config(), seed=3)
    weeks = np.array([p.ga_weeks for p in profiles], dtype=float)
    ratios = np.array([p.diurnal_ratio for p in profiles])
    r = np.corrcoef(weeks, ratios)[0, 1]
    assert r > 0.8


# ---------------------------------------------------------------------------
# Patch synthesis
# ---------------------------------------------------------------------------

def test_patch_clean_profile_closed_form():
    # No jitter, no noise, flat week: the signal is exactly
    # baseline * (floor + ratio * bump(t)).
    p = profile()
    patch = synthesize_patch(p, start_day=0, length=1440, seed=0)
    minutes = np.arange(1440.0)
    bump = np.maximum(0.0, np.sin(2 * np.pi * (minutes / 60.0 - 8.0) / 24.0))
    expected = 150.0 * (0.35 + bump)
    assert np.allclose(patch.values, expected, rtol=1e-6)


def test_patch_metadata():
    patch = synthesize_patch(profile(), start_day=14, length=720, seed=1)
    assert patch.patch_id == "p000-d014"
    assert patch.patient_id == "p000"
    assert patch.domain is Domain.SOURCE
    assert patch.ga_weeks == 33
    assert patch.patch_start_day == 14
    assert len(patch) == 720


def test_patch_phase_continuous_across_patches():
    # Two consecutive noiseless days must line up on the circadian clock:
    # the first minutes of day 1 continue the sine where day 0 left it.
    p = profile()
    two_days = synthesize_patch(p, start_day=0, length=2880, seed=0)
    day1 = synthesize_patch(p, start_day=1, length=1440, seed=0)
    assert np.allclose(two_days.values[1440:], day1.values, rtol=1e-6)


def test_patch_weekly_pattern_modulates_days():
    weekly = (1.0, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0)
    p = profile(weekly_pattern=weekly, circadian_phase=0.0)
    patch = synthesize_patch(p, start_day=0, length=7 * 1440, seed=0)
    days = patch.values.reshape(7, 1440)
    # Day 1 has the same shape as day 0 but a half-height bump.
    bump0 = days[0] - 150.0 * 0.35
    bump1 = days[1] - 150.0 * 0.35
    # Values are stored in float32, so allow for rounding of the large floor.
    assert np.allclose(bump1, 0.5 * bump0, atol=1e-4)


def test_patch_noise_reproducible_and_order_free():
    p = profile(noise_frac=0.05, day_jitter=0.1)
    a = synthesize_patch(p, start_day=7, length=1440, seed=3)
    b = synthesize_patch(p, start_day=7, length=1440, seed=3)
    assert np.array_equal(a.values, b.values)
    # A different start day draws an independent stream.
    c = synthesize_patch(p, start_day=14, length=1440, seed=3)
    assert not np.array_equal(a.values, c.values)


def test_patch_values_non_negative_under_heavy_noise():
    p = profile(noise_frac=0.8)
    patch = synthesize_patch(p, start_day=0, length=1440, seed=5)
    assert np.all(patch.values >= 0.0)


def test_patch_rejects_bad_length():
    with pytest.raises(ConfigurationError):
        synthesize_patch(profile(), start_day=0, length=0, seed=0)


# ---------------------------------------------------------------------------
# Cohort assembly
# ---------------------------------------------------------------------------

def test_cohort_shape_and_determinism():
    config = small_config()
    patches = generate_cohort(6, 3, config, seed=11)
    assert len(patches) == 18
    assert all(len(p) == config.patch_length for p in patches)
    again = generate_cohort(6, 3, config, seed=11)
    for x, y in zip(patches, again):
        assert x.patch_id == y.patch_id
        assert np.array_equal(x.values, y.values)


def test_cohort_patches_one_week_apart():
    patches = generate_cohort(2, 4, small_config(), seed=0)
    days = [p.patch_start_day for p in patches if p.patient_id == "p000"]
    assert days == [0, 7, 14, 21]


def test_cohort_label_constant_within_patient():
    patches = generate_cohort(5, 4, small_config(), seed=7)
    by_patient = {}
    for p in patches:
        by_patient.setdefault(p.patient_id, set()).add(p.ga_weeks)
    assert all(len(weeks) == 1 for weeks in by_patient.values())


def test_cohort_day_night_contrast_present():
    # Physiological sanity: on average the top activity hours dwarf the
    # bottom hours, otherwise there is no circadian signal to encode.
    patches = generate_cohort(8, 1, small_config(), seed=13)
    for patch in patches:
        hourly = patch.values.reshape(-1, 60).mean(axis=1)
        top = np.sort(hourly)[-24:].mean()
        bottom = np.sort(hourly)[:24].mean()
        assert top > 1.5 * bottom
