import numpy as np
import pytest
from hypothesis import given, strategies as st

from structbound.catalog import BesselProfile, ExponentialTaperProfile, GaussianProfile, PulseForcing, \
    SamplesProfile, SineModeProfile, StepForcing, as_forcing, forcing_from_section, profile_from_section
from structbound.config import ScenarioConfig


class TestProfiles:
    def test_gaussian_components(self):
        z = np.linspace(-3, 3, 61)
        values = GaussianProfile(amplitude=[1.0, -2.0], center=0.5, width=0.7).evaluate(z, k=2)
        assert values.shape == (61, 2)
        np.testing.assert_allclose(values[:, 1], -2 * values[:, 0])
        assert values[np.argmax(values[:, 0]), 0] == pytest.approx(1.0, abs=1e-2)

    def test_sine_mode_vanishes_at_ends(self):
        z = np.linspace(2.0, 5.0, 31)
        values = SineModeProfile(b1=2.0, length=3.0, mode=3).evaluate(z)[:, 0]
        assert values[0] == pytest.approx(0.0, abs=1e-15)
        assert values[-1] == pytest.approx(0.0, abs=1e-12)

    @given(st.floats(0.1, 3.0))
    def test_exponential_taper_slope_at_center(self, rate):
        profile = ExponentialTaperProfile(amplitude=1.0, rate=rate, taper=2.0)
        h = 1e-5
        slope = (profile.shape(np.array([h]))[0] - profile.shape(np.array([-h]))[0]) / (2 * h)
        assert slope == pytest.approx(rate, rel=1e-6)

    def test_bessel_needs_beta(self):
        r, theta = np.linspace(0.1, 1, 5), np.linspace(0, 6, 8)
        with pytest.raises(ValueError):
            BesselProfile().evaluate_polar(r, theta)
        values = BesselProfile(beta=2.404825557695773).evaluate_polar(np.array([1.0]), theta)
        np.testing.assert_allclose(values, 0.0, atol=1e-12)

    def test_samples_interpolate(self):
        profile = SamplesProfile(points=[0, 1, 2], values=[0, 2, 0])
        np.testing.assert_allclose(profile.evaluate(np.array([0.5, 1.0, 1.5]))[:, 0], [1.0, 2.0, 1.0])

    def test_string_profiles_reject_the_disk(self):
        with pytest.raises(ValueError):
            SineModeProfile(b1=0, length=1).evaluate_polar(np.ones(2), np.ones(2))


class TestSections:
    def test_profile_from_section(self):
        document = ScenarioConfig.from_text("[initial]\nfield_kind = gaussian\nfield_center = 2\nfield_width = 0.5\n")
        profile = profile_from_section(document["initial"], "field")
        assert isinstance(profile, GaussianProfile)
        assert profile.params == {"center": 2.0, "width": 0.5}

    def test_unknown_kinds(self):
        document = ScenarioConfig.from_text("[initial]\nfield_kind = wobble\n[boundary.b1]\nforce_kind = kick\n")
        with pytest.raises(ValueError, match="wobble"):
            profile_from_section(document["initial"], "field")
        with pytest.raises(ValueError, match="kick"):
            forcing_from_section(document["boundary.b1"], "force", 1)

    def test_forcing_from_section(self):
        document = ScenarioConfig.from_text("[boundary.b1]\nforce_kind = step\nforce_value = [1, 3]\nforce_t0 = 2\n")
        force = forcing_from_section(document["boundary.b1"], "force", 2)
        assert isinstance(force, StepForcing)
        np.testing.assert_array_equal(force(1.0), [0.0, 0.0])
        np.testing.assert_array_equal(force(2.0), [1.0, 3.0])

    def test_missing_force_is_none(self):
        document = ScenarioConfig.from_text("[boundary.b1]\nmass = 1\n")
        force = forcing_from_section(document["boundary.b1"], "force", 3)
        assert force.is_zero
        np.testing.assert_array_equal(force(0.0), np.zeros(3))


class TestForcings:
    def test_pulse_window_is_half_open(self):
        pulse = PulseForcing(value=2.0, t0=1.0, duration=0.5)
        assert pulse(0.999)[0] == 0.0
        assert pulse(1.0)[0] == 2.0
        assert pulse(1.5)[0] == 0.0

    def test_as_forcing(self):
        assert as_forcing(None).is_zero
        assert as_forcing(3.0)(10.0)[0] == 3.0
        assert as_forcing(lambda t: 2 * t)(1.5)[0] == 3.0
