import numpy as np
import pytest

from edgesense.channel import (
    ChannelParams,
    ReceptionMatrix,
    TransmissionPlan,
    plan_power,
    power_to_success_rate,
    sample_receptions,
    success_rate_to_power,
)
from edgesense.errors import DimensionMismatch, InfinitePower, NegativePower


@pytest.mark.parametrize("kappa", np.linspace(0.1, 0.9, 9))
def test_rate_power_round_trip(kappa):
    mu = np.linspace(0.05, 0.95, 10)
    back = power_to_success_rate(success_rate_to_power(mu, kappa), kappa)

    assert np.max(np.abs(back - mu)) < 1e-12


def test_power_at_one_minus_kappa_is_one():
    assert success_rate_to_power(0.7, 0.3) == pytest.approx(1.0, abs=1e-12)
    assert success_rate_to_power(0.0, 0.3) == 0.0


def test_power_rejects_certain_success():
    with pytest.raises(InfinitePower):
        success_rate_to_power(1.0, 0.5)


def test_rate_rejects_negative_power():
    with pytest.raises(NegativePower):
        power_to_success_rate(-0.1, 0.5)


def test_kappa_must_be_inside_unit_interval():
    with pytest.raises(ValueError):
        ChannelParams(np.array([[0.3, 1.0]]))


def test_channel_from_rows_and_overrides():
    channel = ChannelParams.from_rows([0.3, 0.4], 3)

    assert channel.kappa.shape == (2, 3)
    assert channel.kappa[1, 2] == 0.4

    updated = channel.with_overrides([(0, 1, 0.2)], unlinked=[(1, 0)])
    assert updated.kappa[0, 1] == 0.2
    assert updated.kappa[1, 0] > 0.999999
    assert channel.kappa[0, 1] == 0.3


def test_channel_from_physical_constants():
    channel = ChannelParams.from_physical(1.0, 0.5, 2.0, m=2, n=2)

    assert channel.kappa == pytest.approx(np.full((2, 2), np.exp(-1.0)))


def test_plan_power_checks_shape():
    with pytest.raises(DimensionMismatch):
        plan_power(TransmissionPlan.constant(0.5, 2, 3), ChannelParams.from_rows([0.3], 3))


def test_plan_rejects_rates_outside_unit_interval():
    with pytest.raises(ValueError):
        TransmissionPlan(np.array([[0.5, 1.2]]))


def test_sampled_reception_frequency_matches_rate():
    rng = np.random.default_rng(3)
    plan = TransmissionPlan(np.array([[0.2, 0.8]]))
    counts = sum(sample_receptions(plan, rng).gamma for _ in range(20_000))
    freq = counts / 20_000

    assert freq[0, 0] == pytest.approx(0.2, abs=3 * np.sqrt(0.2 * 0.8 / 20_000))
    assert freq[0, 1] == pytest.approx(0.8, abs=3 * np.sqrt(0.2 * 0.8 / 20_000))


def test_extreme_rates_are_deterministic():
    rng = np.random.default_rng(0)
    plan = TransmissionPlan(np.array([[0.0, 1.0]]))

    for _ in range(50):
        assert sample_receptions(plan, rng).gamma.tolist() == [[0, 1]]


def test_reception_matrix_helpers():
    reception = ReceptionMatrix(np.array([[1, 0, 1], [0, 0, 1]]))

    assert reception.count() == 3
    assert reception.bitmask(0) == 0b101
    assert reception.selection(1).tolist() == [0, 0, 1]
    with pytest.raises(ValueError):
        ReceptionMatrix(np.array([[2, 0]]))
