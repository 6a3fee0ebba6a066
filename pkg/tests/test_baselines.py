import numpy as np
import pytest

from edgesense.baselines import BaselineKind, BaselinePolicy, baseline_action
from edgesense.channel import ChannelParams, plan_power
from edgesense.obsbound import ActionBounds

BOUNDS = ActionBounds(0.3, 0.8)


def test_spm_always_transmits_at_upper_bound():
    policy = BaselinePolicy(BaselineKind.SPM, BOUNDS, 2, 3)

    for slot in range(5):
        assert np.all(policy.act(None, slot).mu == 0.8)
    assert policy.name == "spm"


def test_psm_alternates_with_period_two():
    policy = BaselinePolicy("psm", BOUNDS, 2, 3)
    levels = [float(policy.act(None, slot).mu[0, 0]) for slot in range(6)]

    assert levels == [0.8, 0.3] * 3
    low_first = BaselinePolicy("psm", BOUNDS, 2, 3, start_high=False)
    assert float(baseline_action(low_first, 0).mu[0, 0]) == 0.3


def test_rsm_is_uniform_on_the_interval():
    policy = BaselinePolicy(BaselineKind.RSM, BOUNDS, 2, 3, rng=np.random.default_rng(8))
    draws = np.concatenate([policy.act(None, slot).mu.ravel() for slot in range(2000)])
    sigma = 0.5 / np.sqrt(12) / np.sqrt(draws.size)

    assert draws.min() >= 0.3
    assert draws.max() <= 0.8
    assert abs(draws.mean() - 0.55) < 3 * sigma


def test_rsm_requires_generator():
    with pytest.raises(ValueError):
        BaselinePolicy(BaselineKind.RSM, BOUNDS, 2, 3)


def test_spm_spends_the_most_power():
    channel = ChannelParams.from_rows([0.3, 0.4], 3)
    rng = np.random.default_rng(0)
    policies = {
        kind: BaselinePolicy(kind, BOUNDS, 2, 3, rng=rng) for kind in BaselineKind
    }
    spent = {
        kind: np.mean([plan_power(p.act(None, k), channel).sum() for k in range(200)])
        for kind, p in policies.items()
    }

    assert spent[BaselineKind.SPM] > spent[BaselineKind.PSM]
    assert spent[BaselineKind.SPM] > spent[BaselineKind.RSM]
