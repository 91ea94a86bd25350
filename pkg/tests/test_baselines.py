from fractions import Fraction
from itertools import combinations
from math import comb

import pytest

from baselines.dynamic_sampling import dynamic_sampling_filter, is_informative
from baselines.entropy_advantage import entropy_advantage_reshape
from baselines.grpo_baseline import grpo_baseline_advantages
from baselines.pkpo import pkpo_rewards, pkpo_rewards_exact, rho
from core.errors import InvalidK
from tests.helpers import math_group


class TestGrpoBaseline:
    def test_single_correct(self):
        advantages = grpo_baseline_advantages([1, 0, 0, 0])
        assert advantages == pytest.approx([1.73205, -0.57735, -0.57735, -0.57735], abs=1e-5)

    @pytest.mark.parametrize('rewards', [[1, 1, 1, 1], [0, 0]])
    def test_zero_variance(self, rewards):
        assert grpo_baseline_advantages(rewards) == [0.0] * len(rewards)

    def test_incorrect_are_negative_when_mixed(self):
        advantages = grpo_baseline_advantages([0, 1, 0, 1, 1, 0, 0])
        assert all(a < 0 for a, r in zip(advantages, [0, 1, 0, 1, 1, 0, 0]) if r == 0)

    def test_empty(self):
        with pytest.raises(ValueError):
            grpo_baseline_advantages([])


class TestDynamicSampling:
    def test_filter(self):
        mixed = math_group([None, None, None] + ['1'] * 7, prompt_id='mixed')
        solved = math_group([None] * 10, prompt_id='solved')
        failed = math_group(['2'] * 10, prompt_id='failed')
        kept, dropped = dynamic_sampling_filter([solved, mixed, failed])
        assert kept == [mixed]
        assert dropped == [solved, failed]
        assert is_informative(mixed)
        assert not is_informative(failed)


class TestPkpo:
    @pytest.mark.parametrize('c', range(0, 11))
    def test_n10_k8(self, c):
        n, k = 10, 8
        rewards = [1] * c + [0] * (n - c)
        exact = pkpo_rewards_exact(rewards, k)
        # C(a, b) = 0 when a < b; c = n leaves no incorrect rewards to check
        misses = comb(n - 1 - c, k - 1) if n - 1 - c >= 0 else 0
        wrong = Fraction(k, n) * (1 - Fraction(misses, comb(n - 1, k - 1)))
        assert exact[:c] == [Fraction(4, 5)] * c
        assert exact[c:] == [wrong] * (n - c)
        if c == 0:
            assert pkpo_rewards(rewards, k) == [0.0] * n

    def test_worked_example(self):
        rewards = [1, 1] + [0] * 8
        values = pkpo_rewards(rewards, 8)
        assert values[0] == pytest.approx(0.8)
        assert values[-1] == pytest.approx(0.8 * 35 / 36)

    def test_all_correct(self):
        assert pkpo_rewards([1] * 5, 3) == [0.6] * 5

    @pytest.mark.parametrize('k', [0, 11])
    def test_invalid_k(self, k):
        with pytest.raises(InvalidK):
            pkpo_rewards([1] + [0] * 9, k)

    def test_rho_matches_enumeration(self):
        for n in range(1, 11):
            for c in range(0, n + 1):
                for k in range(1, n + 1):
                    subsets = list(combinations(range(n), k))
                    hits = sum(1 for s in subsets if any(i < c for i in s))
                    assert rho(n, c, k) == Fraction(hits, len(subsets))


class TestEntropyAdvantage:
    def test_examples(self):
        reshaped = entropy_advantage_reshape([-1.0, -0.1, 0.7], [0.5, 2.0, 0.0], alpha=0.4, kappa=2.0)
        assert reshaped == pytest.approx([-0.8, -0.05, 0.7])

    def test_validation(self):
        with pytest.raises(ValueError):
            entropy_advantage_reshape([1.0], [0.1, 0.2])
        with pytest.raises(ValueError):
            entropy_advantage_reshape([1.0], [0.1], kappa=1.0)
        with pytest.raises(ValueError):
            entropy_advantage_reshape([1.0], [-0.1])
