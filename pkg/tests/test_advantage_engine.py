import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from config import ShapingConfig
from core.advantage_engine import (
    ShapingEngine,
    clip_and_finalize,
    clip_delta,
    dynamic_scale,
    edas_adjustments,
    group_statistics,
    shape_group,
)
from core.error_partition import ErrorPartition, partition_errors
from core.errors import EmptyIncorrectSet
from core.group_model import Branch, ExecutionRecord, RolloutGroup, Trajectory
from tests.helpers import math_group, random_labels


def _adjust(answers, advantages, **config):
    group = math_group(answers, advantages)
    cfg = ShapingConfig(**config)
    return edas_adjustments(partition_errors(group, cfg), group, cfg)


class TestDynamicScale:
    @pytest.mark.parametrize('advantages, expected', [
        ([-0.5, -0.5, -0.5], 0.5),
        ([-0.2, -0.8], 0.5),
        ([0.0, 0.0], 0.0),
    ])
    def test_examples(self, advantages, expected):
        group = math_group([str(i) for i in range(len(advantages))], advantages)
        assert dynamic_scale(group) == pytest.approx(expected)

    def test_ignores_correct_trajectories(self):
        group = math_group([None, '1', '2'], [5.0, -0.2, -0.8])
        assert dynamic_scale(group) == pytest.approx(0.5)

    def test_empty_incorrect_set(self):
        with pytest.raises(EmptyIncorrectSet):
            dynamic_scale(math_group([None, None]))

    def test_entropy_bounds(self):
        group = math_group(['1', '1', '2', '3', '3', '3'])
        stats = group_statistics(partition_errors(group, ShapingConfig()), group)
        assert 0.0 <= stats.entropy <= math.log(stats.k)


class TestAdjustments:
    def test_worked_diverse_example(self):
        branch, records, stats = _adjust(['1', '1', '1', '2'], [-1.0] * 4, alpha=0.4)
        assert branch == Branch.DIVERSE
        assert stats.entropy == pytest.approx(0.562335, abs=1e-6)
        surprisal = [r.surprisal for r in records]
        h = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))
        assert surprisal[:3] == pytest.approx([(math.log(4 / 3) - h) / math.log(4)] * 3, abs=1e-12)
        assert surprisal[3] == pytest.approx((math.log(4) - h) / math.log(4), abs=1e-12)
        assert surprisal[3] == pytest.approx(0.594361, abs=1e-6)
        deltas = [r.delta_raw for r in records]
        assert deltas == pytest.approx([-0.079248, -0.079248, -0.079248, 0.237745], abs=1e-6)
        assert abs(math.fsum(surprisal)) < 1e-12

    def test_perseveration_branch(self):
        branch, records, stats = _adjust(['7', '7', '7'], [-0.5] * 3, beta=0.2)
        assert branch == Branch.PERSEVERATION
        assert stats.scale == pytest.approx(0.5)
        assert [r.delta_raw for r in records] == pytest.approx([-0.1] * 3)
        assert all(r.surprisal is None for r in records)

    def test_insufficient_branch(self):
        branch, records, _ = _adjust([None, '3'], [1.0, -1.0])
        assert branch == Branch.INSUFFICIENT
        assert [r.delta_raw for r in records] == [0.0]

    def test_symmetric_partition_has_zero_surprisal(self):
        branch, records, _ = _adjust(['1', '1', '2', '2'], [-1.0] * 4)
        assert branch == Branch.DIVERSE
        assert [r.delta_raw for r in records] == pytest.approx([0.0] * 4, abs=1e-15)


class TestClipping:
    def test_no_truncation(self):
        assert clip_delta(-1.0, 0.237745, 2.0) == (pytest.approx(0.237745), False)

    def test_truncated(self):
        applied, clipped = clip_delta(-0.1, 0.3, 2.0)
        assert clipped
        assert -0.1 + applied == pytest.approx(-0.05)

    def test_negative_amplification(self):
        applied, clipped = clip_delta(-1.0, -0.1, 2.0)
        assert (applied, clipped) == (-0.1, False)

    def test_final_advantages(self):
        group = math_group([None, '1', '1', '1', '2'], [2.0, -1.0, -1.0, -1.0, -1.0])
        shaped = shape_group(group, ShapingConfig())
        assert shaped.final_advantages[0] == 2.0
        assert shaped.final_advantages[4] == pytest.approx(-0.762255, abs=1e-6)
        assert shaped.clip_hits == (False,) * 5

    def test_misaligned_adjustments(self):
        group = math_group(['1', '2'], [-1.0, -1.0])
        _, records, _ = edas_adjustments(partition_errors(group, ShapingConfig()), group, ShapingConfig())
        with pytest.raises(ValueError):
            clip_and_finalize(group, records[:1], ShapingConfig())

    def test_statistics_recomputed_from_labels(self):
        group = math_group(['1', '1', '1', '2'], [-1.0] * 4)
        cfg = ShapingConfig(alpha=0.4)
        branch, records, stats = edas_adjustments(partition_errors(group, cfg), group, cfg)
        shaped = clip_and_finalize(group, records, cfg)
        assert shaped.branch == Branch.DIVERSE
        assert shaped.statistics.k == 2
        assert shaped.statistics.entropy == pytest.approx(0.562335, abs=1e-6)
        assert shaped.statistics.entropy == pytest.approx(stats.entropy, abs=1e-12)
        assert all(row['entropy'] == pytest.approx(0.562335, abs=1e-6) for row in shaped.records())

    def test_recomputed_entropy_zero_for_single_class(self):
        group = math_group(['7', '7', '7'], [-0.5] * 3)
        cfg = ShapingConfig()
        _, records, _ = edas_adjustments(partition_errors(group, cfg), group, cfg)
        assert clip_and_finalize(group, records, cfg).statistics.entropy == 0.0


class TestShapeGroup:
    def test_diverse_group_zero_sum(self):
        group = math_group([None, '1', '1', '2', '3', None], [1.0, -1.0, -1.0, -1.0, -1.0, 1.0])
        shaped = shape_group(group, ShapingConfig())
        assert shaped.branch == Branch.DIVERSE
        assert shaped.statistics.k == 3
        assert abs(shaped.surprisal_sum()) < 1e-12

    def test_all_incorrect_identical_answers(self):
        group = math_group(['4'] * 5, [-0.3] * 5)
        shaped = shape_group(group, ShapingConfig(beta=0.2))
        assert shaped.branch == Branch.PERSEVERATION
        assert shaped.final_advantages == pytest.approx([-0.36] * 5)

    def test_no_incorrect_is_noop(self):
        group = math_group([None, None, None], [0.0, 0.0, 0.0])
        shaped = shape_group(group, ShapingConfig())
        assert shaped.final_advantages == (0.0, 0.0, 0.0)
        assert shaped.adjustments == ()

    def test_records_cover_every_trajectory(self):
        group = math_group([None, '1', '2'])
        rows = shape_group(group, ShapingConfig()).records()
        assert [r['index'] for r in rows] == [0, 1, 2]
        assert rows[0]['label'] is None
        assert rows[1]['branch'] == 'diverse'


class TestZeroSumAndBounds:
    def test_random_partitions(self, rng):
        config = ShapingConfig()
        for _ in range(10_000):
            nw = int(rng.integers(2, 65))
            k = int(rng.integers(2, nw + 1))
            labels = random_labels(rng, nw, k)
            group = math_group(labels)
            partition = ErrorPartition.from_labels(group.incorrect_set, labels)
            branch, records, _ = edas_adjustments(partition, group, config)
            assert branch == Branch.DIVERSE
            surprisal = [r.surprisal for r in records]
            assert abs(math.fsum(surprisal)) < 1e-9
            assert all(-1.0 - 1e-12 <= t <= 1.0 + 1e-12 for t in surprisal)
            # 平均值不變
            shifted = [-1.0 + r.delta_raw for r in records]
            assert math.fsum(shifted) / nw == pytest.approx(-1.0, abs=1e-12)

    @pytest.mark.parametrize('nw', [2, 3, 10, 64])
    def test_extreme_partitions(self, nw):
        config = ShapingConfig()
        majority = ['a'] * (nw - 1) + ['b']
        singletons = [f's{i}' for i in range(nw)]
        for labels in (majority, singletons):
            group = math_group(labels)
            partition = ErrorPartition.from_labels(group.incorrect_set, labels)
            _, records, _ = edas_adjustments(partition, group, config)
            assert all(-1.0 - 1e-12 <= r.surprisal <= 1.0 + 1e-12 for r in records)
        # 全部相異時每個 T_i 都是 0
        assert all(abs(r.surprisal) < 1e-12 for r in records)


class TestSignNonInversion:
    def test_random_triples(self, rng):
        for _ in range(10_000):
            baseline = -float(rng.uniform(1e-6, 10.0))
            delta = float(rng.normal(0.0, 5.0))
            kappa = float(rng.uniform(1.0, 10.0))
            if kappa <= 1.0:
                continue
            applied, _ = clip_delta(baseline, delta, kappa)
            final = baseline + applied
            assert final < 0
            assert abs(final) >= abs(baseline) * (1 - 1 / kappa) - 1e-12 * abs(baseline)


labels_strategy = st.lists(st.integers(0, 4), min_size=2, max_size=12)
magnitudes = st.floats(min_value=1e-3, max_value=10.0, allow_nan=False)


class TestProperties:
    @given(labels_strategy, st.data())
    def test_monotone_across_classes(self, labels, data):
        advantages = data.draw(st.lists(magnitudes, min_size=len(labels), max_size=len(labels)))
        answers = [str(x) for x in labels]
        branch, records, _ = _adjust(answers, [-a for a in advantages])
        if branch != Branch.DIVERSE:
            return
        counts = {label: answers.count(label) for label in answers}
        for a in records:
            for b in records:
                if counts[a.label] > counts[b.label]:
                    assert a.delta_raw < b.delta_raw

    @given(labels_strategy, st.data(), st.sampled_from([0.5, 2.0, 4.0]))
    def test_positive_homogeneity(self, labels, data, c):
        advantages = data.draw(st.lists(magnitudes, min_size=len(labels), max_size=len(labels)))
        answers = [str(x) for x in labels]
        base = shape_group(math_group(answers, [-a for a in advantages]), ShapingConfig())
        scaled = shape_group(math_group(answers, [-c * a for a in advantages]), ShapingConfig())
        assert scaled.scale == c * base.scale
        for r0, r1 in zip(base.adjustments, scaled.adjustments):
            assert r1.delta_raw == c * r0.delta_raw
        for i in range(len(answers)):
            moved0 = base.final_advantages[i] - base.group.baseline_advantages[i]
            moved1 = scaled.final_advantages[i] - scaled.group.baseline_advantages[i]
            assert moved1 == pytest.approx(c * moved0, rel=1e-12, abs=1e-15)

    @given(st.lists(st.one_of(st.none(), st.integers(0, 3)), min_size=1, max_size=10), st.randoms())
    def test_permutation_equivariance(self, labels, shuffler):
        answers = [None if x is None else str(x) for x in labels]
        advantages = [1.0 if a is None else -0.5 - i / 10 for i, a in enumerate(answers)]
        order = list(range(len(answers)))
        shuffler.shuffle(order)
        base = shape_group(math_group(answers, advantages), ShapingConfig())
        permuted = shape_group(
            math_group([answers[i] for i in order], [advantages[i] for i in order]), ShapingConfig()
        )
        expected = [base.final_advantages[i] for i in order]
        assert list(permuted.final_advantages) == pytest.approx(expected, rel=1e-12, abs=1e-15)
        assert permuted.branch == base.branch


class TestNeutrality:
    def test_zero_strength_is_identity(self):
        rnd = random.Random(11)
        engine = ShapingEngine(alpha=0.0, beta=0.0)
        for g in range(1000):
            n = rnd.randint(1, 16)
            answers = [None if rnd.random() < 0.3 else str(rnd.randint(0, 4)) for _ in range(n)]
            advantages = [rnd.uniform(0.01, 2.0) * (1 if a is None else -1) for a in answers]
            group = math_group(answers, advantages, prompt_id=g)
            assert engine.shape(group).final_advantages == tuple(group.baseline_advantages)


class TestShapingEngine:
    def test_arguments_override_config(self):
        engine = ShapingEngine.from_config(ShapingConfig(alpha=0.1, beta=0.3), alpha=0.5)
        assert engine.config.alpha == 0.5
        assert engine.config.beta == 0.3

    def test_prepare_derives_baseline(self):
        group = math_group([None, '1', '2', '3'], [0.0] * 4)
        prepared = ShapingEngine().prepare(group, derive=True)
        assert prepared.advantage_derived
        assert prepared.baseline_advantages[0] == pytest.approx(1.7320508, abs=1e-6)

    def test_batch_keeps_order_and_drops(self):
        groups = [
            math_group([None, '1', '2'], prompt_id='mixed'),
            math_group([None, None], prompt_id='solved'),
            math_group(['1', '1'], prompt_id='failed'),
            math_group([None, '3', '3'], prompt_id='mixed2'),
        ]
        result = ShapingEngine().shape_batch(groups, dynamic_sampling=True)
        assert [s.group.prompt_id for s in result.shaped] == ['mixed', 'mixed2']
        assert [g.prompt_id for g in result.dropped] == ['solved', 'failed']
        assert result.diverse_groups == 1
        assert result.failures == []

    def test_batch_collects_failures(self):
        groups = [math_group([None, '1'], [1.0, math.nan], prompt_id='bad'), math_group([None, '1'])]
        result = ShapingEngine().shape_batch(groups)
        assert [pid for pid, _ in result.failures] == ['bad']
        assert len(result.shaped) == 1

    def test_parallel_matches_sequential(self):
        rng = np.random.default_rng(5)
        groups = [
            math_group([None if rng.random() < 0.3 else str(int(rng.integers(0, 3))) for _ in range(8)],
                       prompt_id=i)
            for i in range(40)
        ]
        engine = ShapingEngine()
        sequential = engine.shape_batch(groups)
        parallel = engine.shape_batch(groups, workers=2)
        assert [s.final_advantages for s in parallel.shaped] == [s.final_advantages for s in sequential.shaped]

    def test_batch_follows_group_domain(self):
        records = [ExecutionRecord('run', 'TypeError'), ExecutionRecord('run', 'TypeError'), ExecutionRecord('run')]
        code = RolloutGroup('c', [Trajectory(0, True, 1.0, execution=ExecutionRecord('run', tests_passed=True))]
                            + [Trajectory(i + 1, False, -1.0, execution=r) for i, r in enumerate(records)])
        groups = [math_group([None, '1', '2'], prompt_id='m'), code]

        mismatched = ShapingEngine().shape_batch(groups)
        assert [pid for pid, _ in mismatched.failures] == ['c']

        result = ShapingEngine().shape_batch(groups, follow_group_domain=True)
        assert result.failures == []
        assert [s.group.prompt_id for s in result.shaped] == ['m', 'c']
        assert [r['label'] for r in result.shaped[1].records()] == [None, 'TypeError', 'TypeError', 'WrongAnswer']
