import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from baselines.dynamic_sampling import is_informative
from baselines.entropy_advantage import entropy_advantage_reshape
from baselines.grpo_baseline import grpo_baseline_advantages
from baselines.pkpo import pkpo_rewards
from config import Algorithm, ExperimentPlan, SimConfig
from core.advantage_engine import group_statistics, shape_group
from core.error_partition import partition_errors
from core.group_model import Branch, with_baseline_advantages
from .toy_policy import (
    SoftmaxPolicy,
    ToyTask,
    apply_advantages,
    expected_unique_wrong,
    make_rng,
    sample_group,
)

logger = logging.getLogger(__name__)

SKIPPED = 'skipped'


@dataclass
class StepRecord:
    step: int
    p_correct: float
    reward_mean: float
    unique_wrong: int
    expected_unique_wrong: float
    k: int
    nw: int
    branch: str
    diverse: bool
    post_clip_delta_sum: float
    resamples: int
    policy_entropy: float


def _baseline_advantages(config: SimConfig, rewards: List[int], policy: SoftmaxPolicy) -> List[float]:
    shaping = config.shaping
    if config.algorithm == Algorithm.PKPO:
        return grpo_baseline_advantages(pkpo_rewards(rewards, config.pkpo_k), shaping.epsilon_std)
    advantages = grpo_baseline_advantages(rewards, shaping.epsilon_std)
    if config.algorithm == Algorithm.ENTROPY_ADV and shaping.alpha > 0:
        h = policy.entropy()
        advantages = entropy_advantage_reshape(advantages, [h] * len(advantages), shaping.alpha, shaping.kappa)
    return advantages


def run_experiment(config: SimConfig, task: ToyTask, stop_at_threshold: bool = False) -> pd.DataFrame:
    """
    執行單一玩具實驗，trace 只由 (config, task) 決定

    Args:
        config: 模擬設定
        task: 玩具任務
        stop_at_threshold: P(correct) 達到 config.threshold 後提前結束

    Returns:
        trace: 每步一列，P(correct) 為該步更新後的值
    """
    rng = make_rng(config.seed)
    policy = task.initial_policy()
    n = config.group_size
    records = []

    for step in range(1, config.steps + 1):
        group = sample_group(policy, task, n, rng, prompt_id=step)
        resamples = 0
        if config.algorithm.uses_filter:
            while not is_informative(group) and resamples < config.max_resample:
                group = sample_group(policy, task, n, rng, prompt_id=step)
                resamples += 1

        rewards = group.rewards
        partition = partition_errors(group, config.shaping)
        unique_wrong = partition.k

        if config.algorithm.uses_filter and not is_informative(group):
            # 重抽上限用盡，本步不更新
            records.append(StepRecord(
                step=step,
                p_correct=float(policy.probs()[task.correct_index]),
                reward_mean=float(np.mean(rewards)),
                unique_wrong=unique_wrong,
                expected_unique_wrong=expected_unique_wrong(policy, task, n),
                k=partition.k,
                nw=group.nw,
                branch=SKIPPED,
                diverse=partition.k > 1,
                post_clip_delta_sum=0.0,
                resamples=resamples,
                policy_entropy=policy.entropy(),
            ))
        else:
            group = with_baseline_advantages(group, _baseline_advantages(config, rewards, policy))
            if config.algorithm.uses_edas:
                shaped = shape_group(group, config.shaping)
                branch = shaped.branch
                final = shaped.final_advantages
                delta_sum = shaped.post_clip_delta_sum()
            else:
                # 基線演算法只被動記錄分群統計
                stats = group_statistics(partition, group)
                branch = Branch.for_counts(stats.nw, stats.k)
                final = group.baseline_advantages
                delta_sum = 0.0

            policy = apply_advantages(policy, [t.action for t in group.trajectories], final,
                                      config.learning_rate)
            records.append(StepRecord(
                step=step,
                p_correct=float(policy.probs()[task.correct_index]),
                reward_mean=float(np.mean(rewards)),
                unique_wrong=unique_wrong,
                expected_unique_wrong=expected_unique_wrong(policy, task, n),
                k=partition.k,
                nw=group.nw,
                branch=branch.value,
                diverse=partition.k > 1,
                post_clip_delta_sum=delta_sum,
                resamples=resamples,
                policy_entropy=policy.entropy(),
            ))

        if stop_at_threshold and records[-1].p_correct >= config.threshold:
            break

    logger.debug('%s seed=%d 完成 %d 步', config.algorithm.value, config.seed, len(records))
    return pd.DataFrame([asdict(r) for r in records], columns=list(StepRecord.__dataclass_fields__))


def smooth(series, factor: float = 0.5) -> pd.Series:
    """指數平滑：s_t = factor * s_{t-1} + (1 - factor) * x_t"""
    if not 0.0 <= factor < 1.0:
        raise ValueError(f"factor 必須在 [0, 1) 之間，收到 {factor}")
    return pd.Series(series, dtype=np.float64).ewm(alpha=1.0 - factor, adjust=False).mean()


def time_to_threshold(trace: pd.DataFrame, threshold: float = 0.5) -> Optional[int]:
    """第一個 P(correct) >= threshold 的步數，未達到時回傳 None"""
    hit = trace.index[trace['p_correct'] >= threshold]
    return int(trace.loc[hit[0], 'step']) if len(hit) else None


def diversity_dominance(trace_a: pd.DataFrame, trace_b: pd.DataFrame, threshold: float = 0.5) -> float:
    """
    兩條 trace 在任一方達到 threshold 之前，a 的相異錯誤數 >= b 的步數比例
    """
    ta = time_to_threshold(trace_a, threshold)
    tb = time_to_threshold(trace_b, threshold)
    limit = min(len(trace_a), len(trace_b))
    for t in (ta, tb):
        if t is not None:
            limit = min(limit, t - 1)
    if limit <= 0:
        return 1.0
    a = trace_a['unique_wrong'].to_numpy()[:limit]
    b = trace_b['unique_wrong'].to_numpy()[:limit]
    return float(np.mean(a >= b))


def run_variants(plan: ExperimentPlan, stop_at_threshold: bool = False) -> Dict[Tuple[str, int], pd.DataFrame]:
    """對每個 (variant, seed) 執行一次實驗，順序固定"""
    task = ToyTask.from_config(plan.task)
    traces = {}
    for variant, seed, config in plan.configs():
        logger.info('執行 %s seed=%d', variant.value, seed)
        traces[(variant.value, seed)] = run_experiment(config, task, stop_at_threshold=stop_at_threshold)
    return traces


def summarize(traces: Dict[Tuple[str, int], pd.DataFrame], threshold: float = 0.5,
              max_steps: Optional[int] = None) -> pd.DataFrame:
    """
    各變體摘要：達標步數中位數（未達標以 max_steps + 1 計）、達標率、平均相異錯誤數、平均多樣群組比例
    """
    rows = []
    variants = list(dict.fromkeys(v for v, _ in traces))
    for variant in variants:
        runs = [(seed, tr) for (v, seed), tr in traces.items() if v == variant]
        times = []
        for _, tr in runs:
            t = time_to_threshold(tr, threshold)
            cap = max_steps if max_steps is not None else len(tr)
            times.append(t if t is not None else cap + 1)
        rows.append({
            'variant': variant,
            'runs': len(runs),
            'median_steps_to_threshold': float(np.median(times)),
            'reached_rate': float(np.mean([time_to_threshold(tr, threshold) is not None for _, tr in runs])),
            'mean_unique_wrong': float(np.mean([tr['unique_wrong'].mean() for _, tr in runs])),
            'mean_diverse_fraction': float(np.mean([tr['diverse'].mean() for _, tr in runs])),
            'final_p_correct': float(np.mean([tr['p_correct'].iloc[-1] for _, tr in runs])),
        })
    return pd.DataFrame(rows)


def print_summary(summary: pd.DataFrame, threshold: float = 0.5):
    print("\n" + "=" * 50)
    print(f"模擬摘要 (P(correct) >= {threshold})")
    print("=" * 50)
    for row in summary.itertuples():
        print(f"{row.variant}: 達標步數中位數 {row.median_steps_to_threshold:.1f} | "
              f"達標率 {row.reached_rate:.0%} | 平均相異錯誤數 {row.mean_unique_wrong:.3f} | "
              f"多樣群組比例 {row.mean_diverse_fraction:.2%}")
    print("=" * 50)
