from typing import Optional, Sequence

import numpy as np

from core.group_model import RolloutGroup, Trajectory


def math_group(answers: Sequence[Optional[str]], advantages: Optional[Sequence[float]] = None,
               prompt_id='p0') -> RolloutGroup:
    """answers 中 None 代表正確 trajectory，其餘為錯誤答案"""
    if advantages is None:
        advantages = [1.0 if a is None else -1.0 for a in answers]
    trajectories = [
        Trajectory(
            id=i,
            correct=a is None,
            baseline_advantage=float(adv),
            raw_text='\\boxed{42}' if a is None else f'\\boxed{{{a}}}',
        )
        for i, (a, adv) in enumerate(zip(answers, advantages))
    ]
    return RolloutGroup(prompt_id, trajectories)


def random_labels(rng: np.random.Generator, nw: int, k: int):
    """長度 nw、恰好 k 個相異標籤的隨機序列"""
    labels = np.concatenate([np.arange(k), rng.integers(0, k, nw - k)])
    rng.shuffle(labels)
    return [f'e{x}' for x in labels]
