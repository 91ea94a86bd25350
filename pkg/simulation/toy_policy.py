"""
單步決策的玩具策略：有限答案詞彙上的 softmax 策略與策略梯度更新
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import entropy as shannon_entropy

from config import ToyTaskConfig
from core.group_model import RolloutGroup, ShapedGroup, Trajectory

# 機率為 0 的答案以此 logit 表示
MIN_LOGIT = -50.0


@dataclass(frozen=True)
class ToyTask:
    vocabulary: Tuple[str, ...]
    correct_index: int
    initial_probs: Optional[Tuple[float, ...]] = None

    @classmethod
    def from_config(cls, config: ToyTaskConfig) -> 'ToyTask':
        return cls(
            vocabulary=tuple(config.vocabulary),
            correct_index=config.correct_index,
            initial_probs=tuple(config.initial_probs) if config.initial_probs is not None else None,
        )

    def __post_init__(self):
        # 沿用設定模型的檢查
        ToyTaskConfig(
            vocabulary=list(self.vocabulary),
            correct_index=self.correct_index,
            initial_probs=list(self.initial_probs) if self.initial_probs is not None else None,
        )

    @property
    def size(self) -> int:
        return len(self.vocabulary)

    def initial_policy(self) -> 'SoftmaxPolicy':
        if self.initial_probs is None:
            return SoftmaxPolicy(np.zeros(self.size))
        return SoftmaxPolicy.from_probs(self.initial_probs)


def perseveration_task(mass_on_wrong: float = 0.9, mass_on_correct: float = 0.05, size: int = 4) -> ToyTask:
    """錯誤坍縮情境：大部分機率集中在單一錯誤答案 w0，正確答案放在最後"""
    others = (1.0 - mass_on_wrong - mass_on_correct) / (size - 2)
    vocabulary = tuple(f'w{i}' for i in range(size - 1)) + ('correct',)
    probs = (mass_on_wrong,) + (others,) * (size - 2) + (mass_on_correct,)
    return ToyTask(vocabulary=vocabulary, correct_index=size - 1, initial_probs=probs)


class SoftmaxPolicy:
    """π = softmax(logits)，不可變"""

    def __init__(self, logits):
        logits = np.array(logits, dtype=np.float64)
        logits.setflags(write=False)
        self.logits = logits

    @classmethod
    def from_probs(cls, probs: Sequence[float]) -> 'SoftmaxPolicy':
        p = np.asarray(probs, dtype=np.float64)
        logits = np.full(p.shape, MIN_LOGIT)
        positive = p > 0
        logits[positive] = np.log(p[positive])
        return cls(logits)

    def probs(self) -> np.ndarray:
        return np.exp(self.logits - logsumexp(self.logits))

    def log_probs(self) -> np.ndarray:
        return self.logits - logsumexp(self.logits)

    def entropy(self) -> float:
        return float(shannon_entropy(self.probs()))

    def __eq__(self, other):
        return isinstance(other, SoftmaxPolicy) and np.array_equal(self.logits, other.logits)

    def __repr__(self):
        return f"SoftmaxPolicy(logits={self.logits.tolist()})"


def make_rng(seed: int) -> np.random.Generator:
    """以種子為 key 的 Philox 計數型亂數流，狀態由呼叫端傳遞"""
    return np.random.Generator(np.random.Philox(key=seed))


def sample_actions(policy: SoftmaxPolicy, n: int, rng: np.random.Generator) -> np.ndarray:
    # 以逆 CDF 抽樣，不同變體共用同一串均勻亂數
    u = rng.random(n)
    cdf = np.cumsum(policy.probs())
    return np.minimum(np.searchsorted(cdf, u, side='right'), len(cdf) - 1)


def sample_group(policy: SoftmaxPolicy, task: ToyTask, n: int, rng: np.random.Generator,
                 prompt_id='toy') -> RolloutGroup:
    """
    抽取 n 條獨立 rollout

    payload 為 \\boxed{答案}，基線優勢先填 0，由設定的估計器稍後填入
    """
    if n < 1:
        raise ValueError(f"n 必須 >= 1，收到 {n}")
    actions = sample_actions(policy, n, rng)
    trajectories = [
        Trajectory(
            id=i,
            correct=bool(a == task.correct_index),
            baseline_advantage=0.0,
            raw_text=f"\\boxed{{{task.vocabulary[a]}}}",
            action=int(a),
        )
        for i, a in enumerate(actions)
    ]
    return RolloutGroup(prompt_id, trajectories)


def log_softmax_grad(policy: SoftmaxPolicy, action: int) -> np.ndarray:
    """∇_logits log π(action) = onehot(action) - π"""
    grad = -policy.probs()
    grad[action] += 1.0
    return grad


def apply_advantages(policy: SoftmaxPolicy, actions: Sequence[int], advantages: Sequence[float],
                     lr: float) -> SoftmaxPolicy:
    """logits' = logits + lr * Σ_i A_i * ∇ log π(a_i)"""
    probs = policy.probs()
    adv = np.asarray(advantages, dtype=np.float64)
    grad = -adv.sum() * probs
    np.add.at(grad, np.asarray(actions, dtype=np.int64), adv)
    return SoftmaxPolicy(policy.logits + lr * grad)


def policy_gradient_step(policy: SoftmaxPolicy, shaped: ShapedGroup, lr: float) -> SoftmaxPolicy:
    actions = [t.action for t in shaped.group.trajectories]
    if any(a is None for a in actions):
        raise ValueError('trajectory 缺少詞彙索引 action，無法做策略梯度更新')
    return apply_advantages(policy, actions, shaped.final_advantages, lr)


def expected_unique_wrong(policy: SoftmaxPolicy, task: ToyTask, n: int) -> float:
    """n 次抽樣中相異錯誤答案數的期望值 Σ_{v≠correct} 1 - (1 - π_v)^n"""
    p = np.delete(policy.probs(), task.correct_index)
    return float(np.sum(1.0 - (1.0 - p) ** n))
