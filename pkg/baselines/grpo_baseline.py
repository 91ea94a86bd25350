import numpy as np
from typing import List, Sequence


def grpo_baseline_advantages(rewards: Sequence[float], epsilon_std: float = 1e-8) -> List[float]:
    """
    群組相對基線優勢

    Args:
        rewards: 0/1 獎勵列表
        epsilon_std: 變異數為 0 時避免除以 0

    Returns:
        advantages: A_i = (r_i - mean) / (std_pop + epsilon_std)
    """
    if len(rewards) == 0:
        raise ValueError("rewards 不可為空")
    r = np.asarray(rewards, dtype=np.float64)
    # 母體標準差 (ddof=0)
    std = r.std()
    return ((r - r.mean()) / (std + epsilon_std)).tolist()
