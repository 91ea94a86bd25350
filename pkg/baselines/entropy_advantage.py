import numpy as np
from typing import List, Sequence


def entropy_advantage_reshape(advantages: Sequence[float], policy_entropies: Sequence[float],
                              alpha: float = 0.4, kappa: float = 2.0) -> List[float]:
    """
    熵增強優勢：A + min(alpha * H, |A| / kappa)

    熵值視為常數（不對其求導）
    """
    if len(advantages) != len(policy_entropies):
        raise ValueError(f"優勢數量({len(advantages)})與熵數量({len(policy_entropies)})不匹配")
    if alpha <= 0 or kappa <= 1:
        raise ValueError(f"需要 alpha > 0 且 kappa > 1，收到 alpha={alpha}, kappa={kappa}")
    a = np.asarray(advantages, dtype=np.float64)
    h = np.asarray(policy_entropies, dtype=np.float64)
    if np.any(h < 0):
        raise ValueError("熵不可為負")
    return (a + np.minimum(alpha * h, np.abs(a) / kappa)).tolist()
