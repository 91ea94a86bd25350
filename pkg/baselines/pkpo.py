from fractions import Fraction
from typing import List, Sequence

from core.analytics import binom
from core.errors import InvalidK


def rho(n: int, c: int, k: int) -> Fraction:
    """ρ(n, c, k) = 1 - C(n-c, k) / C(n, k)，以精確有理數回傳"""
    total = binom(n, k)
    if total == 0:
        raise InvalidK(f"C({n}, {k}) = 0，k 必須介於 0 與 n 之間")
    return 1 - Fraction(binom(n - c, k), total)


def pkpo_rewards_exact(rewards: Sequence[int], k: int) -> List[Fraction]:
    n = len(rewards)
    if k < 1 or k > n:
        raise InvalidK(f"k 必須在 [1, {n}] 之間，收到 {k}")
    c = sum(1 for r in rewards if r)
    base = Fraction(k, n)
    wrong = base * rho(n - 1, c, k - 1)
    return [base if r else wrong for r in rewards]


def pkpo_rewards(rewards: Sequence[int], k: int) -> List[float]:
    """
    PKPO 離散形式獎勵轉換

    正確：k/n；錯誤：(k/n) * ρ(n-1, c, k-1)

    Raises:
        InvalidK: k < 1 或 k > n
    """
    return [float(v) for v in pkpo_rewards_exact(rewards, k)]
