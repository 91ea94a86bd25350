import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import Domain
from .error_partition import ErrorPartition, error_labels
from .errors import InvalidK, MissingCounterpart, NoErrors
from .group_model import RolloutGroup

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProblemOutcome:
    """單一題目的重複取樣結果，wrong_labels 為錯誤 rollout 的標籤多重集"""
    problem_id: Any
    n: int
    c: int
    wrong_labels: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'wrong_labels', tuple(self.wrong_labels))
        if not 0 <= self.c <= self.n:
            raise ValueError(f"題目 {self.problem_id!r}: 需要 0 <= c <= n，收到 n={self.n}, c={self.c}")
        if len(self.wrong_labels) != self.n - self.c:
            raise ValueError(
                f"題目 {self.problem_id!r}: 錯誤標籤數({len(self.wrong_labels)})應為 n-c={self.n - self.c}"
            )

    @property
    def apr(self) -> float:
        """Average Pass Rate = c / n"""
        return self.c / self.n if self.n else 0.0


def outcome_from_group(group: RolloutGroup, domain: Domain) -> ProblemOutcome:
    return ProblemOutcome(
        problem_id=group.prompt_id,
        n=group.n,
        c=group.n - group.nw,
        wrong_labels=tuple(error_labels(group, domain)),
    )


def binom(a: int, b: int) -> int:
    """C(a, b)，a < b 或 b < 0 時為 0"""
    if b < 0 or a < b:
        return 0
    return comb(a, b)


def pass_at_k_exact(n: int, c: int, k: int) -> Fraction:
    if k < 1 or k > n:
        raise InvalidK(f"k 必須在 [1, {n}] 之間，收到 {k}")
    if not 0 <= c <= n:
        raise ValueError(f"需要 0 <= c <= n，收到 n={n}, c={c}")
    return 1 - Fraction(binom(n - c, k), binom(n, k))


def pass_at_k(n: int, c: int, k: int) -> float:
    """
    無偏 Pass@k 估計：1 - C(n-c, k) / C(n, k)

    以精確整數二項式計算，最後才轉成浮點
    """
    return float(pass_at_k_exact(n, c, k))


def average_pass_at_k(outcomes: Sequence[ProblemOutcome], k: int) -> float:
    """跨題目平均 Pass@k，n < k 的題目略過"""
    values = [pass_at_k(o.n, o.c, k) for o in outcomes if o.n >= k]
    return float(np.mean(values)) if values else float('nan')


def error_diversity(outcome: ProblemOutcome) -> float:
    """
    錯誤多樣性：相異錯誤標籤數 / 錯誤次數

    Raises:
        NoErrors: 沒有任何錯誤 rollout
    """
    wrong = outcome.n - outcome.c
    if wrong < 1:
        raise NoErrors(f"題目 {outcome.problem_id!r} 沒有錯誤 rollout")
    return len(set(outcome.wrong_labels)) / wrong


def partition_of(outcome: ProblemOutcome) -> ErrorPartition:
    return ErrorPartition.from_labels(range(len(outcome.wrong_labels)), outcome.wrong_labels)


def diverse_group_count(batch: Iterable[ErrorPartition]) -> int:
    """K > 1 的群組數"""
    return sum(1 for p in batch if p.k > 1)


def diverse_group_ratio(series_a: Sequence[float], series_b: Sequence[float]) -> Dict[str, float]:
    """
    兩次訓練每步多樣群組數的比值（a / b），分前半、後半與全程
    """
    a = np.asarray(series_a, dtype=np.float64)
    b = np.asarray(series_b, dtype=np.float64)
    if len(a) != len(b) or len(a) == 0:
        raise ValueError("兩個序列長度必須相同且非空")
    half = len(a) // 2

    def _ratio(x, y):
        return float(x.mean() / y.mean()) if len(y) and y.mean() > 0 else float('nan')

    return {
        'first_half': _ratio(a[:half], b[:half]) if half else float('nan'),
        'second_half': _ratio(a[half:], b[half:]),
        'overall': _ratio(a, b),
    }


def _join(before: Sequence[ProblemOutcome], after: Sequence[ProblemOutcome]):
    before_map = {o.problem_id: o for o in before}
    after_map = {o.problem_id: o for o in after}
    unpaired = set(before_map) ^ set(after_map)
    if unpaired:
        raise MissingCounterpart(unpaired)
    return [(before_map[pid], after_map[pid]) for pid in sorted(before_map, key=str)]


COHORTS = ('all', 'error-prone', 'hardest')


def _in_cohort(outcome: ProblemOutcome, cohort: str) -> bool:
    if cohort == 'all':
        return True
    if cohort == 'error-prone':
        return outcome.apr < 1.0
    if cohort == 'hardest':
        return outcome.apr == 0.0
    raise ValueError(f"未知 cohort: {cohort}，可用: {', '.join(COHORTS)}")


def improvement_rate(before: Sequence[ProblemOutcome], after: Sequence[ProblemOutcome],
                     cohort: str = 'all') -> Optional[float]:
    """APR_after > APR_before 的比例；cohort 為空時回傳 None"""
    pairs = [(b, a) for b, a in _join(before, after) if _in_cohort(b, cohort)]
    if not pairs:
        return None
    return sum(1 for b, a in pairs if a.apr > b.apr) / len(pairs)


@dataclass
class Quartile:
    name: str
    problem_ids: List[Any]
    diversity_min: float
    diversity_max: float
    improvement_rate: Optional[float] = None


def diversity_quartiles(outcomes: Sequence[ProblemOutcome],
                        after: Optional[Sequence[ProblemOutcome]] = None) -> List[Quartile]:
    """
    依錯誤多樣性分成四等份（Q1 最低）；同值以題目 id 排序決定
    沒有錯誤的題目不參與分組
    """
    scored = [(error_diversity(o), str(o.problem_id), o) for o in outcomes if o.n - o.c >= 1]
    scored.sort(key=lambda x: (x[0], x[1]))
    after_map = {o.problem_id: o for o in after} if after is not None else None

    quartiles = []
    for q, chunk in enumerate(np.array_split(np.arange(len(scored)), 4), start=1):
        members = [scored[i] for i in chunk]
        rate = None
        if after_map is not None and members:
            missing = [m[2].problem_id for m in members if m[2].problem_id not in after_map]
            if missing:
                raise MissingCounterpart(missing)
            rate = sum(1 for _, _, o in members if after_map[o.problem_id].apr > o.apr) / len(members)
        quartiles.append(Quartile(
            name=f"Q{q}",
            problem_ids=[m[2].problem_id for m in members],
            diversity_min=members[0][0] if members else float('nan'),
            diversity_max=members[-1][0] if members else float('nan'),
            improvement_rate=rate,
        ))
    return quartiles


@dataclass
class BreakthroughReport:
    hard: List[Any]
    broken: List[Any]
    improvement_rates: Dict[str, Optional[float]] = field(default_factory=dict)
    quartiles: List[Quartile] = field(default_factory=list)
    exclusive: Optional[List[Any]] = None  # 只有替代快照突破的題目

    @property
    def success_rate(self) -> Optional[float]:
        return len(self.broken) / len(self.hard) if self.hard else None

    def as_dict(self) -> Dict[str, Any]:
        return {
            'hard_count': len(self.hard),
            'broken_count': len(self.broken),
            'success_rate': self.success_rate,
            'hard': self.hard,
            'broken': self.broken,
            'exclusive': self.exclusive,
            'improvement_rates': self.improvement_rates,
            'quartiles': [q.__dict__ for q in self.quartiles],
        }


def breakthrough_report(before: Sequence[ProblemOutcome], after: Sequence[ProblemOutcome]) -> BreakthroughReport:
    """
    難題集 = 訓練前 APR = 0；突破 = 難題且訓練後 APR > 0

    Raises:
        MissingCounterpart: 題目只出現在其中一份快照
    """
    pairs = _join(before, after)
    hard = [b.problem_id for b, _ in pairs if b.apr == 0.0]
    broken = [b.problem_id for b, a in pairs if b.apr == 0.0 and a.apr > 0.0]
    report = BreakthroughReport(
        hard=hard,
        broken=broken,
        improvement_rates={c: improvement_rate(before, after, c) for c in COHORTS},
        quartiles=diversity_quartiles([b for b, _ in pairs if b.apr < 1.0], after),
    )
    logger.info('難題 %d 題，突破 %d 題', len(hard), len(broken))
    return report


def exclusive_breakthroughs(before: Sequence[ProblemOutcome], after_a: Sequence[ProblemOutcome],
                            after_b: Sequence[ProblemOutcome]) -> List[Any]:
    """b 突破而 a 仍為 0 的難題"""
    broken_a = set(breakthrough_report(before, after_a).broken)
    return [pid for pid in breakthrough_report(before, after_b).broken if pid not in broken_a]


class OutcomeAnalyzer:
    """
    分析模組
    負責 Pass@k、錯誤多樣性、多樣群組數與突破分析
    """

    def __init__(self, outcomes: Sequence[ProblemOutcome], k_values: Sequence[int] = (1,),
                 after: Optional[Sequence[ProblemOutcome]] = None,
                 after_alt: Optional[Sequence[ProblemOutcome]] = None):
        """
        Args:
            outcomes: 主要快照（有 after 時視為訓練前）
            k_values: 要計算的 Pass@k
            after: 訓練後快照
            after_alt: 第二份訓練後快照，用來計算獨有突破
        """
        self.outcomes = list(outcomes)
        self.k_values = list(k_values)
        self.after = list(after) if after is not None else None
        self.after_alt = list(after_alt) if after_alt is not None else None
        if self.after_alt is not None and self.after is None:
            raise ValueError('after_alt 需要同時提供 after')

    def get_problem_details(self) -> pd.DataFrame:
        """每題一列：APR、多樣性（無錯誤時為 NaN）、K 與各 Pass@k"""
        rows = []
        for o in self.outcomes:
            row = {
                'problem_id': o.problem_id,
                'n': o.n,
                'c': o.c,
                'apr': o.apr,
                'diversity': error_diversity(o) if o.n > o.c else float('nan'),
                'k_classes': partition_of(o).k,
            }
            for k in self.k_values:
                row[f'pass@{k}'] = pass_at_k(o.n, o.c, k) if o.n >= k else float('nan')
            rows.append(row)
        return pd.DataFrame(rows, columns=['problem_id', 'n', 'c', 'apr', 'diversity', 'k_classes']
                            + [f'pass@{k}' for k in self.k_values])

    def calculate(self) -> Dict[str, Any]:
        if not self.outcomes:
            return {}
        partitions = [partition_of(o) for o in self.outcomes]
        result = {
            'problems': len(self.outcomes),
            'mean_apr': float(np.mean([o.apr for o in self.outcomes])),
            'pass_at_k': {k: average_pass_at_k(self.outcomes, k) for k in self.k_values},
            'diverse_groups': diverse_group_count(partitions),
            'mean_diversity': float(np.mean([error_diversity(o) for o in self.outcomes if o.n > o.c]))
            if any(o.n > o.c for o in self.outcomes) else float('nan'),
        }
        if self.after is not None:
            report = breakthrough_report(self.outcomes, self.after)
            if self.after_alt is not None:
                report.exclusive = exclusive_breakthroughs(self.outcomes, self.after, self.after_alt)
            result['breakthrough'] = report
        return result

    def print_summary(self, title: str = 'EDAS'):
        result = self.calculate()
        if not result:
            print("沒有資料可分析")
            return

        print("\n" + "=" * 50)
        print(f"{title} 分析摘要")
        print("=" * 50)
        print(f"題目數: {result['problems']}")
        print(f"平均 APR: {result['mean_apr']:.2%}")
        for k, value in result['pass_at_k'].items():
            print(f"Pass@{k}: {value:.2%}")
        print(f"多樣群組數 (K>1): {result['diverse_groups']}")
        print(f"平均錯誤多樣性: {result['mean_diversity']:.3f}")
        report = result.get('breakthrough')
        if report is not None:
            print(f"難題數 (APR=0): {len(report.hard)}")
            print(f"突破數: {len(report.broken)}")
            rate = report.success_rate
            print(f"突破率: {rate:.1%}" if rate is not None else "突破率: 無難題")
            for cohort, value in report.improvement_rates.items():
                print(f"改善率 [{cohort}]: {value:.1%}" if value is not None else f"改善率 [{cohort}]: N/A")
            for q in report.quartiles:
                if q.improvement_rate is not None:
                    print(f"{q.name} 多樣性 [{q.diversity_min:.3f}, {q.diversity_max:.3f}] 改善率: {q.improvement_rate:.1%}")
            if report.exclusive is not None:
                print(f"替代快照獨有突破: {len(report.exclusive)}")
        print("=" * 50)
