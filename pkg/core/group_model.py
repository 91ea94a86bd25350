"""
Rollout 群組資料模型

所有型別皆為不可變的值物件，驗證後可在多個 worker 間共享
輸出順序與輸入的 trajectory 順序一一對應
"""
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from config import Domain
from .errors import EmptyGroup, InconsistentRecord, MixedPayloadDomain, NonFiniteAdvantage

logger = logging.getLogger(__name__)

# 保留標籤
NO_ANSWER = '<NO_ANSWER>'
WRONG_ANSWER = 'WrongAnswer'


class Phase(str, Enum):
    COMPILE = 'compile'
    RUN = 'run'


class Branch(str, Enum):
    INSUFFICIENT = 'insufficient'
    PERSEVERATION = 'perseveration'
    DIVERSE = 'diverse'

    @classmethod
    def for_counts(cls, nw: int, k: int) -> 'Branch':
        """依 (N_w, K) 決定分支，每組輸入恰好命中一個分支"""
        if nw <= 1:
            return cls.INSUFFICIENT
        if k == 1:
            return cls.PERSEVERATION
        return cls.DIVERSE


@dataclass(frozen=True)
class ExecutionRecord:
    """程式題沙盒執行紀錄（本模組只讀取，不執行程式）"""
    phase: Phase
    exception_name: Optional[str] = None
    tests_passed: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'phase', Phase(self.phase))
        if self.exception_name == '':
            object.__setattr__(self, 'exception_name', None)
        if self.tests_passed and self.exception_name is not None:
            raise InconsistentRecord(
                f"tests_passed=True 但仍有例外 {self.exception_name}"
            )


@dataclass(frozen=True)
class Trajectory:
    """
    單一 rollout

    Args:
        id: trajectory 識別碼
        correct: 驗證器結果
        baseline_advantage: 基線優勢 A^orig
        raw_text: 數學題的完整輸出文字
        execution: 程式題的執行紀錄
        action: 模擬器中的詞彙索引（非模擬資料為 None）
    """
    id: Any
    correct: bool
    baseline_advantage: float
    raw_text: Optional[str] = None
    execution: Optional[ExecutionRecord] = None
    action: Optional[int] = None

    def __post_init__(self):
        if (self.raw_text is None) == (self.execution is None):
            raise MixedPayloadDomain(
                f"trajectory {self.id!r} 必須恰有一種 payload（raw_text 或 execution）"
            )

    @property
    def domain(self) -> Domain:
        return Domain.MATH if self.raw_text is not None else Domain.CODE


@dataclass(frozen=True)
class RolloutGroup:
    """同一個 prompt 的 N 條 trajectory，incorrect_set 即 W"""
    prompt_id: Any
    trajectories: Tuple[Trajectory, ...]
    advantage_derived: bool = False
    incorrect_set: Tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'trajectories', tuple(self.trajectories))
        object.__setattr__(
            self, 'incorrect_set',
            tuple(i for i, t in enumerate(self.trajectories) if not t.correct),
        )

    @property
    def n(self) -> int:
        return len(self.trajectories)

    @property
    def nw(self) -> int:
        return len(self.incorrect_set)

    @property
    def domain(self) -> Optional[Domain]:
        return self.trajectories[0].domain if self.trajectories else None

    @property
    def rewards(self) -> List[int]:
        return [1 if t.correct else 0 for t in self.trajectories]

    @property
    def baseline_advantages(self) -> List[float]:
        return [t.baseline_advantage for t in self.trajectories]


def validate_group(group: RolloutGroup) -> RolloutGroup:
    """
    驗證群組結構，回傳 W 已推導的群組

    Raises:
        EmptyGroup: N = 0
        NonFiniteAdvantage: 任一 A^orig 非有限值
        MixedPayloadDomain: 群組內 payload 種類不一致
    """
    if group.n == 0:
        raise EmptyGroup(f"prompt {group.prompt_id!r} 沒有任何 trajectory")

    for t in group.trajectories:
        if t.baseline_advantage is None or not math.isfinite(t.baseline_advantage):
            raise NonFiniteAdvantage(
                f"prompt {group.prompt_id!r} trajectory {t.id!r} 的優勢非有限值: {t.baseline_advantage}"
            )

    domains = {t.domain for t in group.trajectories}
    if len(domains) > 1:
        raise MixedPayloadDomain(f"prompt {group.prompt_id!r} 混合了 math 與 code payload")

    return group


def with_baseline_advantages(group: RolloutGroup, advantages: Sequence[float],
                             derived: bool = True) -> RolloutGroup:
    """以新的基線優勢取代群組內的 A^orig，回傳新群組"""
    if len(advantages) != group.n:
        raise ValueError(f"優勢數量({len(advantages)})與群組大小({group.n})不匹配")
    trajectories = tuple(
        replace(t, baseline_advantage=float(a)) for t, a in zip(group.trajectories, advantages)
    )
    return RolloutGroup(group.prompt_id, trajectories, advantage_derived=derived)


@dataclass(frozen=True)
class AdjustmentRecord:
    """單一錯誤 trajectory 的調整稽核紀錄"""
    index: int
    label: str
    self_information: float
    surprisal: Optional[float]  # 只有多樣分支才有 T_i
    delta_raw: float
    delta_applied: float = 0.0
    clipped: bool = False


@dataclass(frozen=True)
class GroupStatistics:
    scale: float
    entropy: float
    nw: int
    k: int


@dataclass(frozen=True)
class ShapedGroup:
    group: RolloutGroup
    statistics: GroupStatistics
    branch: Branch
    adjustments: Tuple[AdjustmentRecord, ...]
    final_advantages: Tuple[float, ...]
    clip_hits: Tuple[bool, ...]

    @property
    def scale(self) -> float:
        return self.statistics.scale

    def adjustment_for(self, index: int) -> Optional[AdjustmentRecord]:
        for record in self.adjustments:
            if record.index == index:
                return record
        return None

    def surprisal_sum(self) -> float:
        """Σ T_i（只在多樣分支有意義，其餘回傳 0）"""
        return math.fsum(r.surprisal for r in self.adjustments if r.surprisal is not None)

    def post_clip_delta_sum(self) -> float:
        """截斷後 Σ Δ，零和偏差診斷值"""
        return math.fsum(r.delta_applied for r in self.adjustments)

    def records(self) -> List[Dict[str, Any]]:
        """攤平成每條 trajectory 一列的稽核紀錄"""
        rows = []
        surprisal_sum = self.surprisal_sum()
        delta_sum = self.post_clip_delta_sum()
        for i, t in enumerate(self.group.trajectories):
            adj = self.adjustment_for(i)
            rows.append({
                'prompt_id': self.group.prompt_id,
                'trajectory_id': t.id,
                'index': i,
                'correct': t.correct,
                'label': adj.label if adj else None,
                'baseline_advantage': t.baseline_advantage,
                'advantage_derived': self.group.advantage_derived,
                'self_information': adj.self_information if adj else None,
                'surprisal': adj.surprisal if adj else None,
                'delta_raw': adj.delta_raw if adj else 0.0,
                'delta_applied': adj.delta_applied if adj else 0.0,
                'final_advantage': self.final_advantages[i],
                'clipped': self.clip_hits[i],
                'branch': self.branch.value,
                'k': self.statistics.k,
                'nw': self.statistics.nw,
                'scale': self.statistics.scale,
                'entropy': self.statistics.entropy,
                'surprisal_sum': surprisal_sum,
                'post_clip_delta_sum': delta_sum,
            })
        return rows
