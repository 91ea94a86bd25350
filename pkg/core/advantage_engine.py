import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import List, Optional, Sequence, Tuple

from scipy.stats import entropy as shannon_entropy

from baselines.dynamic_sampling import dynamic_sampling_filter
from baselines.grpo_baseline import grpo_baseline_advantages
from config import Domain, ShapingConfig
from .error_partition import ErrorPartition, partition_errors
from .errors import EdasError, EmptyIncorrectSet
from .group_model import (
    AdjustmentRecord,
    Branch,
    GroupStatistics,
    RolloutGroup,
    ShapedGroup,
    validate_group,
    with_baseline_advantages,
)

logger = logging.getLogger(__name__)


def baseline_for_group(group: RolloutGroup, epsilon_std: float = 1e-8) -> RolloutGroup:
    """由正確與否推導群組相對基線優勢，並標記為 derived"""
    advantages = grpo_baseline_advantages(group.rewards, epsilon_std)
    return with_baseline_advantages(group, advantages, derived=True)


def dynamic_scale(group: RolloutGroup) -> float:
    """
    動態尺度 S：錯誤子集 A^orig 絕對值的平均

    Raises:
        EmptyIncorrectSet: N_w = 0
    """
    if group.nw == 0:
        raise EmptyIncorrectSet(f"prompt {group.prompt_id!r} 沒有錯誤 trajectory")
    return math.fsum(abs(group.trajectories[i].baseline_advantage) for i in group.incorrect_set) / group.nw


def group_statistics(partition: ErrorPartition, group: RolloutGroup) -> GroupStatistics:
    scale = dynamic_scale(group) if group.nw > 0 else 0.0
    # K <= 1 時熵為 0
    entropy = float(shannon_entropy(partition.counts)) if partition.k > 1 else 0.0
    return GroupStatistics(scale=scale, entropy=entropy, nw=group.nw, k=partition.k)


def edas_adjustments(partition: ErrorPartition, group: RolloutGroup,
                     config: ShapingConfig) -> Tuple[Branch, List[AdjustmentRecord], GroupStatistics]:
    """
    EDAS 優勢重分配（未截斷）

    - N_w <= 1：樣本不足，Δ = 0
    - N_w > 1 且 K = 1：錯誤坍縮，Δ = -beta * S
    - K > 1：T_i = (I_i - H) / ln N_w，Δ = alpha * S * T_i

    Returns:
        branch, 依 W 索引順序排列的調整紀錄, 群組統計
    """
    if partition.nw != group.nw:
        raise EdasError(
            f"分群大小({partition.nw})與群組錯誤數({group.nw})不一致，prompt {group.prompt_id!r}"
        )

    stats = group_statistics(partition, group)
    branch = Branch.for_counts(stats.nw, stats.k)
    class_of = partition.class_of()
    probabilities = partition.probabilities

    records = []
    for i in group.incorrect_set:
        k = class_of[i]
        p = probabilities[k]
        self_information = -math.log(p) if p < 1.0 else 0.0
        surprisal = None
        if branch == Branch.INSUFFICIENT:
            delta = 0.0
        elif branch == Branch.PERSEVERATION:
            delta = -config.beta * stats.scale
        else:
            surprisal = (self_information - stats.entropy) / math.log(stats.nw)
            delta = config.alpha * stats.scale * surprisal
        records.append(AdjustmentRecord(
            index=i,
            label=partition.labels[k],
            self_information=self_information,
            surprisal=surprisal,
            delta_raw=delta,
        ))

    logger.debug('prompt %r: branch=%s S=%.6g H=%.6g', group.prompt_id, branch.value, stats.scale, stats.entropy)
    return branch, records, stats


def clip_delta(baseline: float, delta: float, kappa: float) -> Tuple[float, bool]:
    """單調保持截斷：|Δ| 上限為 |A^orig| / kappa，回傳 (截斷後 Δ, 是否截斷)"""
    if delta == 0.0:
        return 0.0, False
    bound = abs(baseline) / kappa
    magnitude = abs(delta)
    if magnitude > bound:
        return math.copysign(bound, delta), True
    return delta, False


def clip_and_finalize(group: RolloutGroup, adjustments: Sequence[AdjustmentRecord], config: ShapingConfig,
                      branch: Optional[Branch] = None,
                      statistics: Optional[GroupStatistics] = None) -> ShapedGroup:
    """
    A^final_i = A^orig_i + sgn(Δ_i) * min(|Δ_i|, |A^orig_i| / kappa)，正確 trajectory 原封不動

    branch / statistics 未提供時由調整紀錄推回
    """
    if sorted(r.index for r in adjustments) != list(group.incorrect_set):
        raise EdasError(f"調整紀錄與 W 不對齊，prompt {group.prompt_id!r}")

    if statistics is None:
        counts = list(Counter(r.label for r in adjustments).values())
        scale = dynamic_scale(group) if group.nw > 0 else 0.0
        entropy = float(shannon_entropy(counts)) if len(counts) > 1 else 0.0
        statistics = GroupStatistics(scale=scale, entropy=entropy, nw=group.nw, k=len(counts))
    if branch is None:
        branch = Branch.for_counts(statistics.nw, statistics.k)

    final = list(group.baseline_advantages)
    clip_hits = [False] * group.n
    applied_records = []
    for record in adjustments:
        baseline = final[record.index]
        applied, clipped = clip_delta(baseline, record.delta_raw, config.kappa)
        if applied != 0.0:
            final[record.index] = baseline + applied
        clip_hits[record.index] = clipped
        applied_records.append(replace(record, delta_applied=applied, clipped=clipped))

    n_clipped = sum(clip_hits)
    if n_clipped:
        logger.debug('prompt %r: %d 個調整被截斷', group.prompt_id, n_clipped)

    return ShapedGroup(
        group=group,
        statistics=statistics,
        branch=branch,
        adjustments=tuple(applied_records),
        final_advantages=tuple(final),
        clip_hits=tuple(clip_hits),
    )


def shape_group(group: RolloutGroup, config: ShapingConfig) -> ShapedGroup:
    """完整流程：分群 → 動態尺度 → 分支調整 → 截斷"""
    partition = partition_errors(group, config)
    branch, records, stats = edas_adjustments(partition, group, config)
    return clip_and_finalize(group, records, config, branch=branch, statistics=stats)


@dataclass
class BatchResult:
    shaped: List[ShapedGroup] = field(default_factory=list)
    dropped: List[RolloutGroup] = field(default_factory=list)
    failures: List[Tuple[object, str]] = field(default_factory=list)  # (prompt_id, 錯誤訊息)

    @property
    def diverse_groups(self) -> int:
        return sum(1 for s in self.shaped if s.branch == Branch.DIVERSE)


def _shape_or_error(group: RolloutGroup, config: ShapingConfig, follow_group_domain: bool = False):
    # 未指定 domain 時以群組自身的 payload 決定
    if follow_group_domain and group.domain is not None and group.domain != config.domain:
        config = config.model_copy(update={'domain': group.domain})
    try:
        return shape_group(validate_group(group), config), None
    except EdasError as e:
        return None, str(e)


class ShapingEngine:
    """
    EDAS 優勢重塑引擎
    只修改錯誤 trajectory 的優勢，輸出與輸入順序一致
    """

    def __init__(self,
                 alpha: Optional[float] = None,
                 beta: Optional[float] = None,
                 kappa: Optional[float] = None,
                 domain: Optional[Domain] = None,
                 epsilon_std: Optional[float] = None,
                 config: Optional[ShapingConfig] = None):
        """
        初始化重塑引擎

        Args:
            alpha: 多樣性強度
            beta: 坍縮懲罰
            kappa: 截斷邊界
            domain: math 或 code
            epsilon_std: 基線標準差保護
            config: 配置對象，個別參數優先於其中的值
        """
        base = config or ShapingConfig()
        overrides = {
            'alpha': alpha,
            'beta': beta,
            'kappa': kappa,
            'domain': domain,
            'epsilon_std': epsilon_std,
        }
        self.config = ShapingConfig(**{
            **base.model_dump(),
            **{k: v for k, v in overrides.items() if v is not None},
        })

    @classmethod
    def from_config(cls, config: ShapingConfig, **kwargs):
        """從配置對象建立引擎，kwargs 覆蓋配置中的值"""
        return cls(config=config, **kwargs)

    def prepare(self, group: RolloutGroup, derive: bool = False) -> RolloutGroup:
        """驗證群組；derive=True 時以正確與否重新計算基線優勢"""
        if derive:
            group = baseline_for_group(group, self.config.epsilon_std)
        return validate_group(group)

    def shape(self, group: RolloutGroup) -> ShapedGroup:
        return shape_group(validate_group(group), self.config)

    def shape_batch(self, groups: Sequence[RolloutGroup], dynamic_sampling: bool = False,
                    workers: int = 1, follow_group_domain: bool = False) -> BatchResult:
        """
        批次重塑

        Args:
            groups: rollout 群組
            dynamic_sampling: 是否先丟棄全對 / 全錯群組
            workers: >1 時以多行程平行處理，輸出順序不變
            follow_group_domain: 為 True 時每個群組依自身 domain 分群，忽略 config.domain
        """
        result = BatchResult()
        if dynamic_sampling:
            groups, result.dropped = dynamic_sampling_filter(list(groups))
            if result.dropped:
                logger.info('動態採樣丟棄 %d 個群組', len(result.dropped))

        job = partial(_shape_or_error, config=self.config, follow_group_domain=follow_group_domain)
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(job, groups, chunksize=64))
        else:
            outcomes = [job(g) for g in groups]

        for group, (shaped, error) in zip(groups, outcomes):
            if error is not None:
                logger.warning('prompt %r 重塑失敗: %s', group.prompt_id, error)
                result.failures.append((group.prompt_id, error))
            else:
                result.shaped.append(shaped)
        return result
