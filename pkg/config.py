import os
from enum import Enum
from pathlib import Path
from typing import List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# 環境變數：預設設定檔路徑
CONFIG_ENV_VAR = 'EDAS_CONFIG'


class Domain(str, Enum):
    MATH = 'math'
    CODE = 'code'


class Algorithm(str, Enum):
    GRPO = 'grpo'
    GRPO_EDAS = 'grpo+edas'
    DAPO_FILTER = 'dapo-filter'
    DAPO_FILTER_EDAS = 'dapo-filter+edas'
    PKPO = 'pkpo'
    ENTROPY_ADV = 'entropy-adv'

    @property
    def uses_edas(self) -> bool:
        return self in (Algorithm.GRPO_EDAS, Algorithm.DAPO_FILTER_EDAS)

    @property
    def uses_filter(self) -> bool:
        return self in (Algorithm.DAPO_FILTER, Algorithm.DAPO_FILTER_EDAS)


class ShapingConfig(BaseModel):
    """
    EDAS 優勢重塑超參數

    alpha / beta 為 0 時分別關閉多樣分支與坍縮懲罰分支
    """
    model_config = ConfigDict(frozen=True, extra='forbid')

    alpha: float = Field(0.4, ge=0.0)  # 多樣性強度
    beta: float = Field(0.2, ge=0.0)  # 坍縮懲罰
    kappa: float = Field(2.0, gt=1.0)  # 截斷邊界
    domain: Domain = Domain.MATH
    epsilon_std: float = Field(1e-8, gt=0.0)  # 基線標準差保護


class ToyTaskConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    vocabulary: List[str] = Field(default_factory=lambda: ['w0', 'w1', 'w2', 'correct'])
    correct_index: int = 3
    initial_probs: Optional[List[float]] = None

    @model_validator(mode='after')
    def _check(self):
        if len(self.vocabulary) < 2:
            raise ValueError('vocabulary 至少需要 2 個答案')
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ValueError('vocabulary 答案不可重複')
        if not 0 <= self.correct_index < len(self.vocabulary):
            raise ValueError(f'correct_index 超出範圍: {self.correct_index}')
        if self.initial_probs is not None:
            if len(self.initial_probs) != len(self.vocabulary):
                raise ValueError('initial_probs 長度必須與 vocabulary 相同')
            if any(p < 0 for p in self.initial_probs):
                raise ValueError('initial_probs 不可為負')
            if abs(sum(self.initial_probs) - 1.0) > 1e-9:
                raise ValueError('initial_probs 總和必須為 1')
        return self


class SimConfig(BaseModel):
    """玩具策略模擬設定"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    group_size: int = Field(10, ge=2)
    learning_rate: float = Field(0.1, gt=0.0)
    steps: int = Field(200, ge=1)
    algorithm: Algorithm = Algorithm.GRPO
    shaping: ShapingConfig = Field(default_factory=ShapingConfig)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    pkpo_k: int = Field(8, ge=1)
    max_resample: int = Field(8, ge=0)  # 動態採樣重抽上限
    threshold: float = Field(0.5, gt=0.0, le=1.0)  # P(correct) 目標

    @model_validator(mode='after')
    def _check(self):
        if self.algorithm == Algorithm.PKPO and self.pkpo_k > self.group_size:
            raise ValueError(f'pkpo_k ({self.pkpo_k}) 不可大於 group_size ({self.group_size})')
        if self.shaping.domain != Domain.MATH:
            raise ValueError('模擬器的答案以 \\boxed{} 文字表示，shaping.domain 必須為 math')
        return self


class ExperimentPlan(BaseModel):
    """
    模擬實驗計畫：一個任務、一組基礎設定、多個演算法變體與多個種子
    每個 (variant, seed) 產出一份 trace
    """
    model_config = ConfigDict(frozen=True, extra='forbid')

    task: ToyTaskConfig = Field(default_factory=ToyTaskConfig)
    base: SimConfig = Field(default_factory=SimConfig)
    variants: List[Algorithm] = Field(default_factory=lambda: [Algorithm.GRPO, Algorithm.GRPO_EDAS])
    seeds: List[int] = Field(default_factory=lambda: list(range(20)))

    @field_validator('seeds')
    @classmethod
    def _check_seeds(cls, seeds: List[int]) -> List[int]:
        if not seeds:
            raise ValueError('seeds 不可為空')
        if any(s < 0 or s >= 2 ** 64 for s in seeds):
            raise ValueError('seed 必須在 [0, 2^64) 範圍內')
        return seeds

    def configs(self):
        """展開成 (variant, seed, SimConfig) 列表，順序固定"""
        return [
            (variant, seed, self.base.model_copy(update={'algorithm': variant, 'seed': seed}))
            for variant in self.variants
            for seed in self.seeds
        ]


def read_config_file(path) -> dict:
    """讀取 YAML 或 JSON 設定檔（YAML 為 JSON 超集）"""
    with open(path, 'r', encoding='utf-8') as f:
        content = yaml.safe_load(f)
    if content is None:
        return {}
    if not isinstance(content, dict):
        raise ValueError(f'設定檔頂層必須為物件: {path}')
    return content


def default_config_path() -> Optional[Path]:
    value = os.environ.get(CONFIG_ENV_VAR)
    return Path(value) if value else None


def load_shaping_config(path=None, **overrides) -> ShapingConfig:
    """
    建立 ShapingConfig，優先序：overrides（CLI 參數） > 設定檔 > 內建預設

    Args:
        path: 設定檔路徑，None 時改讀 EDAS_CONFIG 環境變數
        **overrides: 值為 None 的項目會被忽略
    """
    path = path or default_config_path()
    values = {}
    if path is not None:
        content = read_config_file(path)
        values.update(content.get('shaping', content))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ShapingConfig(**values)


def load_experiment_plan(path) -> ExperimentPlan:
    return ExperimentPlan(**read_config_file(path))
