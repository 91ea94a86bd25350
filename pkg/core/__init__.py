"""
EDAS 核心模組

包含群組資料模型、錯誤分群、優勢重塑引擎與分析工具
"""

from .advantage_engine import ShapingEngine, shape_group
from .analytics import OutcomeAnalyzer, ProblemOutcome
from .error_partition import ErrorPartition, partition_errors
from .group_model import RolloutGroup, ShapedGroup, Trajectory, validate_group
from config import ShapingConfig

__all__ = [
    'ShapingEngine', 'shape_group', 'OutcomeAnalyzer', 'ProblemOutcome',
    'ErrorPartition', 'partition_errors', 'RolloutGroup', 'ShapedGroup',
    'Trajectory', 'validate_group', 'ShapingConfig',
]
