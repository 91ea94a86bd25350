"""
錯誤等價函數 ℰ 與錯誤分群

數學題：取最後一個 \\boxed{} 內容，整數、分數、有限小數化為最簡有理數字串，
其餘內容只做空白與括號正規化後逐字比對
程式題：依編譯 / 執行例外名稱分類，通過執行但測試失敗者標為 WrongAnswer
"""
import logging
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from config import Domain, ShapingConfig
from .errors import DomainMismatch, InconsistentRecord
from .group_model import (
    NO_ANSWER,
    WRONG_ANSWER,
    ExecutionRecord,
    Phase,
    RolloutGroup,
    Trajectory,
)

logger = logging.getLogger(__name__)

_ANSWER_TAGS = ('\\boxed{', '\\fbox{')

# 直接刪除的 LaTeX 排版指令
_DROP_TOKENS = ('\\left', '\\right', '\\!', '\\,', '\\:', '\\;', '\\ ', '$')
_TEXT_WRAPPERS = re.compile(r'\\(?:text|textbf|mathrm|mathbf|mbox)\{([^{}]*)\}')
_FRAC = re.compile(r'^(-?)\\frac\{([^{}]+)\}\{([^{}]+)\}$')
_THOUSANDS = re.compile(r'^[+-]?\d{1,3}(,\d{3})+(\.\d+)?$')
_NUMBER = re.compile(r'^[+-]?(\d+(\.\d*)?|\.\d+)$')


def extract_boxed(text: str) -> Optional[str]:
    """取出最後一個 \\boxed{...}（找不到時退回 \\fbox{...}）的內容，括號需平衡"""
    if not text:
        return None
    for tag in _ANSWER_TAGS:
        idx = text.rfind(tag)
        if idx == -1:
            continue
        start = idx + len(tag)
        balance = 1
        for i in range(start, len(text)):
            if text[i] == '{':
                balance += 1
            elif text[i] == '}':
                balance -= 1
                if balance == 0:
                    return text[start:i]
        # 括號不平衡視同沒有答案
        return None
    return None


def _strip_outer_braces(s: str) -> str:
    while len(s) >= 2 and s[0] == '{' and s[-1] == '}':
        depth = 0
        for i, ch in enumerate(s):
            if ch == '{':
                depth += 1
            elif ch == '}':
                depth -= 1
                if depth == 0 and i != len(s) - 1:
                    return s
        s = s[1:-1]
    return s


def _normalize_once(s: str) -> str:
    for token in _DROP_TOKENS:
        s = s.replace(token, '')
    s = s.replace('\\dfrac', '\\frac').replace('\\tfrac', '\\frac')
    s = s.replace('\\%', '%')
    s = _TEXT_WRAPPERS.sub(r'\1', s)
    s = ''.join(s.split())
    s = s.rstrip('.')
    return _strip_outer_braces(s)


def _parse_number(s: str) -> Optional[Fraction]:
    if _THOUSANDS.match(s):
        s = s.replace(',', '')
    m = _FRAC.match(s)
    if m:
        sign, num, den = m.groups()
        s = f"{sign}{_strip_outer_braces(num)}/{_strip_outer_braces(den)}"
    parts = s.split('/')
    if len(parts) > 2 or not all(_NUMBER.match(p) for p in parts):
        return None
    try:
        value = Fraction(parts[0])
        if len(parts) == 2:
            value /= Fraction(parts[1])
    except ZeroDivisionError:
        return None
    return value


def _format_fraction(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def normalize_answer(payload: str) -> str:
    """
    將 boxed 內容正規化為標準標籤；對自己的輸出為冪等

    數值以精確有理數比較，不使用浮點容差
    """
    s = payload
    # 重複到不動點，確保冪等
    for _ in range(16):
        nxt = _normalize_once(s)
        if nxt == s:
            break
        s = nxt
    if not s:
        return NO_ANSWER
    value = _parse_number(s)
    if value is not None:
        return _format_fraction(value)
    return s


def canonicalize_math_answer(raw_text: str) -> str:
    """數學題 ℰ：完整輸出文字 → 錯誤標籤（全函數，無答案時回傳 NO_ANSWER）"""
    payload = extract_boxed(raw_text)
    if payload is None:
        return NO_ANSWER
    return normalize_answer(payload)


def label_code_error(record: ExecutionRecord) -> str:
    """
    程式題 ℰ：編譯例外 → 例外名稱；執行例外 → 例外名稱；無例外但測試失敗 → WrongAnswer

    Raises:
        InconsistentRecord: 已通過測試的紀錄被當作錯誤送入
    """
    if record.tests_passed:
        raise InconsistentRecord('tests_passed=True 的紀錄不是錯誤 trajectory')
    if record.exception_name:
        return record.exception_name.strip()
    if record.phase == Phase.COMPILE:
        logger.debug('compile 階段沒有例外名稱，視為 WrongAnswer')
    return WRONG_ANSWER


def label_trajectory(trajectory: Trajectory, domain: Domain) -> str:
    if trajectory.domain != domain:
        raise DomainMismatch(
            f"trajectory {trajectory.id!r} 為 {trajectory.domain.value} payload，設定為 {Domain(domain).value}"
        )
    if domain == Domain.MATH:
        return canonicalize_math_answer(trajectory.raw_text)
    return label_code_error(trajectory.execution)


def error_labels(group: RolloutGroup, domain: Domain) -> List[str]:
    """W 中每個索引的錯誤標籤（依索引順序）"""
    return [label_trajectory(group.trajectories[i], domain) for i in group.incorrect_set]


@dataclass(frozen=True)
class ErrorPartition:
    """
    W 的 K 個等價類與經驗機率 p_k = |C_k| / N_w

    類別依首次出現順序排列；成員只由標籤決定
    """
    classes: Tuple[Tuple[int, ...], ...]
    labels: Tuple[str, ...]

    @property
    def k(self) -> int:
        return len(self.classes)

    @property
    def nw(self) -> int:
        return sum(len(c) for c in self.classes)

    @property
    def counts(self) -> List[int]:
        return [len(c) for c in self.classes]

    @property
    def probabilities(self) -> List[float]:
        nw = self.nw
        return [len(c) / nw for c in self.classes]

    @property
    def exact_probabilities(self) -> List[Fraction]:
        nw = self.nw
        return [Fraction(len(c), nw) for c in self.classes]

    def class_of(self) -> Dict[int, int]:
        """索引 → 類別編號"""
        return {i: k for k, members in enumerate(self.classes) for i in members}

    def label_of(self) -> Dict[int, str]:
        return {i: self.labels[k] for k, members in enumerate(self.classes) for i in members}

    @classmethod
    def from_labels(cls, indices: Sequence[int], labels: Sequence[str]) -> 'ErrorPartition':
        buckets: Dict[str, List[int]] = {}
        for i, label in zip(indices, labels):
            buckets.setdefault(label, []).append(i)
        return cls(
            classes=tuple(tuple(members) for members in buckets.values()),
            labels=tuple(buckets.keys()),
        )


def partition_errors(group: RolloutGroup, config: ShapingConfig) -> ErrorPartition:
    """將 W 依 ℰ 分成等價類；N_w = 0 時回傳空分群"""
    labels = error_labels(group, config.domain)
    partition = ErrorPartition.from_labels(group.incorrect_set, labels)
    logger.debug('prompt %r: N_w=%d K=%d', group.prompt_id, partition.nw, partition.k)
    return partition
