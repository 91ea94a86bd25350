"""
Rollout 紀錄檔讀寫

每行一個 JSON 物件（UTF-8），一條 trajectory 一行；同一 prompt_id 的行可不連續
浮點數以 json 的最短來回表示輸出，重新讀入後數值完全相同
"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, IO, Iterable, Iterator, List, Optional, Tuple, Union

from baselines.grpo_baseline import grpo_baseline_advantages
from config import Domain
from core.errors import EdasError, InconsistentGroup, ParseError
from core.group_model import ExecutionRecord, RolloutGroup, ShapedGroup, Trajectory

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ('prompt_id', 'trajectory_id', 'domain', 'correct')
LogSource = Union[str, Path, Iterable[str], Iterable[bytes]]


def _open_lines(source) -> Tuple[Iterable[Union[str, bytes]], Optional[str], Optional[IO]]:
    """檔案以位元組讀入，逐行解碼，壞的 UTF-8 只影響該行"""
    if isinstance(source, (str, Path)):
        f = open(source, 'rb')
        return f, str(source), f
    return source, getattr(source, 'name', None), None


def _decode(line: Union[str, bytes], line_no: int, source: Optional[str]) -> str:
    if isinstance(line, str):
        return line
    try:
        return line.decode('utf-8')
    except UnicodeDecodeError as e:
        raise ParseError(line_no, f"UTF-8 解碼失敗（位元組 {e.start}）", source) from None


def parse_line(line: str, line_no: int, source: Optional[str] = None) -> Tuple[Any, Domain, Trajectory]:
    """
    解析一行紀錄

    Returns:
        (prompt_id, domain, trajectory)；缺少 baseline_advantage 時以 NaN 暫代
    Raises:
        ParseError: 格式錯誤，附行號
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(line_no, f"JSON 格式錯誤: {e.msg}", source) from None
    if not isinstance(obj, dict):
        raise ParseError(line_no, "每行必須是 JSON 物件", source)
    missing = [k for k in REQUIRED_FIELDS if k not in obj]
    if missing:
        raise ParseError(line_no, f"缺少欄位: {', '.join(missing)}", source)
    if isinstance(obj['prompt_id'], bool) or not isinstance(obj['prompt_id'], (str, int)):
        raise ParseError(line_no, "prompt_id 必須是字串或整數", source)
    if not isinstance(obj['correct'], bool):
        raise ParseError(line_no, "correct 必須是布林值", source)

    try:
        domain = Domain(obj['domain'])
    except ValueError:
        raise ParseError(line_no, f"未知 domain: {obj['domain']!r}", source) from None

    # 缺少或為 null 時以 NaN 暫代，由 _assemble 推導
    advantage = obj.get('baseline_advantage')
    if advantage is None:
        advantage = math.nan
    elif isinstance(advantage, bool) or not isinstance(advantage, (int, float)):
        raise ParseError(line_no, "baseline_advantage 必須是數值", source)
    elif not math.isfinite(advantage):
        raise ParseError(line_no, f"baseline_advantage 非有限值: {advantage}", source)

    try:
        if domain == Domain.MATH:
            if not isinstance(obj.get('raw_text'), str):
                raise ParseError(line_no, "math 紀錄需要字串欄位 raw_text", source)
            trajectory = Trajectory(obj['trajectory_id'], obj['correct'], float(advantage), raw_text=obj['raw_text'])
        else:
            record = ExecutionRecord(
                phase=obj.get('phase', 'run'),
                exception_name=obj.get('exception_name'),
                tests_passed=bool(obj.get('tests_passed', obj['correct'])),
            )
            trajectory = Trajectory(obj['trajectory_id'], obj['correct'], float(advantage), execution=record)
    except ParseError:
        raise
    except (EdasError, ValueError) as e:
        raise ParseError(line_no, str(e), source) from None
    return obj['prompt_id'], domain, trajectory


def _assemble(prompt_id, domain_set, trajectories: List[Trajectory], epsilon_std: float) -> RolloutGroup:
    if len(domain_set) > 1:
        raise InconsistentGroup(f"prompt {prompt_id!r} 混合了多個 domain")
    if any(math.isnan(t.baseline_advantage) for t in trajectories):
        if not all(math.isnan(t.baseline_advantage) for t in trajectories):
            logger.warning('prompt %r 只有部分 trajectory 提供優勢，整組改以正確與否重新推導', prompt_id)
        advantages = grpo_baseline_advantages([1 if t.correct else 0 for t in trajectories], epsilon_std)
        trajectories = [
            Trajectory(t.id, t.correct, a, raw_text=t.raw_text, execution=t.execution, action=t.action)
            for t, a in zip(trajectories, advantages)
        ]
        return RolloutGroup(prompt_id, trajectories, advantage_derived=True)
    return RolloutGroup(prompt_id, trajectories)


def ingest_with_errors(source: LogSource, epsilon_std: float = 1e-8) -> Tuple[List[RolloutGroup], List[EdasError]]:
    """
    寬鬆讀取：壞行與不一致群組收集成錯誤列表，其餘照常組裝

    群組依 prompt_id 首次出現順序排列
    """
    lines, name, handle = _open_lines(source)
    order: Dict[Any, List[Trajectory]] = {}
    domains: Dict[Any, set] = {}
    errors: List[EdasError] = []
    try:
        for line_no, line in enumerate(lines, start=1):
            try:
                line = _decode(line, line_no, name)
                if not line.strip():
                    continue
                prompt_id, domain, trajectory = parse_line(line, line_no, name)
            except ParseError as e:
                errors.append(e)
                continue
            order.setdefault(prompt_id, []).append(trajectory)
            domains.setdefault(prompt_id, set()).add(domain)
    finally:
        if handle is not None:
            handle.close()

    groups = []
    for prompt_id, trajectories in order.items():
        try:
            groups.append(_assemble(prompt_id, domains[prompt_id], trajectories, epsilon_std))
        except EdasError as e:
            errors.append(e)
    logger.info('讀入 %d 個群組，%d 個錯誤', len(groups), len(errors))
    return groups, errors


def ingest(source: LogSource, epsilon_std: float = 1e-8) -> List[RolloutGroup]:
    """
    讀取 rollout 紀錄並依 prompt_id 組成群組；群組缺少優勢時以群組相對估計器推導

    Raises:
        ParseError: 第一個格式錯誤的行
        InconsistentGroup: 同一 prompt_id 下混合 domain
    """
    groups, errors = ingest_with_errors(source, epsilon_std)
    if errors:
        raise errors[0]
    return groups


def trajectory_payload(trajectory: Trajectory) -> Dict[str, Any]:
    if trajectory.raw_text is not None:
        return {'domain': Domain.MATH.value, 'raw_text': trajectory.raw_text}
    record = trajectory.execution
    return {
        'domain': Domain.CODE.value,
        'phase': record.phase.value,
        'exception_name': record.exception_name,
        'tests_passed': record.tests_passed,
    }


def group_to_lines(group: RolloutGroup) -> Iterator[Dict[str, Any]]:
    for t in group.trajectories:
        yield {
            'prompt_id': group.prompt_id,
            'trajectory_id': t.id,
            **trajectory_payload(t),
            'correct': t.correct,
            'baseline_advantage': t.baseline_advantage,
        }


def shaped_to_lines(shaped: ShapedGroup) -> Iterator[Dict[str, Any]]:
    """重塑結果：每條 trajectory 一筆，保留 payload 以便重新讀入"""
    for t, row in zip(shaped.group.trajectories, shaped.records()):
        yield {**trajectory_payload(t), **row}


def write_lines(records: Iterable[Dict[str, Any]], stream: IO[str]) -> int:
    count = 0
    for record in records:
        stream.write(json.dumps(record, ensure_ascii=False, allow_nan=False) + '\n')
        count += 1
    return count
