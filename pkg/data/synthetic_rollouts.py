"""合成 rollout 紀錄，用於 round-trip 測試與示範"""
import json
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from config import Domain

_CODE_ERRORS = ('SyntaxError', 'TypeError', 'IndexError', 'NameError', None)


def generate_log(num_groups: int = 100, group_size: int = 10, seed: int = 0,
                 domain: Domain = Domain.MATH, with_advantages: bool = False) -> List[Dict[str, Any]]:
    """
    產生合成紀錄

    Args:
        num_groups: prompt 數
        group_size: 每個 prompt 的 rollout 數
        seed: 隨機種子
        domain: math 或 code
        with_advantages: True 時直接寫入隨機基線優勢（正確為正、錯誤為負），否則留空讓讀取端推導
    """
    rng = np.random.default_rng(seed)
    lines = []
    for g in range(num_groups):
        pass_rate = rng.uniform(0.0, 1.0)
        # 每題的錯誤答案池大小不同，讓 K 有大有小
        pool = int(rng.integers(1, 5))
        for t in range(group_size):
            correct = bool(rng.random() < pass_rate)
            line: Dict[str, Any] = {
                'prompt_id': f'p{g:05d}',
                'trajectory_id': f'p{g:05d}-{t}',
                'domain': Domain(domain).value,
                'correct': correct,
            }
            if Domain(domain) == Domain.MATH:
                if correct:
                    line['raw_text'] = 'so the answer is \\boxed{42}.'
                elif rng.random() < 0.1:
                    line['raw_text'] = 'I could not finish.'
                else:
                    line['raw_text'] = f'thus \\boxed{{{int(rng.integers(0, pool)) + 1}}}'
            else:
                if correct:
                    line.update(phase='run', exception_name=None, tests_passed=True)
                else:
                    name = _CODE_ERRORS[int(rng.integers(0, min(pool + 1, len(_CODE_ERRORS))))]
                    phase = 'compile' if name == 'SyntaxError' else 'run'
                    line.update(phase=phase, exception_name=name, tests_passed=False)
            if with_advantages:
                magnitude = float(rng.uniform(0.01, 2.0))
                line['baseline_advantage'] = magnitude if correct else -magnitude
            lines.append(line)
    return lines


def write_log(path, lines: List[Dict[str, Any]]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for line in lines:
            f.write(json.dumps(line, ensure_ascii=False) + '\n')
    print(f"結果已儲存到 {path}，共 {len(lines)} 筆")
