from typing import List, Tuple


def is_informative(group) -> bool:
    """至少一條正確且至少一條錯誤"""
    return 0 < group.nw < group.n


def dynamic_sampling_filter(groups: list) -> Tuple[List, List]:
    """
    動態採樣過濾：丟棄全對或全錯的群組（重抽由呼叫端負責）

    Returns:
        kept, dropped: 皆保持輸入順序
    """
    kept, dropped = [], []
    for group in groups:
        (kept if is_informative(group) else dropped).append(group)
    return kept, dropped
