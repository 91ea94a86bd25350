"""玩具策略梯度模擬器"""
