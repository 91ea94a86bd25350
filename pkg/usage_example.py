from config import Algorithm, ShapingConfig, SimConfig
from core.advantage_engine import ShapingEngine
from core.analytics import OutcomeAnalyzer, outcome_from_group
from data.rollout_log import ingest
from data.synthetic_rollouts import generate_log, write_log
from simulation.experiment import diversity_dominance, print_summary, run_experiment, smooth, summarize
from simulation.toy_policy import perseveration_task


def run_log_shaping(log_file: str = 'output/rollouts.jsonl', config: ShapingConfig = None, dynamic_sampling: bool = True):
    """
    讀入 rollout 紀錄並重塑優勢

    Args:
        log_file: rollout 紀錄路徑
        config: ShapingConfig 配置
        dynamic_sampling: 是否先丟棄全對 / 全錯群組
    """
    cfg = config or ShapingConfig()
    engine = ShapingEngine.from_config(cfg)
    groups = ingest(log_file, cfg.epsilon_std)
    result = engine.shape_batch(groups, dynamic_sampling=dynamic_sampling)

    print(f"群組數量: {len(groups)}")
    print(f"重塑: {len(result.shaped)}")
    print(f"丟棄: {len(result.dropped)}")
    print(f"多樣群組: {result.diverse_groups}")

    clipped = sum(sum(s.clip_hits) for s in result.shaped)
    print(f"截斷次數: {clipped}")

    analyzer = OutcomeAnalyzer([outcome_from_group(g, cfg.domain) for g in groups], k_values=(1, 4, 8))
    analyzer.print_summary()
    return result


def run_perseveration_demo(seeds=range(5), learning_rate: float = 0.002, steps: int = 3000):
    """錯誤坍縮玩具情境：比較 grpo 與 grpo+edas 達到 P(correct) >= 0.5 的步數"""
    task = perseveration_task()
    traces = {}
    for algorithm in (Algorithm.GRPO, Algorithm.GRPO_EDAS):
        for seed in seeds:
            config = SimConfig(learning_rate=learning_rate, steps=steps, algorithm=algorithm, seed=seed)
            traces[(algorithm.value, seed)] = run_experiment(config, task, stop_at_threshold=True)

    summary = summarize(traces, threshold=0.5, max_steps=steps)
    print_summary(summary, 0.5)

    for seed in seeds:
        dominance = diversity_dominance(traces[('grpo+edas', seed)], traces[('grpo', seed)])
        curve = smooth(traces[('grpo+edas', seed)]['unique_wrong'], factor=0.9)
        print(f"seed {seed}: 相異錯誤數不少於 grpo 的步數比例 {dominance:.1%}，"
              f"平滑後末值 {curve.iloc[-1]:.2f}")
    return traces


if __name__ == "__main__":
    write_log('output/rollouts.jsonl', generate_log(num_groups=200, seed=0))
    run_log_shaping('output/rollouts.jsonl')
    run_perseveration_demo()
