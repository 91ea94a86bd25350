"""
EDAS 命令列工具

    python cli.py shape rollouts.jsonl --alpha 0.4 --dynamic-sampling on -o shaped.jsonl
    python cli.py analyze --before base.jsonl --after trained.jsonl --k 2,4,8
    python cli.py simulate plan.yaml --out-dir traces/
    python cli.py passk --n 32 --c 3 --k 8
"""
import argparse
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

import yaml
from pydantic import ValidationError

from config import Domain, load_experiment_plan, load_shaping_config
from core.advantage_engine import ShapingEngine
from core.analytics import OutcomeAnalyzer, outcome_from_group, pass_at_k_exact
from core.errors import EdasError
from data.rollout_log import group_to_lines, ingest, ingest_with_errors, shaped_to_lines, write_lines
from data.synthetic_rollouts import generate_log, write_log
from simulation.experiment import print_summary as print_sim_summary
from simulation.experiment import run_variants, summarize

logger = logging.getLogger('edas')

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INVALID = 2


@contextmanager
def _output(path):
    if path in (None, '-'):
        yield sys.stdout
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            yield f


def _input(path):
    return sys.stdin.buffer if path in (None, '-') else path


def _kappa(value: str) -> float:
    kappa = float(value)
    if not kappa > 1.0:
        raise argparse.ArgumentTypeError(f"kappa 必須 > 1，收到 {value}")
    return kappa


def _non_negative(value: str) -> float:
    x = float(value)
    if x < 0:
        raise argparse.ArgumentTypeError(f"必須 >= 0，收到 {value}")
    return x


def _k_list(value: str):
    try:
        ks = [int(v) for v in value.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"k 清單格式錯誤: {value}") from None
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError(f"k 必須為正整數: {value}")
    return ks


def cmd_shape(args) -> int:
    config = load_shaping_config(
        args.config, alpha=args.alpha, beta=args.beta, kappa=args.kappa, domain=args.domain,
    )
    engine = ShapingEngine.from_config(config)
    groups, errors = ingest_with_errors(_input(args.input), config.epsilon_std)
    for e in errors:
        print(f"錯誤: {e}", file=sys.stderr)

    result = engine.shape_batch(
        groups,
        dynamic_sampling=args.dynamic_sampling == 'on',
        workers=args.workers,
        follow_group_domain='domain' not in config.model_fields_set,
    )
    with _output(args.output) as out:
        for shaped in result.shaped:
            write_lines(shaped_to_lines(shaped), out)

    if result.dropped:
        ids = ', '.join(str(g.prompt_id) for g in result.dropped)
        print(f"動態採樣丟棄 {len(result.dropped)} 個群組: {ids}", file=sys.stderr)
        if args.dropped:
            with _output(args.dropped) as out:
                for group in result.dropped:
                    write_lines(group_to_lines(group), out)
    for prompt_id, message in result.failures:
        print(f"prompt {prompt_id!r} 失敗: {message}", file=sys.stderr)

    logger.info('重塑 %d 個群組，多樣群組 %d 個', len(result.shaped), result.diverse_groups)
    return EXIT_PARTIAL if errors or result.failures else EXIT_OK


def _outcomes(path):
    return [outcome_from_group(g, g.domain) for g in ingest(_input(path))]


def cmd_analyze(args) -> int:
    if args.input is None and args.before is None:
        raise EdasError('需要 input 或 --before')
    if args.before is not None and args.after is None:
        raise EdasError('--before 需要搭配 --after')
    snapshot = _outcomes(args.before if args.before is not None else args.input)
    after = _outcomes(args.after) if args.after is not None else None
    after_alt = _outcomes(args.after_alt) if args.after_alt is not None else None

    analyzer = OutcomeAnalyzer(snapshot, k_values=args.k, after=after, after_alt=after_alt)
    details = analyzer.get_problem_details()
    if args.output:
        details.to_csv(args.output, index=False, na_rep='N/A')
    result = analyzer.calculate()
    if args.report:
        payload = {k: v for k, v in result.items() if k != 'breakthrough'}
        if 'breakthrough' in result:
            payload['breakthrough'] = result['breakthrough'].as_dict()
        with _output(args.report) as out:
            json.dump(payload, out, ensure_ascii=False, indent=2, default=str)
            out.write('\n')
    analyzer.print_summary()
    return EXIT_OK


def cmd_simulate(args) -> int:
    plan = load_experiment_plan(args.config)
    traces = run_variants(plan, stop_at_threshold=args.stop_at_threshold)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for (variant, seed), trace in traces.items():
        trace.to_csv(out_dir / f"{variant}_seed{seed}.csv", index=False)
    summary = summarize(traces, threshold=plan.base.threshold, max_steps=plan.base.steps)
    summary.to_csv(out_dir / 'summary.csv', index=False)
    print_sim_summary(summary, plan.base.threshold)
    print(f"結果已儲存到 {out_dir}，共 {len(traces)} 份 trace")
    return EXIT_OK


def cmd_passk(args) -> int:
    value = pass_at_k_exact(args.n, args.c, args.k)
    print(f"Pass@{args.k} (n={args.n}, c={args.c}) = {float(value)!r} ({value})")
    return EXIT_OK


def cmd_generate(args) -> int:
    lines = generate_log(args.groups, args.size, args.seed, Domain(args.domain), args.with_advantages)
    write_log(args.output, lines)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='edas', description='Error-diversity advantage shaping')
    parser.add_argument('-v', '--verbose', action='count', default=0)
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('shape', help='重塑 rollout 紀錄中的優勢')
    p.add_argument('input', nargs='?', default='-')
    p.add_argument('--alpha', type=_non_negative)
    p.add_argument('--beta', type=_non_negative)
    p.add_argument('--kappa', type=_kappa)
    p.add_argument('--domain', choices=[d.value for d in Domain])
    p.add_argument('--dynamic-sampling', choices=['on', 'off'], default='off')
    p.add_argument('--config', help='設定檔（未提供時讀 EDAS_CONFIG）')
    p.add_argument('-o', '--output', default='-')
    p.add_argument('--dropped', help='動態採樣丟棄的群組輸出路徑')
    p.add_argument('--workers', type=int, default=1)
    p.set_defaults(func=cmd_shape)

    p = sub.add_parser('analyze', help='Pass@k、錯誤多樣性與突破分析')
    p.add_argument('input', nargs='?')
    p.add_argument('--before')
    p.add_argument('--after')
    p.add_argument('--after-alt', help='第二份訓練後快照，計算獨有突破')
    p.add_argument('--k', type=_k_list, default=[1])
    p.add_argument('-o', '--output', help='每題明細 CSV')
    p.add_argument('--report', help='JSON 報告輸出路徑')
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser('simulate', help='玩具策略模擬')
    p.add_argument('config')
    p.add_argument('--out-dir', default='traces')
    p.add_argument('--stop-at-threshold', action='store_true')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('passk', help='直接計算 Pass@k')
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--c', type=int, required=True)
    p.add_argument('--k', type=int, required=True)
    p.set_defaults(func=cmd_passk)

    p = sub.add_parser('generate', help='產生合成 rollout 紀錄')
    p.add_argument('output')
    p.add_argument('--groups', type=int, default=100)
    p.add_argument('--size', type=int, default=10)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--domain', choices=[d.value for d in Domain], default='math')
    p.add_argument('--with-advantages', action='store_true')
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"設定錯誤:\n{e}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, OSError, yaml.YAMLError) as e:
        print(f"錯誤: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == '__main__':
    sys.exit(main())
