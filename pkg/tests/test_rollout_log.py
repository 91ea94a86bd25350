import io
import json
import math

import pytest

from config import ShapingConfig
from core.advantage_engine import shape_group
from core.errors import InconsistentGroup, ParseError
from data.rollout_log import group_to_lines, ingest, ingest_with_errors, parse_line, shaped_to_lines, write_lines
from data.synthetic_rollouts import generate_log


def _jsonl(records):
    return io.StringIO(''.join(json.dumps(r) + '\n' for r in records))


def _math(prompt_id, tid, correct, answer='1', advantage=None):
    record = {'prompt_id': prompt_id, 'trajectory_id': tid, 'domain': 'math',
              'raw_text': f'\\boxed{{{answer}}}', 'correct': correct}
    if advantage is not None:
        record['baseline_advantage'] = advantage
    return record


class TestParseLine:
    def test_code_record(self):
        line = json.dumps({'prompt_id': 3, 'trajectory_id': 'a', 'domain': 'code', 'correct': False,
                           'phase': 'compile', 'exception_name': 'SyntaxError', 'tests_passed': False,
                           'baseline_advantage': -0.5})
        prompt_id, _, trajectory = parse_line(line, 1)
        assert prompt_id == 3
        assert trajectory.execution.exception_name == 'SyntaxError'
        assert trajectory.baseline_advantage == -0.5

    @pytest.mark.parametrize('line', [
        '{not json',
        '[1, 2]',
        '{"prompt_id": "p", "domain": "math", "correct": true}',
        '{"prompt_id": "p", "trajectory_id": 1, "domain": "chem", "correct": true}',
        '{"prompt_id": "p", "trajectory_id": 1, "domain": "math", "correct": "yes", "raw_text": ""}',
        '{"prompt_id": "p", "trajectory_id": 1, "domain": "math", "correct": true}',
        '{"prompt_id": "p", "trajectory_id": 1, "domain": "math", "correct": true, "raw_text": "", '
        '"baseline_advantage": "high"}',
    ])
    def test_malformed(self, line):
        with pytest.raises(ParseError) as excinfo:
            parse_line(line, 7)
        assert excinfo.value.line_no == 7
        assert 'line 7' in str(excinfo.value)

    @pytest.mark.parametrize('token', ['NaN', 'Infinity', '-Infinity'])
    def test_non_finite_advantage(self, token):
        line = ('{"prompt_id": "p", "trajectory_id": 0, "domain": "math", "raw_text": "x", '
                f'"correct": false, "baseline_advantage": {token}}}')
        with pytest.raises(ParseError) as excinfo:
            parse_line(line, 1)
        assert excinfo.value.line_no == 1

    def test_null_advantage_is_missing(self):
        line = ('{"prompt_id": "p", "trajectory_id": 0, "domain": "math", "raw_text": "x", '
                '"correct": false, "baseline_advantage": null}')
        _, _, trajectory = parse_line(line, 1)
        assert math.isnan(trajectory.baseline_advantage)


class TestIngest:
    def test_groups_by_prompt(self):
        records = [_math(p, f'{p}-{i}', i % 3 == 0, advantage=0.1) for i in range(10) for p in ('a', 'b')]
        groups = ingest(_jsonl(records))
        assert [g.prompt_id for g in groups] == ['a', 'b']
        assert [g.n for g in groups] == [10, 10]
        assert [t.id for t in groups[0].trajectories] == [f'a-{i}' for i in range(10)]

    def test_derived_advantages(self):
        records = [_math('p', i, i == 0) for i in range(4)]
        group = ingest(_jsonl(records))[0]
        assert group.advantage_derived
        assert group.baseline_advantages == pytest.approx([1.73205, -0.57735, -0.57735, -0.57735], abs=1e-5)

    def test_mixed_domains(self):
        records = [
            _math('p', 0, False),
            {'prompt_id': 'p', 'trajectory_id': 1, 'domain': 'code', 'correct': False},
        ]
        with pytest.raises(InconsistentGroup):
            ingest(_jsonl(records))

    def test_lenient_collects_errors(self):
        stream = io.StringIO(json.dumps(_math('p', 0, True)) + '\n{oops\n\n' + json.dumps(_math('p', 1, False)) + '\n')
        groups, errors = ingest_with_errors(stream)
        assert len(groups) == 1 and groups[0].n == 2
        assert [e.line_no for e in errors] == [2]

    def test_non_finite_advantage_not_rederived(self):
        lines = [json.dumps(_math('p', 0, True, advantage=1.0)),
                 json.dumps(_math('p', 1, False, advantage=-1.0)).replace('-1.0', 'NaN')]
        groups, errors = ingest_with_errors(io.StringIO('\n'.join(lines) + '\n'))
        assert [e.line_no for e in errors] == [2]
        assert len(groups) == 1 and groups[0].n == 1
        assert not groups[0].advantage_derived

    def test_invalid_utf8_line(self, tmp_path):
        path = tmp_path / 'rollouts.jsonl'
        path.write_bytes(
            json.dumps(_math('p', 0, True)).encode('utf-8') + b'\n'
            + b'\xff\xfe\n'
            + json.dumps(_math('p', 1, False)).encode('utf-8') + b'\n'
        )
        groups, errors = ingest_with_errors(path)
        assert [e.line_no for e in errors] == [2]
        assert ':2' in str(errors[0])
        assert [t.id for t in groups[0].trajectories] == [0, 1]

    def test_strict_raises_first_error(self):
        with pytest.raises(ParseError):
            ingest(io.StringIO('{oops\n'))


class TestWriteBack:
    def test_group_round_trip(self):
        lines = generate_log(num_groups=1000, group_size=10, seed=3, with_advantages=True)
        groups = ingest(_jsonl(lines))
        buffer = io.StringIO()
        for group in groups:
            write_lines(group_to_lines(group), buffer)
        buffer.seek(0)
        assert ingest(buffer) == groups

    def test_shaped_lines_reingest(self):
        groups = ingest(_jsonl(generate_log(num_groups=50, seed=1, domain='code', with_advantages=True)))
        buffer = io.StringIO()
        shaped = [shape_group(g, ShapingConfig(domain='code')) for g in groups]
        for s in shaped:
            write_lines(shaped_to_lines(s), buffer)
        buffer.seek(0)
        again = [shape_group(g, ShapingConfig(domain='code')) for g in ingest(buffer)]
        assert [s.final_advantages for s in again] == [s.final_advantages for s in shaped]

    def test_refuses_non_finite(self):
        with pytest.raises(ValueError):
            write_lines([{'x': math.nan}], io.StringIO())
