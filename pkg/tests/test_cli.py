import json

import pytest

from absa_consensus.cli import (
    build_client,
    cell_dir,
    cmd_aggregate,
    cmd_best_k,
    cmd_evaluate,
    cmd_infer,
    cmd_run,
    cmd_stats,
    cmd_stats_data,
    cmd_whitelist,
    main,
    task_root,
)
from absa_consensus.config import load_experiment_config
from absa_consensus.dataset_io import load_predictions, load_runs, save_report
from absa_consensus.errors import ConfigError, TransportError
from absa_consensus.inference import SamplingParams
from absa_consensus.metrics import EvalReport
from absa_consensus.mock import create_app
from absa_consensus.models import TaskKind
from tests.helpers import ASQP_E2E, E2E, FIXTURES

ARTIFACTS = ('generations.jsonl', 'runs.jsonl', 'predictions.jsonl', 'support.jsonl', 'report.json', 'report.txt')


def _load_report(config, k, seed):
    return json.loads((cell_dir(config, k, seed) / 'report.json').read_text(encoding='utf-8'))


def _expected(name):
    return json.loads((E2E / name).read_text(encoding='utf-8'))


def _snapshot(config):
    root = task_root(config)
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob('*')) if p.is_file()}


def test_run_matches_hand_computed_reports(e2e_config, mock_client_factory):
    app = create_app(E2E / 'mock_script.json')
    client = mock_client_factory(app)
    summary = cmd_run(e2e_config, client)

    for seed in e2e_config.seeds:
        assert _load_report(e2e_config, 3, seed) == _expected('expected_report_k3.json')
        baseline = _load_report(e2e_config, 1, seed)
        expected = _expected('expected_report_k1.json')
        assert baseline.pop('c_f1') == pytest.approx(expected.pop('c_f1'), abs=1e-15)
        assert baseline == expected

    state = app.extensions['mock_llm']
    # 3 instances x 3 runs x 3 seeds; k=1 reuses run 0
    assert state.request_count == 27
    assert state.max_in_flight <= e2e_config.max_concurrency

    assert summary.annotations['eng-restaurant'] == {1: '', 3: '*'}
    results = (task_root(e2e_config) / 'results.txt').read_text(encoding='utf-8')
    assert '79.22' in results and '99.80*' in results
    significance = json.loads((task_root(e2e_config) / 'significance.json').read_text(encoding='utf-8'))
    assert significance['eng-restaurant']['omnibus']['test'] == 'kruskal-wallis'


def test_warm_rerun_is_offline_and_byte_identical(e2e_config, mock_client_factory):
    cmd_run(e2e_config, mock_client_factory(create_app(E2E / 'mock_script.json')))
    first = _snapshot(e2e_config)

    warm_app = create_app(E2E / 'mock_script.json')
    warm_client = mock_client_factory(warm_app)
    cmd_run(e2e_config, warm_client)

    assert warm_app.extensions['mock_llm'].request_count == 0
    assert warm_client.request_count == 0
    assert _snapshot(e2e_config) == first
    for k in e2e_config.k_values:
        for seed in e2e_config.seeds:
            assert all((cell_dir(e2e_config, k, seed) / name).exists() for name in ARTIFACTS)


def test_baseline_aggregation_reproduces_the_validated_run(e2e_config, mock_client_factory):
    cmd_infer(e2e_config, mock_client_factory(create_app(E2E / 'mock_script.json')))
    cmd_aggregate(e2e_config)

    target = cell_dir(e2e_config, 1, 0)
    runs = load_runs(target / 'runs.jsonl', TaskKind.DIM_ASTE)
    predictions = load_predictions(target / 'predictions.jsonl', TaskKind.DIM_ASTE)
    assert {iid: r[0].tuples for iid, r in runs.items()} == predictions
    # the hallucinated "waiter" tuple never survives validation
    assert all(t.aspect != 'waiter' for t in predictions['s2'])


def test_generations_omit_timing(e2e_config, mock_client_factory):
    cmd_infer(e2e_config, mock_client_factory(create_app(E2E / 'mock_script.json')))
    record = json.loads((cell_dir(e2e_config, 3, 1) / 'generations.jsonl').read_text(encoding='utf-8').splitlines()[0])
    assert set(record) == {'id', 'run', 'seed', 'text', 'failed', 'error'}
    assert record['seed'] == 3


def test_stats_need_three_seeds(e2e_config, mock_client_factory):
    e2e_config.seeds = [0, 1]
    summary = cmd_run(e2e_config, mock_client_factory(create_app(E2E / 'mock_script.json')))
    assert summary.annotations == {}
    assert not (task_root(e2e_config) / 'significance.json').exists()
    assert (task_root(e2e_config) / 'results.json').exists()


def test_strict_mode_aborts_on_failed_runs(e2e_config, mock_client_factory):
    script = json.loads((E2E / 'mock_script.json').read_text(encoding='utf-8'))
    script['responses'][0]['fail_seeds'] = [1]
    e2e_config.strict = True
    cmd_infer(e2e_config, mock_client_factory(create_app(script['responses'])))
    with pytest.raises(TransportError):
        cmd_aggregate(e2e_config)


def test_failed_runs_are_tolerated_by_default(e2e_config, mock_client_factory):
    script = json.loads((E2E / 'mock_script.json').read_text(encoding='utf-8'))
    script['responses'][1]['fail_seeds'] = [0, 3, 6]
    cmd_infer(e2e_config, mock_client_factory(create_app(script['responses'])))
    cmd_aggregate(e2e_config)

    support = [
        json.loads(line)
        for line in (cell_dir(e2e_config, 3, 0) / 'support.jsonl').read_text(encoding='utf-8').splitlines()
    ]
    s2 = next(entry for entry in support if entry['id'] == 's2')
    assert s2['failed_runs'] == [0]
    assert s2['k'] == 2 and s2['threshold'] == 2


def test_threshold_above_k_is_a_config_error(e2e_config, mock_client_factory):
    cmd_infer(e2e_config, mock_client_factory(create_app(E2E / 'mock_script.json')))
    e2e_config.threshold = 2
    with pytest.raises(ConfigError):
        cmd_aggregate(e2e_config)


def test_evaluate_user_supplied_pair(tmp_path, e2e_config, mock_client_factory):
    cmd_infer(e2e_config, mock_client_factory(create_app(E2E / 'mock_script.json')))
    cmd_aggregate(e2e_config)
    pred = cell_dir(e2e_config, 3, 0) / 'predictions.jsonl'
    out = tmp_path / 'scored' / 'mine'

    report = cmd_evaluate(e2e_config, pred, E2E / 'test.jsonl', out)
    assert report.c_f1 == 0.998046875
    assert 'cF1' in (tmp_path / 'scored' / 'mine.txt').read_text(encoding='utf-8')
    with pytest.raises(ConfigError):
        cmd_evaluate(e2e_config, pred, None)


def test_best_k_prefers_consensus(e2e_config, mock_client_factory):
    cmd_run(e2e_config, mock_client_factory(create_app(E2E / 'mock_script.json')))
    best, averages = cmd_best_k(e2e_config)
    assert best == 3
    assert set(averages) == {1, 3}


def test_stats_rerun_uses_persisted_reports(e2e_config, mock_client_factory):
    cmd_run(e2e_config, mock_client_factory(create_app(E2E / 'mock_script.json')))
    summary, reports = cmd_stats(e2e_config)
    assert reports['eng-restaurant'].gate_passed
    assert summary.cells['eng-restaurant'][3]['c_f1'] == pytest.approx(0.998046875)


def test_whitelist_from_merged_train_files(tmp_path):
    config = load_experiment_config(None, {
        'task': 'DimASQP',
        'train_paths': [FIXTURES / 'asqp' / 'train.jsonl', FIXTURES / 'asqp' / 'dev.jsonl'],
    })
    out = tmp_path / 'categories.txt'
    cmd_whitelist(config, out)
    assert out.read_text(encoding='utf-8').splitlines() == [
        'AMBIENCE#GENERAL', 'FOOD#QUALITY', 'RESTAURANT#PRICES', 'SERVICE#GENERAL',
    ]


def test_whitelist_needs_a_source():
    config = load_experiment_config(None, {'task': 'DimASQP'})
    with pytest.raises(ConfigError):
        cmd_whitelist(config, 'unused.txt')


def test_stats_data_counts():
    counts = cmd_stats_data([FIXTURES / 'asqp' / 'train.jsonl'], TaskKind.DIM_ASQP)
    assert counts == {str(FIXTURES / 'asqp' / 'train.jsonl'): {'sentences': 2, 'tuples': 3}}


def test_build_client_routes_to_the_mock(e2e_config):
    client = build_client(e2e_config)
    generations = client.sample_k('Text: The pasta was cold.', 1, _params(e2e_config))
    assert 'pasta' in generations[0].text


def _params(config):
    return SamplingParams(config.model, config.temperature, config.max_output_tokens, 0, config.seed_stride)


def test_main_runs_the_grid_hermetically(tmp_path):
    args = [
        'run', '--config', str(E2E / 'experiment.toml'),
        '--output-root', str(tmp_path / 'out'), '--cache-dir', str(tmp_path / 'cache'),
    ]
    assert main(args) == 0
    report = json.loads((tmp_path / 'out' / 'DimASTE' / 'eng-restaurant' / 'k3' / 'seed2' / 'report.json').read_text())
    assert report == _expected('expected_report_k3.json')


@pytest.mark.parametrize('args, code', [
    (['infer', '--test', 'does-not-exist.jsonl'], 2),
    (['run', '--k', '0'], 2),
])
def test_main_maps_config_errors_to_exit_codes(tmp_path, args, code):
    assert main(args + ['--output-root', str(tmp_path)]) == code


def test_main_maps_data_errors_to_exit_codes(tmp_path):
    bad = tmp_path / 'bad.jsonl'
    bad.write_text('{"ID": "a", "Text": "x"}\n{"ID": "a", "Text": "y"}\n', encoding='utf-8')
    assert main(['aggregate', '--test', str(bad), '--output-root', str(tmp_path)]) == 3


def test_main_maps_transport_errors_to_exit_codes(tmp_path):
    script = json.loads((E2E / 'mock_script.json').read_text(encoding='utf-8'))
    script['responses'][2]['fail_seeds'] = [4]
    failing = tmp_path / 'failing.json'
    failing.write_text(json.dumps(script), encoding='utf-8')
    args = [
        'run', '--config', str(E2E / 'experiment.toml'), '--mock-endpoint', str(failing), '--strict',
        '--output-root', str(tmp_path / 'out'), '--cache-dir', str(tmp_path / 'cache'),
    ]
    assert main(args) == 4


def test_main_rejects_a_missing_mock_script(tmp_path):
    args = [
        'infer', '--config', str(E2E / 'experiment.toml'), '--mock-endpoint', str(tmp_path / 'missing.json'),
        '--output-root', str(tmp_path / 'out'), '--cache-dir', str(tmp_path / 'cache'),
    ]
    assert main(args) == 2


def test_asqp_run_filters_categories_outside_the_training_whitelist(tmp_path, mock_client_factory):
    config = load_experiment_config(
        ASQP_E2E / 'experiment.toml',
        {'output_root': tmp_path / 'out', 'cache_dir': tmp_path / 'cache'},
    )
    cmd_run(config, mock_client_factory(create_app(ASQP_E2E / 'mock_script.json')))

    baseline_runs = load_runs(cell_dir(config, 1, 0) / 'runs.jsonl', TaskKind.DIM_ASQP)
    kept = [t.category for t in baseline_runs['q1'][0].tuples]
    assert kept == ['AMBIENCE#GENERAL', 'SERVICE#GENERAL']
    assert baseline_runs['q2'][0].tuples == ()

    voted = load_predictions(cell_dir(config, 3, 0) / 'predictions.jsonl', TaskKind.DIM_ASQP)
    assert [(t.aspect, t.category, t.opinion) for t in voted['q2']] == [('pasta', 'FOOD#QUALITY', 'cold')]

    baseline = _load_report(config, 1, 0)
    assert (baseline['n_pred'], baseline['n_gold']) == (2, 3)
    assert baseline['c_prec'] == 1.0
    assert baseline['c_f1'] == pytest.approx(0.8)
    consensus = _load_report(config, 3, 0)
    assert (consensus['n_pred'], consensus['n_gold']) == (3, 3)
    assert consensus['c_f1'] == 1.0


GRID_LEVELS = {1: 0.5, 5: 0.6, 10: 0.7, 15: 0.8}
GRID_SPREAD = [0.0, 0.01, -0.01, 0.005, -0.005]


def test_stats_marks_every_reference_on_a_four_by_five_grid(tmp_path):
    config = load_experiment_config(None, {
        'output_root': tmp_path / 'out', 'k_values': list(GRID_LEVELS), 'seeds': [0, 1, 2, 3, 4],
    })
    for k, level in GRID_LEVELS.items():
        for seed, offset in enumerate(GRID_SPREAD):
            score = level + offset
            save_report(EvalReport(score, score, score, 10, 10, 10 * score), cell_dir(config, k, seed) / 'report')

    summary, reports = cmd_stats(config)

    assert reports['eng-restaurant'].omnibus_test == 'anova'
    assert summary.annotations['eng-restaurant'] == {1: '', 5: '***', 10: '***†††', 15: '***†††‡‡‡'}
    results = (task_root(config) / 'results.txt').read_text(encoding='utf-8')
    assert '80.00***†††‡‡‡' in results
    assert '70.00***†††' in results
    assert '60.00***' in results
