"""
Command-line entry point: infer -> aggregate -> evaluate -> stats.

Artifacts of one grid cell live under
``{output_root}/{task}/{language}-{domain}/k{K}/seed{S}/``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import httpx

from absa_consensus import reporting
from absa_consensus.config import Config, load_experiment_config
from absa_consensus.consensus import ConsensusResult, aggregate_instance
from absa_consensus.dataset_io import (
    dataset_stats,
    load_dataset,
    load_runs,
    load_whitelist,
    merge_datasets,
    save_generations,
    save_predictions,
    save_report,
    save_runs,
    save_support,
    save_whitelist,
)
from absa_consensus.errors import ConfigError, PipelineError, TransportError
from absa_consensus.inference import InferenceClient, ResponseCache, SamplingParams
from absa_consensus.metrics import evaluate
from absa_consensus.models import PredictionRun, TaskKind
from absa_consensus.parsing import parse_generation
from absa_consensus.prompts import build_prompt, load_slot_values, load_template
from absa_consensus.stats import significance_for_subtask
from absa_consensus.validation import build_category_whitelist, validate_run

logger = logging.getLogger(__name__)

MOCK_BASE_URL = 'http://mock.local/v1'


def task_root(config):
    return Path(config.output_root) / config.task.value


def cell_dir(config, k, seed):
    return task_root(config) / config.subset / f"k{k}" / f"seed{seed}"


def _cells(config):
    return [(k, seed) for k in sorted(config.k_values) for seed in config.seeds]


def _map_cells(config, fn):
    with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
        return list(pool.map(lambda cell: fn(*cell), _cells(config)))


def build_client(config, http_client=None):
    endpoint_url = config.endpoint_url
    if config.mock_endpoint is not None and http_client is None:
        from absa_consensus.mock import create_app

        app = create_app(config.mock_endpoint)
        http_client = httpx.Client(transport=httpx.WSGITransport(app=app), timeout=config.request_timeout)
        endpoint_url = MOCK_BASE_URL
        logger.info(f"Serving generations from mock script {config.mock_endpoint}")
    return InferenceClient(
        endpoint_url,
        api_key=config.api_key,
        max_concurrency=config.max_concurrency,
        max_retries=config.max_retries,
        timeout=config.request_timeout,
        cache=ResponseCache(config.cache_dir),
        http_client=http_client,
    )


def resolve_whitelist(config):
    if config.whitelist_path is not None:
        return load_whitelist(config.whitelist_path, config.domain, config.language)
    if not config.train_paths:
        raise ConfigError(f"{config.task.value} needs train_paths or whitelist_path for the category whitelist")
    train = merge_datasets([
        load_dataset(p, config.task, config.language, config.domain) for p in config.train_paths
    ])
    return build_category_whitelist(train.instances, config.domain, config.language)


def _load_test(config):
    config.validate(need_paths=('test_path',))
    return load_dataset(config.test_path, config.task, config.language, config.domain)


def _validated_run(generation, instance, wl, config):
    if generation.failed:
        return PredictionRun(instance.id, generation.run_index, (), failed=True, error=generation.error)
    report = parse_generation(generation.text, config.task)
    return validate_run(
        report.tuples, instance, wl, config.task,
        run_index=generation.run_index, allow_placeholder=config.allow_placeholder,
    )


def cmd_infer(config, client=None):
    """Sample max(k) runs per seed once; every smaller k reuses the leading runs"""
    dataset = _load_test(config)
    wl = resolve_whitelist(config) if config.task.has_category else None
    template = load_template(config.template_path)
    slots = load_slot_values(config.slots_path)[config.task]
    prompts = [
        (instance.id, build_prompt(template, instance, config.task, slots))
        for instance in dataset.instances
    ]
    client = client or build_client(config)
    max_k = max(config.k_values)
    by_id = dataset.by_id()

    for seed in config.seeds:
        params = SamplingParams(
            config.model, config.temperature, config.max_output_tokens, seed, config.seed_stride
        )
        try:
            generations = client.sample_batch(prompts, max_k, params)
        except TransportError as e:
            done = sum(len(g) for g in (e.partial or {}).values())
            logger.error(f"Seed {seed}: endpoint failed after {done} generations; cached runs survive a rerun")
            raise

        for k in sorted(config.k_values):
            subset = {iid: gens[:k] for iid, gens in generations.items()}
            runs = {
                iid: [_validated_run(g, by_id[iid], wl, config) for g in gens]
                for iid, gens in subset.items()
            }
            target = cell_dir(config, k, seed)
            save_generations(subset, target / 'generations.jsonl')
            save_runs(runs, target / 'runs.jsonl', config.task)
        logger.info(f"Seed {seed}: wrote runs for k in {sorted(config.k_values)}")


def cmd_aggregate(config):
    dataset = _load_test(config)

    def aggregate_cell(k, seed):
        if config.threshold is not None and config.threshold > k:
            raise ConfigError(f"Threshold {config.threshold} exceeds k={k}")
        target = cell_dir(config, k, seed)
        runs = load_runs(target / 'runs.jsonl', config.task)
        results = {}
        for instance in dataset.instances:
            instance_runs = runs.get(instance.id, [])
            if not instance_runs:
                results[instance.id] = ConsensusResult([], {}, 0, 0)
                continue
            results[instance.id] = aggregate_instance(
                instance_runs, config.task, threshold=config.threshold, strict=config.strict
            )
        save_predictions(dataset, {iid: r.tuples for iid, r in results.items()}, target / 'predictions.jsonl')
        save_support(results, target / 'support.jsonl', config.task)
        return results

    return _map_cells(config, aggregate_cell)


def cmd_evaluate(config, pred=None, gold=None, out=None):
    if pred is not None or gold is not None:
        if pred is None or gold is None:
            raise ConfigError('--pred and --gold must be given together')
        report = evaluate(pred, gold, config.task)
        save_report(report, Path(out) if out else Path(pred).with_name('report'))
        return report

    config.validate(need_paths=('test_path',))

    def evaluate_cell(k, seed):
        target = cell_dir(config, k, seed)
        report = evaluate(target / 'predictions.jsonl', config.test_path, config.task)
        save_report(report, target / 'report')
        return report

    return _map_cells(config, evaluate_cell)


def cmd_stats(config):
    """Significance over every subset evaluated for this task; one Holm family per task"""
    root = task_root(config)
    grid = reporting.collect_grid(root)
    summary = reporting.summarize_grid(grid)
    reports = significance_for_subtask(reporting.score_tables(grid), config.alpha, config.welch)
    reporting.annotate_summary(summary, reports)
    save_report(reports, root / 'significance')
    save_report(summary, root / 'results')
    return summary, reports


def cmd_run(config, client=None):
    cmd_infer(config, client)
    cmd_aggregate(config)
    cmd_evaluate(config)

    if len(config.k_values) >= 2 and len(config.seeds) >= 3:
        summary, _ = cmd_stats(config)
    else:
        logger.info('Skipping significance tests: they need at least two k values and three seeds')
        summary = reporting.summarize_grid(reporting.collect_grid(task_root(config)))
        save_report(summary, task_root(config) / 'results')
    return summary


def cmd_whitelist(config, out):
    wl = resolve_whitelist(config)
    save_whitelist(wl, out)
    logger.info(f"Wrote {len(wl)} categories to {out}")
    return wl


def cmd_best_k(config):
    summary = reporting.summarize_grid(reporting.collect_grid(task_root(config)))
    return reporting.select_best_k(summary)


def cmd_stats_data(paths, task):
    return {str(p): dataset_stats(load_dataset(p, task)) for p in paths}


def _common_parser():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('--config', type=Path, help='experiment TOML file')
    parent.add_argument('--task', choices=[t.value for t in TaskKind])
    parent.add_argument('--language')
    parent.add_argument('--domain')
    parent.add_argument('--k', dest='k_values', type=int, nargs='+')
    parent.add_argument('--seeds', type=int, nargs='+')
    parent.add_argument('--seed-stride', dest='seed_stride', type=int)
    parent.add_argument('--threshold', type=int)
    parent.add_argument('--strict', action='store_true', default=None)
    parent.add_argument('--model')
    parent.add_argument('--temperature', type=float)
    parent.add_argument('--endpoint-url', dest='endpoint_url')
    parent.add_argument('--max-concurrency', dest='max_concurrency', type=int)
    parent.add_argument('--mock-endpoint', dest='mock_endpoint', type=Path)
    parent.add_argument('--test', dest='test_path', type=Path)
    parent.add_argument('--train', dest='train_paths', type=Path, nargs='+')
    parent.add_argument('--whitelist', dest='whitelist_path', type=Path)
    parent.add_argument('--template', dest='template_path', type=Path)
    parent.add_argument('--slots', dest='slots_path', type=Path)
    parent.add_argument('--output-root', dest='output_root', type=Path)
    parent.add_argument('--cache-dir', dest='cache_dir', type=Path)
    parent.add_argument('--alpha', type=float)
    parent.add_argument('--welch', action='store_true', default=None)
    parent.add_argument('--log-level', dest='log_level', default=Config.LOG_LEVEL)
    parent.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    return parent


_NOT_CONFIG = {'command', 'config', 'log_level', 'verbose', 'pred', 'gold', 'out', 'paths', 'host', 'port', 'script'}


def build_parser():
    parent = _common_parser()
    parser = argparse.ArgumentParser(prog='absa-consensus', description='Self-consistency ABSA experiments')
    sub = parser.add_subparsers(dest='command', required=True)

    for name, help_text in [
        ('infer', 'sample k generations per instance and validate them'),
        ('aggregate', 'majority-vote the validated runs'),
        ('stats', 'significance tests and the results table'),
        ('run', 'the full pipeline'),
        ('best-k', 'pick k by mean cF1 over subsets'),
    ]:
        sub.add_parser(name, parents=[parent], help=help_text)

    evaluate_parser = sub.add_parser('evaluate', parents=[parent], help='score predictions against gold')
    evaluate_parser.add_argument('--pred', type=Path)
    evaluate_parser.add_argument('--gold', type=Path)
    evaluate_parser.add_argument('--out', type=Path)

    whitelist_parser = sub.add_parser('whitelist', parents=[parent], help='write the category whitelist')
    whitelist_parser.add_argument('--out', type=Path, required=True)

    data_parser = sub.add_parser('stats-data', parents=[parent], help='sentence and tuple counts')
    data_parser.add_argument('paths', type=Path, nargs='+')

    serve_parser = sub.add_parser('mock-serve', parents=[parent], help='serve a mock script over HTTP')
    serve_parser.add_argument('script', type=Path)
    serve_parser.add_argument('--host', default='127.0.0.1')
    serve_parser.add_argument('--port', type=int, default=8000)
    return parser


def _experiment_config(args):
    overrides = {key: value for key, value in vars(args).items() if key not in _NOT_CONFIG}
    return load_experiment_config(args.config, overrides)


def _dispatch(args):
    if args.command == 'mock-serve':
        from absa_consensus.mock import create_app

        create_app(args.script).run(host=args.host, port=args.port)
        return

    config = _experiment_config(args)
    if args.command == 'infer':
        cmd_infer(config)
    elif args.command == 'aggregate':
        cmd_aggregate(config)
    elif args.command == 'evaluate':
        result = cmd_evaluate(config, args.pred, args.gold, args.out)
        if not isinstance(result, list):
            print(reporting.render_eval_report(result), end='')
    elif args.command == 'stats':
        summary, _ = cmd_stats(config)
        print(reporting.render_results_table(summary), end='')
    elif args.command == 'run':
        summary = cmd_run(config)
        print(reporting.render_results_table(summary), end='')
    elif args.command == 'whitelist':
        cmd_whitelist(config, args.out)
    elif args.command == 'best-k':
        best, averages = cmd_best_k(config)
        for k, value in sorted(averages.items()):
            print(f"k={k}\tcF1={reporting.format_percent(value)}")
        print(f"best k: {best}")
    elif args.command == 'stats-data':
        for path, counts in cmd_stats_data(args.paths, config.task).items():
            print(f"{path}\t{counts['sentences']} sentences / {counts['tuples']} tuples")


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = 'DEBUG' if args.verbose else str(args.log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    try:
        _dispatch(args)
    except PipelineError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
