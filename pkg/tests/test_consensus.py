import itertools

import numpy as np
import pytest
from scipy.stats import binomtest

from absa_consensus.consensus import aggregate, aggregate_instance, bounded_mean, default_threshold
from absa_consensus.errors import DomainError, TransportError
from absa_consensus.metrics import evaluate_instances
from absa_consensus.models import PredictionRun, TaskKind, VAPair, format_decimal, tuple_key
from absa_consensus.validation import validate_run
from tests.helpers import make_tuple

ASTE = TaskKind.DIM_ASTE


@pytest.mark.parametrize('k, expected', [(1, 1), (2, 2), (3, 2), (4, 3), (5, 3), (10, 6), (15, 8)])
def test_default_threshold_is_strict_majority(k, expected):
    assert default_threshold(k) == expected


def test_default_threshold_rejects_zero_runs():
    with pytest.raises(DomainError):
        default_threshold(0)


def test_five_run_voting_example(decor_review, decor_runs):
    runs = [validate_run(run, decor_review, None, ASTE, i) for i, run in enumerate(decor_runs)]
    result = aggregate_instance(runs, ASTE)

    assert result.threshold == 3
    assert [tuple_key(t, ASTE) for t in result.tuples] == [('Decor', 'nice'), ('service', 'spotty')]
    decor, service = result.tuples
    assert decor.va.valence == pytest.approx(6.91, abs=0.01)
    assert decor.va.arousal == pytest.approx(7.22, abs=0.01)
    assert service.va.valence == pytest.approx(5.54, abs=0.01)
    assert service.va.arousal == pytest.approx(6.04, abs=0.01)
    assert [format_decimal(v) for v in (decor.va.valence, decor.va.arousal)] == ['6.91', '7.22']
    assert [format_decimal(v) for v in (service.va.valence, service.va.arousal)] == ['5.54', '6.04']
    assert result.support[('Decor', 'nice')] == 3
    assert result.support[('service', 'spotty')] == 4
    assert result.support[('Decor', 'is nice')] == 2


def test_single_run_reproduces_the_run():
    run = PredictionRun('x', 0, (make_tuple('a', 'b', 3.3, 4.4), make_tuple('c', 'd', 5, 6)))
    result = aggregate([run], default_threshold(1), ASTE)
    assert result.tuples == list(run.tuples)


@pytest.mark.parametrize('k', [3, 5, 6, 7, 10, 15])
def test_identical_runs_return_the_run_verbatim(k):
    for hundredths in range(100, 901):
        v = hundredths / 100
        run = PredictionRun('x', 0, (make_tuple('a', 'b', v, 10 - v),))
        result = aggregate([run] * k, default_threshold(k), ASTE)
        assert result.tuples == list(run.tuples)


def test_bounded_mean_stays_within_its_inputs():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        values = rng.uniform(1, 9, size=int(rng.integers(1, 16))).round(2).tolist()
        mean = bounded_mean(values)
        assert min(values) <= mean <= max(values)
        assert bounded_mean(values[::-1]) == mean
    assert bounded_mean([1.02] * 6) == 1.02


def test_threshold_above_run_count_is_rejected():
    run = PredictionRun('x', 0, ())
    with pytest.raises(DomainError):
        aggregate([run], 2, ASTE)
    with pytest.raises(DomainError):
        aggregate([run], 0, ASTE)


def test_failed_runs_lower_the_effective_k():
    t = make_tuple('a', 'b', 5, 5)
    runs = [
        PredictionRun('x', 0, (t,)),
        PredictionRun('x', 1, (t,)),
        PredictionRun('x', 2, (), failed=True, error='HTTP 500'),
        PredictionRun('x', 3, (), failed=True, error='HTTP 500'),
        PredictionRun('x', 4, ()),
    ]
    result = aggregate_instance(runs, ASTE)
    # 3 usable runs -> threshold 2
    assert result.k == 3
    assert result.threshold == 2
    assert result.tuples == [t]
    assert result.failed_runs == [2, 3]


def test_strict_mode_aborts_on_failed_runs():
    runs = [PredictionRun('x', 0, ()), PredictionRun('x', 1, (), failed=True)]
    with pytest.raises(TransportError):
        aggregate_instance(runs, ASTE, strict=True)


def test_all_runs_failed_gives_empty_prediction():
    result = aggregate_instance([PredictionRun('x', 0, (), failed=True)], ASTE)
    assert result.tuples == []
    assert result.failed_runs == [0]


def test_threshold_override_applies_when_all_runs_succeed():
    t = make_tuple('a', 'b', 5, 5)
    runs = [PredictionRun('x', 0, (t,)), PredictionRun('x', 1, ()), PredictionRun('x', 2, ())]
    assert aggregate_instance(runs, ASTE).tuples == []
    assert aggregate_instance(runs, ASTE, threshold=1).tuples == [t]


def _random_table(rng):
    pool = [(f"a{i}", f"o{j}") for i in range(3) for j in range(2)]
    k = int(rng.integers(1, 8))
    runs = []
    for index in range(k):
        chosen = rng.choice(len(pool), size=int(rng.integers(0, len(pool) + 1)), replace=False)
        tuples = tuple(
            make_tuple(*pool[c], float(rng.uniform(1, 9)), float(rng.uniform(1, 9))) for c in chosen
        )
        runs.append(PredictionRun('x', index, tuples))
    return runs


def _brute_force_counts(runs):
    counts = {}
    for run in runs:
        for t in run.tuples:
            key = (t.aspect, t.opinion)
            counts[key] = counts.get(key, 0) + 1
    return counts


def _as_mapping(result):
    return {tuple_key(t, ASTE): (t.va.valence, t.va.arousal) for t in result.tuples}


def test_voting_properties_on_random_tables():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        runs = _random_table(rng)
        k = len(runs)
        threshold = int(rng.integers(1, k + 1))
        result = aggregate(runs, threshold, ASTE)
        counts = _brute_force_counts(runs)

        assert result.support == counts
        assert sum(result.support.values()) == sum(len(r.tuples) for r in runs)
        assert set(_as_mapping(result)) == {key for key, n in counts.items() if n >= threshold}

        for t in result.tuples:
            key = tuple_key(t, ASTE)
            occurrences = [o for r in runs for o in r.tuples if tuple_key(o, ASTE) == key]
            assert min(o.va.valence for o in occurrences) <= t.va.valence <= max(o.va.valence for o in occurrences)
            assert min(o.va.arousal for o in occurrences) <= t.va.arousal <= max(o.va.arousal for o in occurrences)

        shuffled = [runs[i] for i in rng.permutation(k)]
        permuted = aggregate(shuffled, threshold, ASTE)
        assert permuted.support == result.support
        assert _as_mapping(permuted) == _as_mapping(result)

        if threshold < k:
            stricter = aggregate(runs, threshold + 1, ASTE)
            assert set(_as_mapping(stricter)) <= set(_as_mapping(result))

        identical = aggregate([runs[0]] * k, default_threshold(k), ASTE)
        assert [tuple_key(t, ASTE) for t in identical.tuples] == [tuple_key(t, ASTE) for t in runs[0].tuples]
        assert identical.tuples == list(runs[0].tuples)


def test_consensus_raises_precision_over_single_runs():
    rng = np.random.default_rng(11)
    k = 15
    single_precision, consensus_precision = [], []
    for trial in range(100):
        golds, single, voted = {}, {}, {}
        for n in range(5):
            iid = f"{trial}-{n}"
            gold = tuple(
                make_tuple(f"aspect{j}", f"opinion{j}", float(rng.uniform(2, 8)), float(rng.uniform(2, 8)))
                for j in range(3)
            )
            runs = []
            for index in range(k):
                tuples = [
                    g.with_va(VAPair(
                        float(np.clip(g.va.valence + rng.normal(0, 0.3), 1, 9)),
                        float(np.clip(g.va.arousal + rng.normal(0, 0.3), 1, 9)),
                    ))
                    for g in gold
                ]
                if rng.random() < 0.3:
                    tuples.append(make_tuple(f"spurious{index}", 'bad', 5.0, 5.0))
                runs.append(PredictionRun(iid, index, tuple(tuples)))
            golds[iid] = gold
            single[iid] = runs[0].tuples
            voted[iid] = aggregate_instance(runs, ASTE).tuples
        single_precision.append(evaluate_instances(single, golds, ASTE).c_prec)
        consensus_precision.append(evaluate_instances(voted, golds, ASTE).c_prec)

    wins = sum(c > s for c, s in zip(consensus_precision, single_precision))
    losses = sum(c < s for c, s in zip(consensus_precision, single_precision))
    assert np.mean(consensus_precision) > np.mean(single_precision)
    assert binomtest(wins, wins + losses, 0.5, alternative='greater').pvalue < 0.01


def test_brute_force_permutations_agree_for_tiny_table():
    runs = [
        PredictionRun('x', 0, (make_tuple('a', 'b', 2, 2), make_tuple('c', 'd', 4, 4))),
        PredictionRun('x', 1, (make_tuple('c', 'd', 6, 6),)),
        PredictionRun('x', 2, (make_tuple('a', 'b', 4, 4),)),
    ]
    outputs = {
        frozenset(_as_mapping(aggregate(list(order), 2, ASTE)).items())
        for order in itertools.permutations(runs)
    }
    assert outputs == {frozenset({('a', 'b'): (3.0, 3.0), ('c', 'd'): (5.0, 5.0)}.items())}
