from pathlib import Path

from absa_consensus.models import SentimentTuple, VAPair

FIXTURES = Path(__file__).parent / 'fixtures'
E2E = FIXTURES / 'e2e'
ASQP_E2E = FIXTURES / 'asqp_e2e'

DECOR_TEXT = 'Decor is nice though service can be spotty.'
DECOR_RUNS = [
    [('Decor', 'nice', 6.92, 7.13), ('service', 'spotty', 5.53, 6.03)],
    [('Decor', 'nice', 6.80, 7.03), ('service', 'be spotty', 5.60, 6.10)],
    [('Decor', 'is nice', 6.67, 6.90), ('service', 'spotty', 5.40, 5.90)],
    [('Decor', 'nice', 7.00, 7.50), ('service', 'spotty', 5.70, 6.20)],
    [('Decor', 'is nice', 6.85, 7.10), ('service', 'spotty', 5.55, 6.05)],
]


def make_tuple(aspect, opinion, valence, arousal, category=None):
    return SentimentTuple(aspect, opinion, VAPair(valence, arousal), category)
