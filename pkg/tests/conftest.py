import httpx
import pytest

from absa_consensus.config import load_experiment_config
from absa_consensus.inference import InferenceClient, ResponseCache
from absa_consensus.mock import create_app
from absa_consensus.models import ReviewInstance
from tests.helpers import DECOR_RUNS, DECOR_TEXT, E2E, make_tuple


@pytest.fixture
def decor_review():
    return ReviewInstance('c1', DECOR_TEXT)


@pytest.fixture
def decor_runs():
    return [[make_tuple(*row) for row in run] for run in DECOR_RUNS]


@pytest.fixture
def mock_app():
    return create_app(E2E / 'mock_script.json')


@pytest.fixture
def mock_client_factory(tmp_path):
    """Build InferenceClients wired in-process to a mock app"""

    def factory(app, max_concurrency=4, cache=True):
        http_client = httpx.Client(transport=httpx.WSGITransport(app=app))
        return InferenceClient(
            'http://mock.local/v1',
            max_concurrency=max_concurrency,
            max_retries=0,
            timeout=10.0,
            cache=ResponseCache(tmp_path / 'cache') if cache else None,
            http_client=http_client,
        )

    return factory


@pytest.fixture
def e2e_config(tmp_path):
    return load_experiment_config(
        E2E / 'experiment.toml',
        {'output_root': tmp_path / 'out', 'cache_dir': tmp_path / 'cache'},
    )
