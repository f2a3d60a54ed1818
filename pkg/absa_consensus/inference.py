"""
Stochastic generation against an OpenAI-compatible chat endpoint.

Every request is keyed by (model, prompt, temperature, seed, max tokens) and
answered from the on-disk cache when possible, so a warm rerun reproduces a
grid without touching the endpoint.
"""
from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path

import openai
from openai import OpenAI

from absa_consensus.errors import ConfigError, TransportError
from absa_consensus.utils.fs import read_file_safely, write_file_safely

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplingParams:
    model: str
    temperature: float = 0.8
    max_output_tokens: int = 512
    seed: int = 0
    seed_stride: int = 1000

    def run_seed(self, run_index):
        """Run i of experiment seed s; runs of a smaller k are a prefix of a larger k"""
        return self.seed * self.seed_stride + run_index


@dataclass
class Generation:
    instance_id: str
    run_index: int
    seed: int
    text: str = ''
    cache_hit: bool = False
    latency: float = 0.0
    failed: bool = False
    error: str | None = None

    def to_record(self):
        # latency and cache flags stay out of persisted artifacts
        return {
            'id': self.instance_id,
            'run': self.run_index,
            'seed': self.seed,
            'text': self.text,
            'failed': self.failed,
            'error': self.error,
        }


class ResponseCache:
    """Content-addressed store of raw generation texts, sharded by key prefix"""

    def __init__(self, root):
        self.root = Path(root)

    @staticmethod
    def make_key(model, prompt, temperature, seed, max_tokens):
        payload = json.dumps(
            {
                'model': model,
                'prompt': prompt,
                'temperature': temperature,
                'seed': seed,
                'max_tokens': max_tokens,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()

    def path_for(self, key):
        return self.root / key[:2] / f"{key}.json"

    def get(self, key):
        path = self.path_for(key)
        if not path.exists():
            return None
        result = read_file_safely(path)
        if not result['success']:
            return None
        try:
            return json.loads(result['content'])['text']
        except (json.JSONDecodeError, KeyError, TypeError):
            logger.warning(f"Ignoring corrupt cache entry {path}")
            return None

    def put(self, key, text):
        result = write_file_safely(self.path_for(key), json.dumps({'text': text}, ensure_ascii=False))
        if not result['success']:
            logger.warning(f"Could not cache generation {key}: {result['error']}")


class InferenceClient:
    def __init__(self, endpoint_url, api_key='EMPTY', max_concurrency=16, max_retries=3,
                 timeout=120.0, cache=None, http_client=None):
        if max_concurrency < 1:
            raise ConfigError(f"max_concurrency must be at least 1, got {max_concurrency}")
        self.max_concurrency = max_concurrency
        self.cache = cache
        # the SDK retries connection errors, 429 and 5xx with exponential backoff
        self._client = OpenAI(
            base_url=endpoint_url,
            api_key=api_key,
            max_retries=max_retries,
            timeout=timeout,
            http_client=http_client,
        )
        self._lock = threading.Lock()
        self.request_count = 0
        self.cache_hits = 0

    def _complete(self, prompt, params, seed):
        response = self._client.chat.completions.create(
            model=params.model,
            messages=[{'role': 'user', 'content': prompt}],
            temperature=params.temperature,
            seed=seed,
            max_tokens=params.max_output_tokens,
        )
        if not response.choices:
            return ''
        return response.choices[0].message.content or ''

    def generate(self, prompt, params, run_index, instance_id=''):
        seed = params.run_seed(run_index)
        key = None
        if self.cache is not None:
            key = ResponseCache.make_key(
                params.model, prompt, params.temperature, seed, params.max_output_tokens
            )
            text = self.cache.get(key)
            if text is not None:
                with self._lock:
                    self.cache_hits += 1
                return Generation(instance_id, run_index, seed, text, cache_hit=True)

        with self._lock:
            self.request_count += 1
        start = time.perf_counter()
        try:
            text = self._complete(prompt, params, seed)
        except openai.APITimeoutError:
            # a single slow request only costs its own run
            logger.warning(f"Run {run_index} of {instance_id} timed out")
            return Generation(
                instance_id, run_index, seed, latency=time.perf_counter() - start,
                failed=True, error='timeout',
            )
        except openai.APIConnectionError as e:
            raise TransportError(f"Endpoint unreachable for {instance_id} run {run_index}: {e}") from e
        except openai.APIStatusError as e:
            logger.warning(f"Run {run_index} of {instance_id} failed with HTTP {e.status_code}")
            return Generation(
                instance_id, run_index, seed, latency=time.perf_counter() - start,
                failed=True, error=f"HTTP {e.status_code}",
            )
        latency = time.perf_counter() - start

        if key is not None:
            self.cache.put(key, text)
        return Generation(instance_id, run_index, seed, text, latency=latency)

    def sample_k(self, prompt, k, params, instance_id=''):
        return self.sample_batch([(instance_id, prompt)], k, params)[instance_id]

    def sample_batch(self, requests, k, params):
        """
        Draw k generations for every (instance_id, prompt) pair.

        Returns a dict id -> list of Generation ordered by run index. An
        unreachable endpoint aborts the batch with a TransportError whose
        ``partial`` holds every generation finished so far.
        """
        if k < 1:
            raise ConfigError(f"k must be at least 1, got {k}")

        results = {instance_id: [None] * k for instance_id, _ in requests}
        start = time.perf_counter()
        hits_before = self.cache_hits
        requests_before = self.request_count

        with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
            futures = {
                pool.submit(self.generate, prompt, params, run_index, instance_id): (instance_id, run_index)
                for instance_id, prompt in requests
                for run_index in range(k)
            }
            done, pending = wait(futures, return_when=FIRST_EXCEPTION)
            for future in pending:
                future.cancel()

            error = None
            for future in done:
                exc = future.exception()
                if exc is not None:
                    error = error or exc
                    continue
                instance_id, run_index = futures[future]
                results[instance_id][run_index] = future.result()

        if error is not None:
            if not isinstance(error, TransportError):
                raise error
            partial = {
                iid: [g for g in gens if g is not None] for iid, gens in results.items()
            }
            raise TransportError(str(error), partial=partial) from error

        elapsed = time.perf_counter() - start
        latencies = [g.latency for gens in results.values() for g in gens if not g.cache_hit]
        mean_latency = sum(latencies) / len(latencies) if latencies else 0.0
        logger.info(
            f"Sampled {len(requests)} instances x {k} runs in {elapsed:.2f}s "
            f"({elapsed / max(1, len(requests)):.3f}s per example, "
            f"{self.request_count - requests_before} requests, {self.cache_hits - hits_before} cache hits, "
            f"mean latency {mean_latency:.3f}s)"
        )
        return results
