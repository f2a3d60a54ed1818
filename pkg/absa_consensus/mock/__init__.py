"""Scripted OpenAI-compatible chat endpoint for hermetic runs."""
import json
import logging
import threading
from pathlib import Path

from flask import Flask

from absa_consensus.errors import ConfigError

logger = logging.getLogger(__name__)


class ScriptState:
    """Request bookkeeping shared by the route handlers"""

    def __init__(self, entries):
        self.entries = entries
        self.lock = threading.Lock()
        self.request_count = 0
        self.in_flight = 0
        self.max_in_flight = 0

    def enter(self):
        with self.lock:
            self.request_count += 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)

    def leave(self):
        with self.lock:
            self.in_flight -= 1

    def find(self, prompt):
        for entry in self.entries:
            if entry['match'] in prompt:
                return entry
        return None


def load_script(path):
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read mock script {path}: {e}") from e

    entries = data.get('responses') if isinstance(data, dict) else data
    if not isinstance(entries, list):
        raise ConfigError(f"Mock script {path} must hold a list of responses")
    for entry in entries:
        if not isinstance(entry, dict) or 'match' not in entry or not entry.get('outputs'):
            raise ConfigError(f"Mock script entries need 'match' and non-empty 'outputs': {entry}")
    return entries


def create_app(script):
    """Build the mock app from a script path or an already-loaded list of entries"""
    entries = load_script(script) if isinstance(script, (str, Path)) else list(script)

    app = Flask(__name__)
    app.extensions['mock_llm'] = ScriptState(entries)

    from absa_consensus.mock.routes import bp
    app.register_blueprint(bp, url_prefix='/v1')

    logger.info(f"Mock endpoint serving {len(entries)} scripted responses")
    return app
