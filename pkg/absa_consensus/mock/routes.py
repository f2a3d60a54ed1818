import time

from flask import Blueprint, current_app, jsonify, request

bp = Blueprint('mock_llm', __name__)


def _state():
    return current_app.extensions['mock_llm']


def _completion(content, model, seed):
    return {
        'id': f"mock-{seed}",
        'object': 'chat.completion',
        'created': 0,
        'model': model,
        'choices': [
            {
                'index': 0,
                'message': {'role': 'assistant', 'content': content},
                'finish_reason': 'stop',
            }
        ],
        'usage': {'prompt_tokens': 0, 'completion_tokens': 0, 'total_tokens': 0},
    }


@bp.route('/chat/completions', methods=['POST'])
def chat_completions():
    """Answer with outputs[seed % len(outputs)] of the first entry matching the prompt"""
    state = _state()
    state.enter()
    try:
        payload = request.get_json(silent=True) or {}
        messages = payload.get('messages') or []
        prompt = messages[-1].get('content', '') if messages else ''
        seed = int(payload.get('seed') or 0)
        model = payload.get('model', 'mock')

        entry = state.find(prompt)
        if entry is None:
            return jsonify(_completion('[]', model, seed))

        if entry.get('delay'):
            time.sleep(float(entry['delay']))
        if seed in entry.get('fail_seeds', []):
            return jsonify({'error': {'message': f"scripted failure for seed {seed}", 'type': 'server_error'}}), 500

        outputs = entry['outputs']
        return jsonify(_completion(outputs[seed % len(outputs)], model, seed))
    finally:
        state.leave()


@bp.route('/stats')
def stats():
    state = _state()
    with state.lock:
        return jsonify({'request_count': state.request_count, 'max_in_flight': state.max_in_flight})
