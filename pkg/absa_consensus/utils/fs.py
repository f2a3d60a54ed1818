import os
import re
import tempfile
import logging
from pathlib import Path

logger = logging.getLogger(__name__)


def sanitize_filename(filename):
    """
    Sanitize a filename to be safe for filesystem use.
    Keeps alphanumerics, dash, underscore and period.
    """
    if not filename:
        return "unnamed"

    sanitized = re.sub(r'[^\w\-_\.]', '_', str(filename))
    sanitized = sanitized.strip('. ')
    if not sanitized:
        return "unnamed"

    if len(sanitized) > 200:
        sanitized = sanitized[:200]
    return sanitized


def write_file_safely(file_path, content, encoding='utf-8'):
    """
    Atomically write content to a file.

    The content goes to a temporary sibling first and is then renamed over
    the target, so readers never observe a half-written file.

    Args:
        file_path: Path to the file
        content: str or bytes to write
        encoding: Text encoding (ignored for bytes)

    Returns:
        dict with success status and any error message
    """
    path_obj = Path(file_path)
    tmp_name = None
    try:
        path_obj.parent.mkdir(parents=True, exist_ok=True)

        data = content.encode(encoding) if isinstance(content, str) else content
        fd, tmp_name = tempfile.mkstemp(dir=path_obj.parent, prefix=f".{path_obj.name}.", suffix='.tmp')
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp_name, path_obj)

        return {'success': True}

    except Exception as e:
        logger.error(f"Failed to write file {file_path}: {str(e)}")
        if tmp_name and os.path.exists(tmp_name):
            os.unlink(tmp_name)
        return {'success': False, 'error': str(e)}


def read_file_safely(file_path, encoding='utf-8'):
    """
    Read a text file, replacing undecodable bytes.

    Returns:
        dict with success status, content and any error message
    """
    try:
        path_obj = Path(file_path)
        if not path_obj.exists():
            return {'success': False, 'error': 'File does not exist'}
        if not path_obj.is_file():
            return {'success': False, 'error': 'Path is not a file'}

        with open(path_obj, 'r', encoding=encoding, errors='replace') as f:
            content = f.read()
        return {'success': True, 'content': content}

    except Exception as e:
        logger.error(f"Failed to read file {file_path}: {str(e)}")
        return {'success': False, 'error': str(e)}
