"""
Utility helper functions for the CAMERA accident-anticipation pipeline
"""
import hashlib
import html
import logging
import sys
from pathlib import Path
from typing import Optional, Union

import torch

try:
    import markdown
    MARKDOWN_AVAILABLE = True
except ImportError:
    MARKDOWN_AVAILABLE = False
    print("Warning: markdown library not available. Install with: pip install markdown", file=sys.stderr)

LOG_FORMAT = '%(levelname)s %(name)s: %(message)s'


def configure_logging(verbose: bool = False, level: Optional[str] = None):
    """Configure the root logger once; --verbose wins over the configured level"""
    resolved = logging.DEBUG if verbose else getattr(logging, (level or 'INFO').upper(), logging.INFO)
    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
    root.setLevel(resolved)


def configure_determinism(threads: int = 1):
    """Pin torch to a fixed thread count and deterministic kernels"""
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(True)
    logging.getLogger(__name__).debug(f"Determinism configured with {threads} thread(s)")


def file_checksum(path: Union[str, Path]) -> str:
    """SHA-256 hex digest of a file"""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def convert_markdown_to_html(text):
    """Convert a Markdown report (with tables) to a standalone HTML page"""
    if not text:
        return text
    if MARKDOWN_AVAILABLE:
        body = markdown.markdown(text, extensions=['tables'])
    else:
        # Fallback if markdown library not available
        body = f'<pre>{html.escape(text)}</pre>'
    return f'<!DOCTYPE html>\n<html>\n<head><meta charset="utf-8"></head>\n<body>\n{body}\n</body>\n</html>\n'


def format_metric(value: Optional[float], digits: int = 4) -> str:
    """Fixed-precision metric, '-' when undefined"""
    return '-' if value is None else f'{value:.{digits}f}'
