"""
Export manager for the CAMERA accident-anticipation pipeline.
Writes evaluation reports, sweep tables, risk traces, alert streams and
ablation reports as JSON, CSV, JSON lines, Markdown and HTML.
"""

import csv
import json
import logging
import math
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from .utils.helpers import convert_markdown_to_html

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ExportManager:
    """
    Manager class for writing run artifacts.

    Every writer produces byte-identical output for identical input:
    keys are sorted, floats use their shortest round-trip representation,
    and line endings are always '\\n'.
    """

    def __init__(self):
        """Initialize the export manager."""
        pass

    def write_json(self, path: PathLike, data: Any) -> Path:
        """
        Write a JSON document.

        Args:
            path: Destination file
            data: JSON-serializable data (NaN and infinities become null)

        Returns:
            The written path
        """
        path = self._prepare(path)
        path.write_text(json.dumps(self._clean(data), sort_keys=True, indent=2) + '\n', encoding='utf-8')
        logger.debug(f"Wrote JSON to {path}")
        return path

    def write_jsonl(self, path: PathLike, records: Iterable[Dict[str, Any]]) -> Path:
        """Write one JSON object per line."""
        path = self._prepare(path)
        lines = [json.dumps(self._clean(record), sort_keys=True) for record in records]
        path.write_text(''.join(line + '\n' for line in lines), encoding='utf-8')
        logger.debug(f"Wrote {len(lines)} JSON lines to {path}")
        return path

    def write_csv(self, path: PathLike, rows: Sequence[Dict[str, Any]],
                  columns: Optional[List[str]] = None) -> Path:
        """
        Write rows as CSV with a header line.

        Args:
            path: Destination file
            rows: Row dictionaries
            columns: Column order; defaults to the keys of the first row

        Returns:
            The written path
        """
        path = self._prepare(path)
        if columns is None:
            columns = list(rows[0].keys()) if rows else []
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=columns, lineterminator='\n')
            writer.writeheader()
            for row in rows:
                writer.writerow({key: self._csv_value(row.get(key)) for key in columns})
        logger.debug(f"Wrote {len(rows)} CSV rows to {path}")
        return path

    def write_markdown(self, path: PathLike, text: str, with_html: bool = True) -> List[Path]:
        """
        Write a Markdown report and, optionally, its HTML rendering next to it.

        Returns:
            The written paths (Markdown first)
        """
        path = self._prepare(path)
        path.write_text(text, encoding='utf-8')
        written = [path]
        if with_html:
            html_path = path.with_suffix('.html')
            html_path.write_text(convert_markdown_to_html(text), encoding='utf-8')
            written.append(html_path)
        return written

    def artifact_paths(self, report_path: PathLike) -> Dict[str, Path]:
        """
        Companion paths of an evaluation report.

        Args:
            report_path: The EvalReport JSON path (--out)

        Returns:
            Dictionary with 'report', 'sweep' (CSV) and 'traces' (directory)
        """
        report_path = Path(report_path)
        stem = self._sanitize_filename(report_path.stem) or 'report'
        return {
            'report': report_path,
            'sweep': report_path.with_name(f'{stem}_sweep.csv'),
            'traces': report_path.with_name(f'{stem}_traces'),
        }

    def trace_filename(self, index: int, label: bool) -> str:
        """File name of one RiskTrace CSV."""
        return f"trace_{index:04d}_{'pos' if label else 'neg'}.csv"

    def _prepare(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def _clean(self, data: Any) -> Any:
        """Recursively replace non-finite floats by None, numpy scalars by Python ones and tuples by lists."""
        if isinstance(data, np.generic):
            data = data.item()
        if isinstance(data, float):
            return data if math.isfinite(data) else None
        if isinstance(data, dict):
            return {str(key): self._clean(value) for key, value in data.items()}
        if isinstance(data, (list, tuple)):
            return [self._clean(value) for value in data]
        return data

    def _csv_value(self, value: Any) -> Any:
        if value is None:
            return ''
        if isinstance(value, float):
            return repr(float(value)) if math.isfinite(value) else ''
        return value

    def _sanitize_filename(self, filename: str) -> str:
        """
        Sanitize a filename by removing/replacing invalid characters.

        Args:
            filename: Original filename string

        Returns:
            Sanitized filename string
        """
        # Remove invalid characters
        safe_filename = re.sub(r'[<>:"/\\|?*]', '_', filename)
        safe_filename = safe_filename.replace('  ', ' ').strip()

        return safe_filename


# Global instance for easy importing
export_manager = ExportManager()
