"""File ingestion and deterministic result serialisation.

All numeric output is written with 17 significant digits so every value
round-trips exactly; rerunning a command from its manifest reproduces every
result file byte for byte (the manifest itself records wall time and is the
one file excluded from that guarantee).
"""

import json
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import IngestError
from .sample import Sample


@dataclass(frozen=True)
class IngestReport:
    n: int
    min: float
    max: float
    duplicates: int


def _parse_float(token, lineno):
    try:
        v = float(token)
    except ValueError:
        raise IngestError(f"line {lineno}: could not parse {token!r} as a number") from None
    if not np.isfinite(v):
        raise IngestError(f"line {lineno}: non-finite value {token!r}")
    return v


def ingest(path, column=None):
    """Read a sample from a text file (UTF-8, LF or CRLF).

    Blank lines and lines starting with '#' are skipped.  Plain files carry
    one number per line; files whose first data line contains a comma are
    treated as CSV, with ``column`` selecting a column by header name or
    zero-based index (default: first column, skipping a header row if the
    first row does not parse).

    Returns (Sample, IngestReport).
    """
    text = Path(path).read_text(encoding="utf-8")
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rows.append((lineno, line))
    if not rows:
        raise IngestError(f"{path}: no data lines")

    is_csv = "," in rows[0][1]
    values = []
    if not is_csv:
        for lineno, line in rows:
            values.append(_parse_float(line, lineno))
    else:
        header_fields = [f.strip() for f in rows[0][1].split(",")]
        has_header = not all(_is_floatable(f) for f in header_fields)
        col_idx = 0
        if column is not None:
            if isinstance(column, int) or (isinstance(column, str) and column.isdigit()):
                col_idx = int(column)
            else:
                if not has_header:
                    raise IngestError(f"column {column!r} requested but file has no header")
                try:
                    col_idx = header_fields.index(column)
                except ValueError:
                    raise IngestError(
                        f"column {column!r} not found in header {header_fields}"
                    ) from None
        data_rows = rows[1:] if has_header else rows
        if not data_rows:
            raise IngestError(f"{path}: no data rows after header")
        for lineno, line in data_rows:
            fields = [f.strip() for f in line.split(",")]
            if col_idx >= len(fields):
                raise IngestError(f"line {lineno}: no column {col_idx}")
            values.append(_parse_float(fields[col_idx], lineno))

    sample = Sample.from_values(values)
    report = IngestReport(
        n=sample.n, min=sample.min, max=sample.max,
        duplicates=sample.n - int(np.unique(sample.values).size),
    )
    return sample, report


def _is_floatable(token):
    try:
        float(token)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def fmt(x):
    """17-significant-digit decimal form; round-trips float64 exactly."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj):
    Path(path).write_text(
        json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


class Stopwatch:
    def __init__(self):
        self.t0 = time.perf_counter()

    def seconds(self):
        return time.perf_counter() - self.t0


def write_manifest(outdir, command, resolved_config, argv, warnings, wall_time_s, version):
    """Run manifest: resolved config, software version, wall time, warnings.

    Result files are byte-reproducible from the stored argv; the manifest is
    excluded from that guarantee because it records the wall time.
    """
    manifest = {
        "command": command,
        "config": resolved_config,
        "argv": list(argv),
        "warnings": list(warnings),
        "wall_time_s": wall_time_s,
        "version": version,
    }
    write_json(Path(outdir) / "manifest.json", manifest)
    return manifest


def load_schema():
    with resources.files("densityshape.schemas").joinpath("output.schema.json").open() as fh:
        return json.load(fh)
