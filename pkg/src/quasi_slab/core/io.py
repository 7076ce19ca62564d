"""File formats: headered matrix CSV, run-length trace CSV and JSON documents.

Matrices are written row-major with 17 significant digits so that doubles
survive a write/read cycle bit for bit.
"""

import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np

from .sampler import Trace

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
TRACE_HEADER = ("iteration", "model_size", "delta", "theta")


class IOFormatError(Exception):
    """Raised when a file cannot be read or does not follow its format."""

    pass


def write_text_atomic(path: Path, text: str) -> None:
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = path.with_suffix(path.suffix + ".tmp")
    try:
        with open(temp_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        temp_path.replace(path)
    except OSError as e:
        raise IOFormatError(f"failed to write {path}: {e}") from e


def _read_lines(path: Path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IOFormatError(f"cannot read {path}: {e}") from e


# Matrices


def format_matrix(matrix, columns: list[str] | None = None) -> str:
    """Headered CSV text of a 1-d or 2-d array (1-d is a single column)."""
    M = np.asarray(matrix, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise IOFormatError(f"only 1-d and 2-d arrays can be written, got {M.ndim}-d")
    if columns is None:
        columns = [f"x{j}" for j in range(M.shape[1])]
    if len(columns) != M.shape[1]:
        raise IOFormatError(f"{len(columns)} column names for {M.shape[1]} columns")

    buffer = io.StringIO()
    buffer.write(",".join(columns) + "\n")
    if M.shape[0]:
        np.savetxt(buffer, M, fmt=FLOAT_FORMAT, delimiter=",")
    return buffer.getvalue()


def _locate_bad_row(rows: list[tuple[int, str]], width: int, source: str) -> IOFormatError:
    for lineno, line in rows:
        fields = line.split(",")
        if len(fields) != width:
            return IOFormatError(
                f"{source}:{lineno}: expected {width} fields, found {len(fields)}"
            )
        for field_ in fields:
            try:
                float(field_)
            except ValueError:
                return IOFormatError(f"{source}:{lineno}: not a number: {field_!r}")
    return IOFormatError(f"{source}: malformed matrix")


def parse_matrix(text: str, source: str = "<string>") -> tuple[np.ndarray, list[str]]:
    """Parse headered CSV text into (matrix, column names).

    Raises:
        IOFormatError: With the offending line number.
    """
    rows = [(lineno, line) for lineno, line in enumerate(text.splitlines(), start=1) if line.strip()]
    if not rows:
        raise IOFormatError(f"{source}:1: missing header line")
    columns = [c.strip() for c in rows[0][1].split(",")]
    width = len(columns)
    data = rows[1:]
    if not data:
        return np.empty((0, width)), columns
    try:
        M = np.loadtxt(io.StringIO("\n".join(line for _, line in data)), delimiter=",", ndmin=2)
    except ValueError:
        raise _locate_bad_row(data, width, source) from None
    if M.shape[1] != width:
        raise _locate_bad_row(data, width, source)
    return M, columns


def write_matrix(path: Path, matrix, columns: list[str] | None = None) -> None:
    write_text_atomic(path, format_matrix(matrix, columns))


def read_matrix(path: Path) -> np.ndarray:
    path = Path(path)
    M, _ = parse_matrix("\n".join(_read_lines(path)), source=str(path))
    return M


def read_vector(path: Path) -> np.ndarray:
    """Read a single-column matrix file as a 1-d array."""
    path = Path(path)
    M = read_matrix(path)
    if M.shape[1] != 1:
        raise IOFormatError(f"{path}: expected a single column, found {M.shape[1]}")
    return M[:, 0]


# Tables


def format_table(rows: list[dict[str, Any]]) -> str:
    """CSV text of homogeneous records; floats use 17 significant digits."""
    if not rows:
        return ""
    columns = list(rows[0])
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if list(row) != columns:
            raise IOFormatError(f"row keys {list(row)} differ from header {columns}")
        writer.writerow(
            [FLOAT_FORMAT % v if isinstance(v, float) else v for v in row.values()]
        )
    return buffer.getvalue()


# Run-length encoded binary models


def encode_rle(bits) -> str:
    """'0x3 1x2 0x5' style run-length code of a boolean vector."""
    bits = np.asarray(bits, dtype=bool)
    if bits.size == 0:
        return ""
    edges = np.flatnonzero(np.diff(bits.astype(np.int8))) + 1
    starts = np.concatenate([[0], edges])
    lengths = np.diff(np.concatenate([starts, [bits.size]]))
    return " ".join(f"{int(bits[s])}x{n}" for s, n in zip(starts, lengths))


def decode_rle(code: str, where: str = "<string>") -> np.ndarray:
    """Inverse of ``encode_rle``.

    Raises:
        IOFormatError: On a malformed token, reported at ``where``.
    """
    runs = []
    for token in code.split():
        value, sep, length = token.partition("x")
        if sep != "x" or value not in ("0", "1") or not length.isdigit() or int(length) == 0:
            raise IOFormatError(f"{where}: bad run-length token {token!r}")
        runs.append(np.full(int(length), value == "1", dtype=bool))
    if not runs:
        return np.zeros(0, dtype=bool)
    return np.concatenate(runs)


# Traces


def format_trace(trace: Trace, full_theta: bool = False) -> str:
    """One row per stored sample: iteration, ‖δ‖₀, RLE δ and the θ values.

    Only the active θ values are written unless ``full_theta``, in which case
    every row carries all p coefficients.
    """
    lines = [",".join(TRACE_HEADER)]
    for i in range(len(trace)):
        bits = trace.delta_samples[i]
        values = trace.theta_samples[i] if full_theta else trace.theta_samples[i, bits]
        theta = " ".join(FLOAT_FORMAT % v for v in values)
        lines.append(f"{int(trace.iterations[i])},{int(bits.sum())},{encode_rle(bits)},{theta}")
    return "\n".join(lines) + "\n"


def parse_trace(text: str, source: str = "<string>") -> Trace:
    """Parse trace CSV text.

    A row holds either the active θ values, with inactive coordinates coming
    back as 0, or all p values. Per-iteration model sizes are those of the stored
    samples; flip counts are not stored.

    Raises:
        IOFormatError: With the offending line number.
    """
    lines = text.splitlines()
    if not lines or tuple(c.strip() for c in lines[0].split(",")) != TRACE_HEADER:
        raise IOFormatError(f"{source}:1: expected header {','.join(TRACE_HEADER)}")

    iterations, deltas, thetas = [], [], []
    p = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        where = f"{source}:{lineno}"
        fields = line.split(",")
        if len(fields) != len(TRACE_HEADER):
            raise IOFormatError(f"{where}: expected {len(TRACE_HEADER)} fields, found {len(fields)}")
        try:
            iteration, size = int(fields[0]), int(fields[1])
            values = np.array([float(v) for v in fields[3].split()], dtype=float)
        except ValueError as e:
            raise IOFormatError(f"{where}: {e}") from None
        bits = decode_rle(fields[2], where)
        if p is None:
            p = bits.size
        if bits.size != p:
            raise IOFormatError(f"{where}: delta has length {bits.size}, expected {p}")
        if int(bits.sum()) != size or values.size not in (size, p):
            raise IOFormatError(
                f"{where}: model size {size} disagrees with delta ({int(bits.sum())} active, "
                f"{values.size} values)"
            )
        if values.size == p:
            theta = values
        else:
            theta = np.zeros(p)
            theta[bits] = values
        iterations.append(iteration)
        deltas.append(bits)
        thetas.append(theta)

    p = p or 0
    delta_samples = np.array(deltas, dtype=bool).reshape(len(deltas), p)
    return Trace(
        delta_samples=delta_samples,
        theta_samples=np.array(thetas, dtype=float).reshape(len(thetas), p),
        iterations=np.array(iterations, dtype=np.int64),
        model_sizes=delta_samples.sum(axis=1),
        acceptance_counts=np.zeros(p, dtype=np.int64),
        proposal_counts=np.zeros(p, dtype=np.int64),
    )


def write_trace(path: Path, trace: Trace, full_theta: bool = False) -> None:
    write_text_atomic(path, format_trace(trace, full_theta))


def read_trace(path: Path) -> Trace:
    path = Path(path)
    return parse_trace("\n".join(_read_lines(path)), source=str(path))


# JSON


def _json_default(obj: Any):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def format_json(data: Any) -> str:
    return json.dumps(data, indent=2, default=_json_default) + "\n"


def write_json(path: Path, data: Any) -> None:
    write_text_atomic(path, format_json(data))


def read_json(path: Path) -> Any:
    """Raises IOFormatError with the line number of a JSON syntax error."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IOFormatError(f"cannot read {path}: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise IOFormatError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from e
