# core/tables.py
import io
import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import pandas as pd

from app.core.exceptions import TraceParseError

logger = logging.getLogger(__name__)

LINE_COLUMN = "line"


# =====================================================================
# CSV INTERCHANGE TABLES
# =====================================================================

def write_table(path, header: Sequence[str], rows: Iterable[Sequence],
                comment: Optional[str] = None) -> None:
    """
    Write rows under a header line, after an optional ``# comment`` line.

    Callers pass floats already formatted with ``repr`` so values survive
    a round trip bit for bit.
    """
    frame = pd.DataFrame(list(rows), columns=list(header))
    with open(path, "w", newline="") as handle:
        if comment is not None:
            handle.write(f"# {comment}\n")
        frame.to_csv(handle, index=False, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")


def read_table(path, header: Sequence[str]) -> Tuple[List[Tuple[int, str]], pd.DataFrame]:
    """
    Read a CSV interchange file into string columns.

    Blank lines and repeated header lines are skipped. Each row keeps the
    1-based file line it came from in the ``line`` column, first.

    Returns:
        (comment lines as (line_number, text), DataFrame of line + header columns)

    Raises:
        TraceParseError: On a row with the wrong number of fields
    """
    header = list(header)
    columns = [LINE_COLUMN, *header]
    comments: List[Tuple[int, str]] = []
    numbered: List[str] = []
    with open(path, newline="") as handle:
        for line_number, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                comments.append((line_number, stripped))
                continue
            if stripped.split(",") == header:
                continue
            numbered.append(f"{line_number},{stripped}")

    if not numbered:
        return comments, pd.DataFrame({name: pd.Series(dtype=str) for name in columns})

    def _too_many(fields: List[str]) -> None:
        raise TraceParseError(
            f"expected {len(header)} fields, got {len(fields) - 1}", int(fields[0])
        )

    frame = pd.read_csv(
        io.StringIO("\n".join(numbered)),
        header=None,
        names=columns,
        dtype=str,
        keep_default_na=False,
        engine="python",
        on_bad_lines=_too_many,
    )
    # a long first row turns the line column into an implicit index
    if not isinstance(frame.index, pd.RangeIndex):
        raise TraceParseError(f"expected {len(header)} fields", int(frame.index[0]))
    # short rows come back padded
    short = frame[header].isna().any(axis=1) | frame[header].eq("").any(axis=1)
    if short.any():
        raise TraceParseError(
            f"expected {len(header)} non-empty fields", int(frame.loc[short, LINE_COLUMN].iloc[0])
        )
    frame[LINE_COLUMN] = frame[LINE_COLUMN].astype(int)
    return comments, frame
