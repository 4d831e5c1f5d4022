"""
Snapshot file reading and report writing.
"""
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Tuple, Union

import pandas as pd
from pydantic import BaseModel

from staticarb.models.errors import InputError, SnapshotParseError
from staticarb.models.schemas import CurvePoint, OptionQuote

SNAPSHOT_COLUMNS: Tuple[str, ...] = ("expiry", "strike", "mid", "bid", "ask", "forward", "discount")
REPAIR_COLUMNS: Tuple[str, ...] = SNAPSHOT_COLUMNS + ("mid_repaired", "perturbation", "effective")
TIMESERIES_COLUMNS: Tuple[str, ...] = ("snapshot", "n_perturbed", "n_effective", "portfolios", "error")

_REQUIRED = ("expiry", "strike", "mid", "forward", "discount")
_OPTIONAL = ("bid", "ask")

PathLike = Union[str, Path]


def format_number(value: float, digits: int = 12) -> str:
    """Fixed significant-digit rendering used by every written file."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.{digits}g}"


def read_snapshot_frame(path: PathLike) -> pd.DataFrame:
    """
    Read a snapshot CSV as strings, checking the header.

    Blank lines are dropped; the index of the returned frame holds the file
    line number of each row (the header is line 1).

    Raises:
        SnapshotParseError: unreadable file, missing column or malformed CSV
    """
    path = str(path)
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError as exc:
        raise SnapshotParseError("file is empty", path=path) from exc
    except pd.errors.ParserError as exc:
        raise SnapshotParseError(f"malformed CSV ({exc})", path=path) from exc
    except UnicodeDecodeError as exc:
        raise SnapshotParseError("file is not valid UTF-8", path=path) from exc

    frame.columns = [str(c).strip() for c in frame.columns]
    for column in SNAPSHOT_COLUMNS:
        if column not in frame.columns:
            raise SnapshotParseError(f"missing column '{column}'", path=path, line=1, column=column)
    frame = frame.fillna("")
    blank = (frame.apply(lambda column: column.str.strip()) == "").all(axis=1)
    frame = frame.loc[~blank].copy()
    frame.index = frame.index + 2
    frame.index.name = "line"
    if frame.empty:
        raise SnapshotParseError("no option rows", path=path)
    return frame


def _parse_column(frame: pd.DataFrame, column: str, path: str, required: bool) -> pd.Series:
    raw = frame[column].str.strip()
    values = pd.to_numeric(raw.where(raw != ""), errors="coerce")
    malformed = values.isna() & (raw != "")
    if malformed.any():
        line = int(malformed.idxmax())
        raise SnapshotParseError(f"not a number: {raw[line]!r}", path=path, line=line, column=column)
    if required and values.isna().any():
        line = int(values.isna().idxmax())
        raise SnapshotParseError("value required", path=path, line=line, column=column)
    return values


def parse_snapshot(frame: pd.DataFrame, path: Optional[str] = None) -> Tuple[List[OptionQuote], List[CurvePoint]]:
    """
    Turn a snapshot frame into quotes (in row order) and one curve point per expiry.

    ``frame`` comes from ``read_snapshot_frame``; its index is used as the
    line number in error messages.

    Raises:
        SnapshotParseError: non-numeric cell, missing value, or forward/discount
            differing between rows of the same expiry
    """
    numeric = {
        column: _parse_column(frame, column, path, column in _REQUIRED)
        for column in _REQUIRED + _OPTIONAL
    }

    curves = {}
    for line in frame.index:
        expiry = float(numeric["expiry"][line])
        point = (float(numeric["forward"][line]), float(numeric["discount"][line]))
        if expiry in curves and curves[expiry][0] != point:
            first_line = curves[expiry][1]
            raise SnapshotParseError(
                f"forward/discount differ from line {first_line} for expiry {expiry!r}",
                path=path,
                line=int(line),
                column="forward" if point[0] != curves[expiry][0][0] else "discount",
            )
        curves.setdefault(expiry, (point, int(line)))

    quotes = []
    for line in frame.index:
        bid, ask = numeric["bid"][line], numeric["ask"][line]
        quotes.append(OptionQuote(
            expiry=float(numeric["expiry"][line]),
            strike=float(numeric["strike"][line]),
            mid=float(numeric["mid"][line]),
            bid=None if pd.isna(bid) else float(bid),
            ask=None if pd.isna(ask) else float(ask),
        ))
    points = [
        CurvePoint(expiry=expiry, forward=forward, discount=discount)
        for expiry, ((forward, discount), _) in sorted(curves.items())
    ]
    return quotes, points


def read_snapshot(path: PathLike) -> Tuple[List[OptionQuote], List[CurvePoint], pd.DataFrame]:
    """Read and parse a snapshot file; the raw frame is returned for echoing input columns."""
    frame = read_snapshot_frame(path)
    quotes, curves = parse_snapshot(frame, str(path))
    return quotes, curves, frame


def write_snapshot(
    path: PathLike,
    quotes: Sequence[OptionQuote],
    curves: Sequence[CurvePoint],
    digits: int = 12,
) -> None:
    """Write quotes in the snapshot format; every quote expiry needs a curve point."""
    table = {c.expiry: c for c in curves}
    rows = []
    for quote in quotes:
        curve = table.get(quote.expiry)
        if curve is None:
            raise InputError(f"No curve point for expiry {quote.expiry!r}")
        rows.append([
            format_number(quote.expiry, digits),
            format_number(quote.strike, digits),
            format_number(quote.mid, digits),
            format_number(quote.bid, digits),
            format_number(quote.ask, digits),
            format_number(curve.forward, digits),
            format_number(curve.discount, digits),
        ])
    _ensure_parent(path)
    pd.DataFrame(rows, columns=list(SNAPSHOT_COLUMNS)).to_csv(path, index=False)


def write_repaired_snapshot(
    path: PathLike,
    frame: pd.DataFrame,
    repaired: Sequence[float],
    perturbation: Sequence[float],
    effective: Sequence[bool],
    digits: int = 12,
) -> None:
    """
    Echo the input columns and append ``mid_repaired``, ``perturbation`` and ``effective``.

    All sequences are in input row order; ``perturbation`` is in normalized
    units and ``mid_repaired`` in premium units.
    """
    if not (len(repaired) == len(perturbation) == len(effective) == len(frame)):
        raise InputError("Repair output does not match the number of input rows")
    out = frame.loc[:, list(SNAPSHOT_COLUMNS)].copy()
    out["mid_repaired"] = [format_number(float(v), digits) for v in repaired]
    out["perturbation"] = [format_number(float(v), digits) for v in perturbation]
    out["effective"] = [int(bool(v)) for v in effective]
    _ensure_parent(path)
    out.to_csv(path, index=False)


def read_repaired_snapshot(path: PathLike) -> pd.DataFrame:
    """Read a repair output file back with numeric columns."""
    frame = pd.read_csv(path, keep_default_na=True)
    missing = [c for c in REPAIR_COLUMNS if c not in frame.columns]
    if missing:
        raise SnapshotParseError(f"missing column '{missing[0]}'", path=str(path), line=1, column=missing[0])
    return frame


def write_timeseries(path: Optional[PathLike], rows: Iterable[BaseModel]) -> None:
    """Write time-series rows as CSV to ``path`` or stdout."""
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=list(TIMESERIES_COLUMNS))
    for column in ("n_perturbed", "n_effective", "portfolios"):
        frame[column] = frame[column].astype("Int64")
    if path is None:
        frame.to_csv(sys.stdout, index=False)
    else:
        _ensure_parent(path)
        frame.to_csv(path, index=False)


def write_samples(path: PathLike, samples: Sequence[float], digits: int = 12) -> None:
    """Dump log-ratio samples, one per line, for external histogramming."""
    _ensure_parent(path)
    pd.DataFrame({"log_ratio": [format_number(float(v), digits) for v in samples]}).to_csv(path, index=False)


def _round_floats(data: Any, digits: int) -> Any:
    if isinstance(data, float) and math.isfinite(data):
        return float(format_number(data, digits))
    if isinstance(data, dict):
        return {key: _round_floats(value, digits) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [_round_floats(value, digits) for value in data]
    return data


def write_json(payload: Any, path: Optional[PathLike] = None, digits: int = 12) -> None:
    """
    Serialize a pydantic model (or list of them) to ``path`` or stdout.

    Floats are rounded to ``digits`` significant digits, as in the CSV writers.
    """
    if isinstance(payload, BaseModel):
        data = payload.model_dump(mode="json", by_alias=True)
    elif isinstance(payload, list):
        data = [p.model_dump(mode="json", by_alias=True) if isinstance(p, BaseModel) else p for p in payload]
    else:
        data = payload
    text = json.dumps(_round_floats(data, digits), indent=2, sort_keys=False)
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        _ensure_parent(path)
        Path(path).write_text(text + "\n", encoding="utf-8")


def list_snapshots(directory: PathLike) -> List[Path]:
    """CSV files of a directory in lexicographic name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"Not a directory: {directory}")
    return sorted((p for p in directory.iterdir() if p.is_file() and p.suffix.lower() == ".csv"), key=lambda p: p.name)


def _ensure_parent(path: PathLike) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
