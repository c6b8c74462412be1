"""Price ingestion and the return structures derived from it.

All logarithms are base 2. A price matrix is ``m`` assets by ``n`` periods; period
``t`` runs from column ``t-1`` to column ``t``.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    IndexOutOfRange,
    MissingDate,
    NonPositivePrice,
    ParseError,
    TooShort,
    WindowTooLong,
)

SORTINO_SENTINEL = 1e9


def daily_log2_rate(annual_rate: float = 0.02, periods_per_year: int = 252) -> float:
    """Per-period base-2 log rate equivalent to a compounded annual rate."""
    return math.log2(1.0 + annual_rate) / periods_per_year


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PriceMatrix:
    assets: tuple
    prices: np.ndarray
    dates: tuple

    def __post_init__(self):
        prices = _frozen(self.prices)
        if prices.ndim != 2:
            raise ValueError("prices must be a 2-D array (assets x periods)")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "dates", tuple(self.dates))
        m, n = prices.shape
        if m != len(self.assets):
            raise ValueError(f"{m} price rows but {len(self.assets)} assets")
        if n != len(self.dates):
            raise ValueError(f"{n} price columns but {len(self.dates)} dates")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise NonPositivePrice("all prices must be finite and > 0")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise ParseError(f"dates not strictly increasing at {a!r} -> {b!r}")

    @property
    def m(self) -> int:
        return self.prices.shape[0]

    @property
    def n(self) -> int:
        return self.prices.shape[1]

    def columns(self, start: int, stop: int) -> "PriceMatrix":
        """Sub-matrix over columns ``start:stop``."""
        return PriceMatrix(self.assets, self.prices[:, start:stop], self.dates[start:stop])

    def between(self, first, last) -> "PriceMatrix":
        """Sub-matrix of dates ``first <= d < last`` (ISO strings or dates)."""
        first, last = _as_date(first), _as_date(last)
        idx = [i for i, d in enumerate(self.dates) if first <= _as_date(d) < last]
        if not idx:
            raise TooShort(f"no dates in [{first}, {last})")
        return self.columns(idx[0], idx[-1] + 1)

    def index_of(self, date) -> int:
        date = _as_date(date)
        for i, d in enumerate(self.dates):
            if _as_date(d) >= date:
                return i
        return self.n


def _as_date(d):
    if isinstance(d, _dt.date):
        return d
    return _dt.date.fromisoformat(str(d))


@dataclass(frozen=True)
class ReturnMatrix:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))


@dataclass(frozen=True)
class SortinoFeature:
    values: np.ndarray
    window: int
    r_A: float
    no_downside: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        nd = np.array(self.no_downside, dtype=bool, copy=True)
        nd.setflags(write=False)
        object.__setattr__(self, "no_downside", nd)


def _read_schema(path: Path, schema):
    if schema is None:
        sidecar = path.with_suffix(".json")
        if sidecar.exists():
            schema = json.loads(sidecar.read_text())
    elif isinstance(schema, (str, Path)):
        schema = json.loads(Path(schema).read_text())
    return schema or {}


def load_prices(path, schema=None) -> PriceMatrix:
    """Read a ``date,<ticker1>,<ticker2>,...`` CSV of adjusted closes.

    ``schema`` (a dict, a JSON path, or a ``<file>.json`` sidecar found next to
    the CSV) may carry ``date_column``, ``columns`` (ticker -> CSV column) and
    ``exclude`` (tickers to drop). Nothing is gap-filled: a blank cell raises
    :class:`MissingDate`.
    """
    path = Path(path)
    schema = _read_schema(path, schema)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if len(rows) < 2:
        raise ParseError(f"{path}: need a header and at least one data row")
    header = [h.strip() for h in rows[0]]
    date_col = schema.get("date_column", header[0])
    if date_col not in header:
        raise ParseError(f"{path}: date column {date_col!r} not in header")
    mapping = schema.get("columns")
    if mapping is None:
        mapping = {h: h for h in header if h != date_col}
    exclude = set(schema.get("exclude", ()))
    assets = [a for a in mapping if a not in exclude]
    for a in assets:
        if mapping[a] not in header:
            raise ParseError(f"{path}: column {mapping[a]!r} for {a!r} not in header")
    di = header.index(date_col)
    cols = [header.index(mapping[a]) for a in assets]

    dates, grid = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) < len(header):
            row = row + [""] * (len(header) - len(row))
        try:
            date = _dt.date.fromisoformat(row[di].strip())
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: bad date {row[di]!r}") from exc
        vals = []
        for a, c in zip(assets, cols):
            cell = row[c].strip()
            if cell == "":
                raise MissingDate(f"{path}:{lineno}: {a} has no price on {date}")
            try:
                v = float(cell)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad price {cell!r} for {a}") from exc
            if not math.isfinite(v):
                raise ParseError(f"{path}:{lineno}: non-finite price for {a}")
            if v <= 0:
                raise NonPositivePrice(f"{path}:{lineno}: {a} price {v} on {date}")
            vals.append(v)
        dates.append(date.isoformat())
        grid.append(vals)
    prices = np.array(grid, dtype=float).T.reshape(len(assets), len(dates))
    return PriceMatrix(tuple(assets), prices, tuple(dates))


def save_prices(q: PriceMatrix, path) -> None:
    """Write ``q`` in the layout :func:`load_prices` reads; floats use ``repr`` so reload is exact."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *q.assets])
        for j, d in enumerate(q.dates):
            w.writerow([d, *(repr(float(v)) for v in q.prices[:, j])])


def log2_returns(q: PriceMatrix) -> ReturnMatrix:
    if q.n < 2:
        raise TooShort("need at least 2 periods for returns")
    p = q.prices
    return ReturnMatrix(np.log2(p[:, 1:] / p[:, :-1]))


def relative_prices(q: PriceMatrix, t: int) -> np.ndarray:
    """Price relatives ``v_t / v_{t-1}`` for ``1 <= t <= n-1``."""
    if not 1 <= t <= q.n - 1:
        raise IndexOutOfRange(f"t={t} outside [1, {q.n - 1}]")
    return q.prices[:, t] / q.prices[:, t - 1]


def sortino_from_returns(returns, r_A: float, sentinel: float = SORTINO_SENTINEL):
    """Row-wise Sortino ratio of log2 returns; returns ``(ratios, no_downside_flags)``."""
    r = np.atleast_2d(np.asarray(returns, dtype=float))
    excess = r - r_A
    mean = excess.mean(axis=1)
    below = excess < 0
    j = below.sum(axis=1)
    sq = np.where(below, excess * excess, 0.0).sum(axis=1)
    none = j == 0
    dd = np.sqrt(np.divide(sq, j, out=np.zeros_like(sq), where=~none))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(none, sentinel, mean / np.where(none, 1.0, dd))
    return ratio, none


def sortino_features(q: PriceMatrix, window: int, r_A: float, sentinel: float = SORTINO_SENTINEL) -> SortinoFeature:
    """Per-asset Sortino ratio over the trailing ``window`` log2 returns of ``q``."""
    if window < 2:
        raise WindowTooLong(f"window must be >= 2, got {window}")
    ret = log2_returns(q).values
    if window > ret.shape[1]:
        raise WindowTooLong(f"window {window} exceeds {ret.shape[1]} available returns")
    vals, none = sortino_from_returns(ret[:, -window:], r_A, sentinel)
    return SortinoFeature(vals, window, r_A, none)
