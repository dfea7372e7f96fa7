"""Gas price processes: constant, log-normal multiplicative walk, historical trace.

The log-normal walk multiplies the price by ``exp(N(mu, sigma^2))`` each
step. Its one-step expected factor is ``exp(mu + sigma^2/2)``, so drift
``mu = -sigma^2/2`` makes the process a martingale and anything at or below
that makes it monotonically non-expansive, the regime the threshold
policies are derived for.

Randomness is explicit: callers pass a ``numpy.random.Generator``. Streams
are derived with :func:`derive_rng` from ``(master_seed, stream_index)``
via ``SeedSequence`` feeding the counter-based Philox4x64 bit generator,
so parallel episodes get disjoint, reproducible streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

MARTINGALE_TOL = 1e-12


class TraceExhausted(Exception):
    """A historical trace ran out before the requested number of steps."""

    def __init__(self, available: int, requested: int):
        super().__init__(
            f"historical trace has {available} prices, {requested} steps requested"
        )
        self.available = available
        self.requested = requested


class IngestError(ValueError):
    """A raw fee row failed validation; the message names the row."""


@dataclass(frozen=True)
class ConstantPrice:
    p0: float

    def __post_init__(self):
        if self.p0 <= 0:
            raise ValueError(f"p0 must be positive, got {self.p0}")


@dataclass(frozen=True)
class LogNormalWalk:
    p0: float
    mu: float
    sigma: float

    def __post_init__(self):
        if self.p0 <= 0:
            raise ValueError(f"p0 must be positive, got {self.p0}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")


@dataclass(frozen=True)
class HistoricalTrace:
    prices: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))
        if not self.prices:
            raise ValueError("historical trace must not be empty")
        if any(p <= 0 for p in self.prices):
            raise ValueError("historical trace prices must be positive")


PriceProcess = Union[ConstantPrice, LogNormalWalk, HistoricalTrace]


@dataclass(frozen=True)
class ProcessClass:
    """Whether a process is monotonically non-expansive and/or a martingale."""

    non_expansive: bool
    martingale: bool
    note: str | None = None


@dataclass(frozen=True)
class FactorStats:
    """Per-step price factors of a trace and their fitted log-normal parameters."""

    factors: np.ndarray
    mu_hat: float
    sigma_hat: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray


def derive_rng(master_seed: int, stream: int = 0) -> np.random.Generator:
    """Philox4x64 generator for stream ``stream`` of a master seed."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(seq))


def initial_price(process: PriceProcess) -> float:
    if isinstance(process, HistoricalTrace):
        return process.prices[0]
    return process.p0


def next_price(
    process: PriceProcess, current: float, step: int, rng: np.random.Generator
) -> float:
    """Price at ``step + 1`` given the price ``current`` at ``step``."""
    if current <= 0:
        raise ValueError(f"current price must be positive, got {current}")
    if isinstance(process, ConstantPrice):
        return current
    if isinstance(process, LogNormalWalk):
        z = rng.normal(process.mu, process.sigma)
        return current * math.exp(z)
    if isinstance(process, HistoricalTrace):
        if step + 1 >= len(process.prices):
            raise TraceExhausted(len(process.prices), step + 2)
        return process.prices[step + 1]
    raise TypeError(f"unknown price process: {process!r}")


def build_price_path(
    process: PriceProcess, steps: int, rng: np.random.Generator
) -> np.ndarray:
    """Prices at steps ``0..steps-1``; raises :class:`TraceExhausted` when a
    historical trace is shorter than ``steps``."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if isinstance(process, HistoricalTrace) and len(process.prices) < steps:
        raise TraceExhausted(len(process.prices), steps)
    path = np.empty(steps, dtype=np.float64)
    path[0] = initial_price(process)
    for t in range(steps - 1):
        path[t + 1] = next_price(process, path[t], t, rng)
    return path


def expected_n_step_factor(mu: float, sigma: float, n: int) -> float:
    """Expected ratio of the price n steps ahead to the current price."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    return math.exp(n * (mu + sigma * sigma / 2.0))


def classify(process: PriceProcess) -> ProcessClass:
    """Classify a process; a single historical path is not classifiable."""
    if isinstance(process, ConstantPrice):
        return ProcessClass(non_expansive=True, martingale=True)
    if isinstance(process, LogNormalWalk):
        drift = process.mu + process.sigma * process.sigma / 2.0
        return ProcessClass(
            non_expansive=drift <= MARTINGALE_TOL,
            martingale=abs(drift) <= MARTINGALE_TOL,
        )
    if isinstance(process, HistoricalTrace):
        return ProcessClass(
            non_expansive=False,
            martingale=False,
            note="single sample path: generating-process properties are not classifiable",
        )
    raise TypeError(f"unknown price process: {process!r}")


def ingest_trace(
    rows: Iterable[tuple[float, float]], resample_seconds: int
) -> HistoricalTrace:
    """Resample raw ``(timestamp, fee)`` rows into a per-step price trace.

    Rows are bucketed into consecutive ``resample_seconds`` windows (aligned
    to the epoch, i.e. window index ``timestamp // resample_seconds``); the
    last observation of each non-empty window survives and empty windows are
    skipped.
    """
    if resample_seconds < 1:
        raise ValueError(f"resample_seconds must be >= 1, got {resample_seconds}")
    prices: list[float] = []
    last_ts = None
    last_window = None
    count = 0
    for i, (ts, fee) in enumerate(rows):
        count += 1
        if fee <= 0:
            raise IngestError(f"row {i}: fee must be positive, got {fee}")
        if last_ts is not None and ts < last_ts:
            raise IngestError(
                f"row {i}: timestamp {ts} decreases from previous {last_ts}"
            )
        last_ts = ts
        window = int(ts // resample_seconds)
        if window == last_window:
            prices[-1] = float(fee)
        else:
            prices.append(float(fee))
            last_window = window
    if count == 0:
        raise IngestError("no rows to ingest")
    return HistoricalTrace(tuple(prices))


def fit_factors(trace: HistoricalTrace) -> FactorStats:
    """Per-step factors ``p[t+1]/p[t]`` with fitted log-normal parameters.

    ``mu_hat`` is the sample mean of the log factors, ``sigma_hat`` the
    unbiased sample standard deviation (zero when only one factor exists).
    """
    prices = np.asarray(trace.prices, dtype=np.float64)
    if prices.size < 2:
        raise ValueError(f"need at least 2 prices to fit factors, got {prices.size}")
    factors = prices[1:] / prices[:-1]
    logs = np.log(factors)
    mu_hat = float(np.mean(logs))
    sigma_hat = float(np.std(logs, ddof=1)) if logs.size >= 2 else 0.0
    counts, edges = np.histogram(factors, bins="auto")
    return FactorStats(
        factors=factors,
        mu_hat=mu_hat,
        sigma_hat=sigma_hat,
        hist_counts=counts,
        hist_edges=edges,
    )


def load_fee_rows(path) -> list[tuple[float, float]]:
    """Read a raw fee CSV with header ``timestamp_unix_s,base_fee_wei``."""
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestError(f"{path}: empty file")
        cols = [c.strip() for c in header]
        if cols[:2] != ["timestamp_unix_s", "base_fee_wei"]:
            raise IngestError(
                f"{path}: expected header 'timestamp_unix_s,base_fee_wei', got {','.join(cols)}"
            )
        rows = []
        for i, row in enumerate(reader):
            if not row:
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError) as exc:
                raise IngestError(f"row {i}: malformed record {row!r}") from exc
    if not rows:
        raise IngestError(f"{path}: no data rows")
    return rows


def load_trace_csv(path) -> HistoricalTrace:
    """Read a resampled trace CSV with header ``step,price``."""
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["step", "price"]:
            raise IngestError(f"{path}: expected header 'step,price'")
        prices = [float(row[1]) for row in reader if row]
    return HistoricalTrace(tuple(prices))
