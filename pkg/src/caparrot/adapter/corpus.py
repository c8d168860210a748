"""Synthetic training corpora for environment classification.

A window imitates what a node collects over a second or so of flight: RSS
and distance pairs from a handful of neighbors, keeping only the frames that
were actually received.
"""

from __future__ import annotations

import csv
import io
from dataclasses import astuple
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from caparrot.adapter.features import DEFAULT_WINDOW, FEATURE_NAMES, FeatureVector, features_from_arrays
from caparrot.adapter.paramdb import REP
from caparrot.channel import RadioConfig, channel_from_name, reception, sample_rss

FEATURE_HEADER = ("label",) + FEATURE_NAMES
SAMPLE_HEADER = ("label", "rss_dbm", "distance_m")

DEFAULT_BOUNDS = ((0.0, 0.0, 0.0), (500.0, 500.0, 250.0))


class CorpusError(ValueError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(f"row {row}: {message}" if row is not None else message)
        self.row = row


def _draw_window(channel, cfg: RadioConfig, rng: np.random.Generator, window: int,
                 bounds, distance_range: tuple[float, float], jitter_m: float):
    lo, hi = np.asarray(bounds[0], float), np.asarray(bounds[1], float)
    dmin, dmax = distance_range
    while True:
        rx = rng.uniform(lo, hi)
        n_nb = int(rng.integers(1, 10))
        nb = rng.uniform(lo, hi, size=(n_nb, 3))
        dist0 = np.linalg.norm(nb - rx, axis=1)
        keep = (dist0 >= dmin) & (dist0 <= dmax)
        if not keep.any():
            continue
        nb = nb[keep]
        rss_out: list[float] = []
        dist_out: list[float] = []
        for _ in range(20):
            k = window * 2
            pick = rng.integers(0, len(nb), size=k)
            tx = np.clip(nb[pick] + rng.uniform(-jitter_m, jitter_m, size=(k, 3)), lo, hi)
            me = np.clip(rx + rng.uniform(-jitter_m, jitter_m, size=(k, 3)), lo, hi)
            d = np.maximum(np.linalg.norm(tx - me, axis=1), 1.0)
            rss = sample_rss(channel, cfg, d, (tx[:, 2], me[:, 2]), rng)
            ok = reception(rss, cfg)
            rss_out.extend(rss[ok].tolist())
            dist_out.extend(d[ok].tolist())
            if len(rss_out) >= window:
                break
        if len(rss_out) >= window:
            return np.array(rss_out[:window]), np.array(dist_out[:window])


def generate_windows(channels: Sequence[str], windows_per_class: int, seed: int,
                     cfg: RadioConfig | None = None, window: int = DEFAULT_WINDOW,
                     bounds=DEFAULT_BOUNDS, distance_range=(1.0, 1000.0), jitter_m: float = 7.0):
    """Yield (label, rss array, distance array) windows, class by class."""
    cfg = cfg or RadioConfig()
    rng = np.random.default_rng(seed)
    for name in channels:
        channel = channel_from_name(name)
        for _ in range(windows_per_class):
            rss, dist = _draw_window(channel, cfg, rng, window, bounds, distance_range, jitter_m)
            yield name, rss, dist


def generate_corpus(channels: Sequence[str] = ("rural", "suburban", "urban"),
                    windows_per_class: int = 2000, seed: int = 0, cfg: RadioConfig | None = None,
                    **kwargs) -> list[tuple[str, FeatureVector]]:
    rows = []
    for label, rss, dist in generate_windows(channels, windows_per_class, seed, cfg, **kwargs):
        fv = features_from_arrays(rss, dist)
        if fv is not None:
            rows.append((label, fv))
    return rows


def to_arrays(rows: Sequence[tuple[str, FeatureVector]]) -> tuple[np.ndarray, np.ndarray]:
    order = [r.value for r in REP.ordered()]
    X = np.array([fv.as_array() for _, fv in rows], dtype=float).reshape(-1, len(FEATURE_NAMES))
    y = np.array([order.index(label) for label, _ in rows], dtype=np.int64)
    return X, y


def write_feature_corpus(rows: Iterable[tuple[str, FeatureVector]], path: str | Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FEATURE_HEADER)
    for label, fv in rows:
        w.writerow((label,) + tuple(repr(v) for v in astuple(fv)))
    Path(path).write_text(buf.getvalue())


def write_sample_corpus(windows, path: str | Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SAMPLE_HEADER)
    for label, rss, dist in windows:
        for r, d in zip(rss, dist):
            w.writerow((label, repr(float(r)), repr(float(d))))
    Path(path).write_text(buf.getvalue())


def _label(value: str, row: int) -> str:
    try:
        return REP(value.strip()).value
    except ValueError:
        raise CorpusError(f"unknown label {value!r}", row) from None


def read_corpus(path: str | Path, window: int = DEFAULT_WINDOW) -> list[tuple[str, FeatureVector]]:
    """Read a corpus in either format.

    Feature corpora carry one window per row. Sample corpora carry one
    (label, rss_dbm, distance_m) observation per row; consecutive rows of a
    label are cut into windows of ``window`` samples.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(h.strip() for h in next(reader))
        except StopIteration:
            raise CorpusError("empty corpus file") from None
        body = list(enumerate(reader, start=2))
    if header == FEATURE_HEADER:
        rows = []
        for n, rec in body:
            if not rec:
                continue
            if len(rec) != len(FEATURE_HEADER):
                raise CorpusError(f"expected {len(FEATURE_HEADER)} columns, got {len(rec)}", n)
            try:
                vals = [float(v) for v in rec[1:]]
            except ValueError:
                raise CorpusError("non-numeric feature value", n) from None
            rows.append((_label(rec[0], n), FeatureVector(*vals)))
        return rows
    if header == SAMPLE_HEADER:
        rows = []
        cur_label, rss, dist = None, [], []

        def flush():
            if cur_label is not None and len(rss) == window:
                fv = features_from_arrays(np.array(rss), np.array(dist))
                if fv is not None:
                    rows.append((cur_label, fv))

        for n, rec in body:
            if not rec:
                continue
            if len(rec) != 3:
                raise CorpusError(f"expected 3 columns, got {len(rec)}", n)
            label = _label(rec[0], n)
            try:
                r, d = float(rec[1]), float(rec[2])
            except ValueError:
                raise CorpusError("non-numeric sample value", n) from None
            if not d > 0:
                raise CorpusError("distance must be positive", n)
            if label != cur_label or len(rss) == window:
                flush()
                cur_label, rss, dist = label, [], []
            rss.append(r)
            dist.append(d)
        flush()
        return rows
    raise CorpusError(f"unrecognised header {','.join(header)}", 1)
