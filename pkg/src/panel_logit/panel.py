"""Balanced binary panel container and its CSV interface.

The on-disk format is one row per (individual, period) with header
``id,t,y`` and ``y`` in {0, 1}.  Periods are labelled, not positional:
``t0`` names the first stored column so that a panel whose early periods
were discarded keeps its original period labels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PanelData:
    """N x T matrix of binary outcomes with individual ids.

    ``y[i, k]`` is the outcome of individual ``ids[i]`` at period
    ``t0 + k``.
    """

    y: np.ndarray
    ids: np.ndarray
    t0: int = 1

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.int8)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ids", np.asarray(self.ids))
        if y.ndim != 2:
            raise ValueError("y must be a 2-d array")
        if len(self.ids) != y.shape[0]:
            raise ValueError("ids length must match the number of rows")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValueError("panel outcomes must be 0 or 1")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_periods(self) -> int:
        return self.y.shape[1]

    @property
    def t_last(self) -> int:
        return self.t0 + self.n_periods - 1

    def has_period(self, t: int) -> bool:
        return self.t0 <= t <= self.t_last

    def col(self, t: int) -> np.ndarray:
        """Outcome column for period label ``t``."""
        if not self.has_period(t):
            raise ValueError(f"period {t} outside stored range {self.t0}..{self.t_last}")
        return self.y[:, t - self.t0]

    def drop_prefix(self, k: int) -> "PanelData":
        """Discard the first ``k`` periods, keeping period labels."""
        if not 0 <= k < self.n_periods:
            raise ValueError(f"cannot drop {k} of {self.n_periods} periods")
        if k == 0:
            return self
        return PanelData(y=self.y[:, k:], ids=self.ids, t0=self.t0 + k)


def write_panel_csv(panel: PanelData, path) -> None:
    """Write the panel in long format with header ``id,t,y``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "t", "y"])
        for i in range(panel.n):
            ident = panel.ids[i]
            row = panel.y[i]
            for k in range(panel.n_periods):
                writer.writerow([ident, panel.t0 + k, int(row[k])])


def read_panel_csv(path) -> PanelData:
    """Read a long-format panel, validating rectangularity.

    Every individual must be observed at exactly the same contiguous set of
    periods; outcomes must be 0/1.
    """
    by_id: dict[str, dict[int, int]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["id", "t", "y"]:
            raise ValueError(f"{path}: expected header 'id,t,y'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields")
            ident, t_str, y_str = row[0], row[1], row[2]
            try:
                t = int(t_str)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer period {t_str!r}") from None
            if y_str not in ("0", "1"):
                raise ValueError(f"{path}:{lineno}: outcome must be 0 or 1, got {y_str!r}")
            cells = by_id.setdefault(ident, {})
            if t in cells:
                raise ValueError(f"{path}:{lineno}: duplicate (id={ident}, t={t})")
            cells[t] = int(y_str)
    if not by_id:
        raise ValueError(f"{path}: no data rows")

    first = next(iter(by_id.values()))
    periods = sorted(first)
    t0, t_end = periods[0], periods[-1]
    if periods != list(range(t0, t_end + 1)):
        raise ValueError(f"{path}: periods must be contiguous, got {periods}")
    expected = set(periods)
    n_t = len(periods)

    ids = list(by_id)
    y = np.empty((len(ids), n_t), dtype=np.int8)
    for i, ident in enumerate(ids):
        cells = by_id[ident]
        if set(cells) != expected:
            raise ValueError(f"{path}: id {ident} observed at {sorted(cells)}, "
                             f"expected {periods} (panel must be rectangular)")
        for t, v in cells.items():
            y[i, t - t0] = v

    id_array = np.array(ids)
    try:
        id_array = id_array.astype(np.int64)
    except ValueError:
        pass  # non-integer labels are kept as strings
    return PanelData(y=y, ids=id_array, t0=t0)
