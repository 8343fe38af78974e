"""Sample averages of the window kernels, with per-individual summands.

For an estimation window ``t`` the eight kernels are averaged under four
selectors built from the two pre-window outcomes:

====  =======================================
``-``   weight ``1 - y_{t-2}``
``+``   weight ``y_{t-2}``
``-+``  weight ``(1 - y_{t-2}) * y_{t-3}``
``++``  weight ``y_{t-2} * y_{t-3}``
====  =======================================

Every summand is a product of 0/1 indicators with sign, hence an integer in
{-1, 0, 1}.  The fold accumulates exact ``int64`` sums, so aggregation over
any sharding of individuals merges without rounding error; means are formed
by a single division at the end.

When the period before the window start (``t - 3``) is not stored in the
panel, only the ``-``/``+`` selectors can be formed.  Such partial
aggregates (``has_interacted == False``) are all the trend-model system and
the second-stage effect-step estimator need, which keeps five stored periods
sufficient for every estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import _theta_components, _xi_components
from .panel import PanelData

SELECTORS = ("-", "+", "-+", "++")
_SEL_INDEX = {s: k for k, s in enumerate(SELECTORS)}


@dataclass(frozen=True)
class KernelSummands:
    """Per-individual kernel values and pre-window outcomes for one window.

    ``theta``/``xi`` are (N, 4) int8 arrays; ``y_tm2`` is the outcome two
    periods before the window index and ``y_tm3`` three periods before
    (``None`` for partial aggregates).
    """

    theta: np.ndarray
    xi: np.ndarray
    y_tm2: np.ndarray
    y_tm3: np.ndarray | None


@dataclass(frozen=True)
class AggregateStats:
    """Kernel averages at one window.

    ``theta_bar``/``xi_bar`` are (4, 4) arrays indexed by (kernel - 1,
    selector) with selectors ordered as in ``SELECTORS``.  Interacted
    columns are NaN when ``has_interacted`` is false.  ``theta_sums``/
    ``xi_sums`` hold the exact integer sums backing the means (absent for
    population-moment aggregates).
    """

    window_t: int
    n: int
    theta_bar: np.ndarray
    xi_bar: np.ndarray
    has_interacted: bool = True
    summands: KernelSummands | None = None
    theta_sums: np.ndarray | None = None
    xi_sums: np.ndarray | None = None

    def bar(self, kind: str, j: int, selector: str) -> float:
        """Mean of kernel ``j`` (1..4) of a family under a selector."""
        if not 1 <= j <= 4:
            raise ValueError(f"kernel index must be 1..4, got {j}")
        col = _SEL_INDEX[selector]
        if col >= 2 and not self.has_interacted:
            raise ValueError(f"selector {selector!r} unavailable: window {self.window_t} "
                             "was aggregated without the pre-window period")
        table = self.theta_bar if kind == "theta" else self.xi_bar
        return float(table[j - 1, col])


def _kernel_matrices(panel: PanelData, t: int) -> tuple[np.ndarray, np.ndarray]:
    y1, y0, yp = panel.col(t - 1), panel.col(t), panel.col(t + 1)
    theta = np.stack(_theta_components(y1, y0, yp), axis=1).astype(np.int8)
    xi = np.stack(_xi_components(y1, y0, yp), axis=1).astype(np.int8)
    return theta, xi


def _selector_sums(kern: np.ndarray, sel_minus, sel_plus, y_tm3) -> np.ndarray:
    sums = np.zeros((4, 4), dtype=np.int64)
    sums[:, 0] = (kern * sel_minus[:, None]).sum(axis=0, dtype=np.int64)
    sums[:, 1] = (kern * sel_plus[:, None]).sum(axis=0, dtype=np.int64)
    if y_tm3 is not None:
        inter = kern * y_tm3[:, None]
        sums[:, 2] = (inter * sel_minus[:, None]).sum(axis=0, dtype=np.int64)
        sums[:, 3] = (inter * sel_plus[:, None]).sum(axis=0, dtype=np.int64)
    return sums


def aggregate(panel: PanelData, t: int, keep_summands: bool = True) -> AggregateStats:
    """Average the window kernels of ``panel`` at window index ``t``.

    Requires stored periods ``t-2 .. t+1``; if ``t-3`` is stored as well the
    interacted selectors are included, otherwise a partial aggregate is
    returned.  ``keep_summands`` retains the per-individual values needed
    later for variance estimation.
    """
    if panel.n == 0:
        raise ValueError("cannot aggregate an empty panel")
    for s in (t - 2, t - 1, t, t + 1):
        if not panel.has_period(s):
            raise ValueError(f"window {t} needs period {s}, panel stores "
                             f"{panel.t0}..{panel.t_last}")
    has_interacted = panel.has_period(t - 3)

    theta, xi = _kernel_matrices(panel, t)
    y_tm2 = panel.col(t - 2)
    y_tm3 = panel.col(t - 3) if has_interacted else None
    sel_minus = (1 - y_tm2).astype(np.int8)

    theta_sums = _selector_sums(theta, sel_minus, y_tm2, y_tm3)
    xi_sums = _selector_sums(xi, sel_minus, y_tm2, y_tm3)

    theta_bar = theta_sums / panel.n
    xi_bar = xi_sums / panel.n
    if not has_interacted:
        theta_bar[:, 2:] = np.nan
        xi_bar[:, 2:] = np.nan

    summands = None
    if keep_summands:
        summands = KernelSummands(theta=theta, xi=xi, y_tm2=y_tm2.astype(np.int8),
                                  y_tm3=None if y_tm3 is None else y_tm3.astype(np.int8))
    return AggregateStats(window_t=t, n=panel.n, theta_bar=theta_bar, xi_bar=xi_bar,
                          has_interacted=has_interacted, summands=summands,
                          theta_sums=theta_sums, xi_sums=xi_sums)


def merge_stats(parts: list[AggregateStats]) -> AggregateStats:
    """Combine shard aggregates into the single-pass result, exactly.

    Shards must cover disjoint individuals of the same window.  Integer sums
    make the merge independent of the sharding.
    """
    if not parts:
        raise ValueError("nothing to merge")
    first = parts[0]
    for p in parts[1:]:
        if p.window_t != first.window_t or p.has_interacted != first.has_interacted:
            raise ValueError("shards disagree on window or selector availability")
        if p.theta_sums is None:
            raise ValueError("shard lacks integer sums; cannot merge exactly")
    if first.theta_sums is None:
        raise ValueError("shard lacks integer sums; cannot merge exactly")

    n = sum(p.n for p in parts)
    theta_sums = np.sum([p.theta_sums for p in parts], axis=0)
    xi_sums = np.sum([p.xi_sums for p in parts], axis=0)
    theta_bar = theta_sums / n
    xi_bar = xi_sums / n
    if not first.has_interacted:
        theta_bar[:, 2:] = np.nan
        xi_bar[:, 2:] = np.nan

    summands = None
    if all(p.summands is not None for p in parts):
        y_tm3 = None
        if first.has_interacted:
            y_tm3 = np.concatenate([p.summands.y_tm3 for p in parts])
        summands = KernelSummands(
            theta=np.concatenate([p.summands.theta for p in parts]),
            xi=np.concatenate([p.summands.xi for p in parts]),
            y_tm2=np.concatenate([p.summands.y_tm2 for p in parts]),
            y_tm3=y_tm3,
        )
    return AggregateStats(window_t=first.window_t, n=n, theta_bar=theta_bar,
                          xi_bar=xi_bar, has_interacted=first.has_interacted,
                          summands=summands, theta_sums=theta_sums, xi_sums=xi_sums)


def shard_aggregate(panel: PanelData, t: int, n_shards: int,
                    keep_summands: bool = True) -> AggregateStats:
    """Aggregate by splitting individuals into shards and merging.

    Equals ``aggregate(panel, t)`` exactly, for any shard count; exposed so
    the schedule-independence of the fold is directly exercisable.
    """
    bounds = np.linspace(0, panel.n, n_shards + 1).astype(int)
    parts = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi > lo:
            shard = PanelData(y=panel.y[lo:hi], ids=panel.ids[lo:hi], t0=panel.t0)
            parts.append(aggregate(shard, t, keep_summands=keep_summands))
    return merge_stats(parts)


def from_expected_bars(window_t: int, theta_bar: np.ndarray,
                       xi_bar: np.ndarray) -> AggregateStats:
    """Wrap exact population moments (no sample behind them) as aggregates."""
    return AggregateStats(window_t=window_t, n=0,
                          theta_bar=np.asarray(theta_bar, dtype=np.float64),
                          xi_bar=np.asarray(xi_bar, dtype=np.float64),
                          has_interacted=True, summands=None,
                          theta_sums=None, xi_sums=None)
