"""File-based chart rendering for corpus, search, and plan artifacts.

Every function writes one PNG and returns its path; nothing opens a
window.  Inputs are accepted both as the library's dataclasses and as
the plain dicts produced by the JSON report codec, so charts can be
rebuilt from recorded artifacts alone.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)
import numpy as np  # noqa: E402

from .dataset import daily_mean_ci
from .domain import FLOCK_DAYS, FlockSample
from .errors import ParseError

OUTPUT_LABELS = (
    "mean daily weight (g)",
    "feed per bird (kg)",
    "density (bird/m^2)",
)

_DPI = 120


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_corpus_bands(
    samples: list[FlockSample], path: str | Path, confidence: float = 0.95
) -> Path:
    """Across-flock daily mean with a confidence band, one panel per output."""
    fig, axes = plt.subplots(3, 1, figsize=(8, 9), sharex=True)
    for channel, (ax, label) in enumerate(zip(axes, OUTPUT_LABELS)):
        days, mean, low, high = daily_mean_ci(samples, channel, confidence)
        ax.fill_between(days, low, high, alpha=0.25, label=f"{confidence:.0%} band")
        ax.plot(days, mean, lw=1.5, label="mean")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        ax.legend(loc="best", fontsize=8)
    axes[-1].set_xlabel("rearing day")
    axes[0].set_title(f"corpus of {len(samples)} flocks")
    return _finish(fig, path)


def _history_arrays(rows: Sequence) -> tuple[np.ndarray, np.ndarray]:
    gens = np.empty(len(rows))
    best = np.empty(len(rows))
    for i, row in enumerate(rows):
        if isinstance(row, Mapping):
            gens[i], best[i] = row["generation"], row["best"]
        else:
            gens[i], best[i] = row.generation, row.best
    return gens, best


def save_convergence(histories: Mapping, path: str | Path) -> Path:
    """Best-fitness curves per searched week.

    Week 6 minimizes predicted conversion while the earlier weeks minimize
    a normalized boundary mismatch; the scales differ by two orders of
    magnitude, so the final week gets its own panel.
    """
    weeks = sorted(int(w) for w in histories)
    if not weeks:
        raise ParseError("report carries no convergence histories")
    by_week = {int(w): rows for w, rows in histories.items()}
    fig, (ax6, ax15) = plt.subplots(1, 2, figsize=(11, 4.5))
    for week in weeks:
        gens, best = _history_arrays(by_week[week])
        ax = ax6 if week == 6 else ax15
        ax.plot(gens, best, lw=1.2, label=f"week {week}")
    ax6.set_title("final week: conversion objective")
    ax6.set_ylabel("best predicted FCR")
    ax15.set_title("earlier weeks: boundary mismatch")
    ax15.set_ylabel("best normalized mismatch")
    for ax in (ax6, ax15):
        ax.set_xlabel("generation")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    return _finish(fig, path)


def save_boundary_errors(rows: Sequence, path: str | Path) -> Path:
    """Grouped bars of per-week stitch error, in percent, per output."""
    weeks, rel = [], []
    for row in rows:
        if isinstance(row, Mapping):
            weeks.append(int(row["week"]))
            rel.append(np.asarray(row["relative"], dtype=float))
        else:
            weeks.append(row.week)
            rel.append(np.asarray(row.relative, dtype=float))
    order = np.argsort(weeks)
    weeks = [weeks[i] for i in order]
    rel = np.stack([rel[i] for i in order]) * 100.0

    fig, ax = plt.subplots(figsize=(8, 4.5))
    x = np.arange(len(weeks), dtype=float)
    width = 0.26
    for channel, label in enumerate(OUTPUT_LABELS):
        ax.bar(x + (channel - 1) * width, rel[:, channel], width, label=label)
    ax.set_xticks(x, [f"{w}→{w + 1}" for w in weeks])
    ax.set_xlabel("week boundary")
    ax.set_ylabel("relative stitch error (%)")
    ax.grid(axis="y", alpha=0.3)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def _plan_field(plan, name: str) -> float:
    return plan[name] if isinstance(plan, Mapping) else getattr(plan, name)


def save_action_plan(day_plans: Sequence, path: str | Path) -> Path:
    """Daily temperature and humidity setpoints of a 40-day plan."""
    days = [int(_plan_field(p, "day")) for p in day_plans]
    fig, (ax_t, ax_h) = plt.subplots(2, 1, figsize=(8, 6.5), sharex=True)
    for field, label in (("t_min", "min"), ("t_avg", "avg"), ("t_max", "max")):
        ax_t.step(days, [_plan_field(p, field) for p in day_plans],
                  where="mid", label=label)
    for field, label in (("h_min", "min"), ("h_avg", "avg"), ("h_max", "max")):
        ax_h.step(days, [_plan_field(p, field) for p in day_plans],
                  where="mid", label=label)
    ax_t.set_ylabel("temperature (degC)")
    ax_h.set_ylabel("relative humidity (%)")
    ax_h.set_xlabel("rearing day")
    for ax in (ax_t, ax_h):
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    ax_t.set_title("recommended daily climate setpoints")
    return _finish(fig, path)


def save_trajectory(
    trajectory, path: str | Path, observed=None
) -> Path:
    """Predicted (and optionally observed) output trajectory over 40 days."""
    predicted = np.asarray(trajectory, dtype=float)
    if predicted.ndim != 2 or predicted.shape[1] != 3:
        raise ParseError(f"trajectory shape {predicted.shape}, expected (n, 3)")
    days = np.arange(1, predicted.shape[0] + 1)
    fig, axes = plt.subplots(3, 1, figsize=(8, 9), sharex=True)
    for channel, (ax, label) in enumerate(zip(axes, OUTPUT_LABELS)):
        ax.plot(days, predicted[:, channel], lw=1.5, label="predicted")
        if observed is not None:
            obs = np.asarray(observed, dtype=float)
            ax.plot(days[: len(obs)], obs[:, channel], lw=1.0, ls="--",
                    label="observed")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    axes[-1].set_xlabel("rearing day")
    axes[0].set_title(f"chained rollout over {FLOCK_DAYS} days")
    return _finish(fig, path)
