"""Multi-rater quality labels: agreement statistics and label derivation.

Scores are integers 1-5. Panel-level chance-corrected agreement uses
Fleiss' kappa over the five categories; the per-item agreement P_i is
the item term of the same statistic and drives low-agreement filtering.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

N_CATEGORIES = 5


class AgreementUndefined(ValueError):
    """Chance agreement is 1 while observed agreement is not."""


@dataclass
class RaterItem:
    recording_id: str
    ratings: list[int]

    def __post_init__(self) -> None:
        if len(self.ratings) < 1:
            raise ValueError(f"{self.recording_id}: no ratings")
        for r in self.ratings:
            if r not in (1, 2, 3, 4, 5):
                raise ValueError(f"{self.recording_id}: score {r} outside 1-5")


@dataclass
class RaterPanel:
    items: list[RaterItem] = field(default_factory=list)

    def __post_init__(self) -> None:
        counts = {len(i.ratings) for i in self.items}
        if len(counts) > 1:
            raise ValueError(f"unequal rater counts per item: {sorted(counts)}")

    @property
    def n_raters(self) -> int:
        return len(self.items[0].ratings) if self.items else 0

    def category_counts(self) -> np.ndarray:
        """(items, 5) matrix of per-category rating counts."""
        out = np.zeros((len(self.items), N_CATEGORIES), dtype=float)
        for i, item in enumerate(self.items):
            for r in item.ratings:
                out[i, r - 1] += 1
        return out


def per_item_agreement(panel: RaterPanel) -> np.ndarray:
    """P_i = (sum_j n_ij^2 - n) / (n (n - 1)) for each item."""
    n = panel.n_raters
    if n < 2:
        raise ValueError("need at least two raters")
    counts = panel.category_counts()
    return ((counts**2).sum(axis=1) - n) / (n * (n - 1))


def fleiss_kappa(panel: RaterPanel) -> float:
    """Chance-corrected agreement over the five quality categories."""
    if len(panel.items) < 2:
        raise ValueError("need at least two items")
    n = panel.n_raters
    if n < 2:
        raise ValueError("need at least two raters")
    counts = panel.category_counts()
    p_bar = float(per_item_agreement(panel).mean())
    p_j = counts.sum(axis=0) / counts.sum()
    p_e = float((p_j**2).sum())
    if p_e >= 1.0:
        if p_bar >= 1.0:
            return 1.0
        raise AgreementUndefined("all ratings in one category but items disagree")
    return (p_bar - p_e) / (1.0 - p_e)


def filter_low_agreement(panel: RaterPanel, threshold: float = 0.2) -> RaterPanel:
    """Drop items whose per-item agreement is <= threshold."""
    p = per_item_agreement(panel)
    kept = [item for item, pi in zip(panel.items, p) if pi > threshold]
    if not kept:
        raise ValueError("no items survive the agreement filter")
    return RaterPanel(kept)


def median_label(ratings: list[int]) -> int:
    """Statistical median; even-count halves round half-up."""
    if not ratings:
        raise ValueError("no ratings")
    med = float(np.median(sorted(ratings)))
    return int(np.floor(med + 0.5))


def panel_labels(panel: RaterPanel) -> dict[str, int]:
    return {item.recording_id: median_label(item.ratings) for item in panel.items}


def read_annotation_csv(path: str | Path) -> RaterPanel:
    """Rows of `recording_id,rater_id,score` grouped into a panel.

    Rater order within an item follows rater_id sort so panels are
    stable no matter the row order.
    """
    by_rec: dict[str, dict[str, int]] = defaultdict(dict)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = {"recording_id", "rater_id", "score"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ValueError(
                f"annotation header must be recording_id,rater_id,score; got {reader.fieldnames}"
            )
        for row in reader:
            by_rec[row["recording_id"]][row["rater_id"]] = int(row["score"])
    items = [
        RaterItem(rec, [scores[r] for r in sorted(scores)])
        for rec, scores in by_rec.items()
    ]
    return RaterPanel(items)


def write_annotation_csv(path: str | Path, panel: RaterPanel) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["recording_id", "rater_id", "score"])
        for item in panel.items:
            for j, score in enumerate(item.ratings):
                writer.writerow([item.recording_id, f"rater{j}", score])


def agreement_report(panel: RaterPanel, threshold: float = 0.2) -> dict:
    p = per_item_agreement(panel)
    filtered = filter_low_agreement(panel, threshold)
    return {
        "items": len(panel.items),
        "raters": panel.n_raters,
        "kappa": fleiss_kappa(panel),
        "kappa_filtered": fleiss_kappa(filtered) if len(filtered.items) >= 2 else None,
        "removed": len(panel.items) - len(filtered.items),
        "threshold": threshold,
        "per_item": {
            item.recording_id: float(pi) for item, pi in zip(panel.items, p)
        },
    }


def write_agreement_report(path: str | Path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=1, sort_keys=True))
