"""Quality-model training: scaling, balancing, ranked selection, search.

The pipeline mirrors the deployment contract end to end: standardize on
training statistics only, oversample minority classes with replacement,
rank features by greedy mutual-information difference (relevance minus
mean redundancy), then grid-search feature count and hyperparameters by
patient-wise cross-validated mean squared error. Fitted models serialize
to versioned JSON artifacts; with a fixed seed the whole path is
bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import regressors
from .features import CATALOG_VERSION, fast_ids

MODEL_ARTIFACT_VERSION = 1

MI_BINS = 8
FEATURE_RANGE_HEART = (5, 15)
FEATURE_RANGE_LUNG = (5, 20)

RIDGE_ALPHAS = [0.0, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0]

DEFAULT_GRID: dict[str, list[dict]] = {
    "ols": [{}],
    "ridge": [{"alpha": a} for a in RIDGE_ALPHAS],
    "knn": [
        {"n_neighbors": n, "weights": w, "metric": m}
        for n in range(1, 11)
        for w in ("uniform", "distance")
        for m in ("l1", "l2")
    ],
    "tree": [
        {"max_depth": d, "max_features": f}
        for d in [None, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
        for f in ("all", "sqrt", "log2")
    ],
    "ordinal_logistic": [
        {"variant": v, "alpha": a}
        for v in ("all_threshold", "immediate_threshold")
        for a in RIDGE_ALPHAS
    ],
    "ordinal_ridge": [{"alpha": a} for a in RIDGE_ALPHAS],
}

DEFAULT_FAMILIES = ("ols", "ridge", "knn", "tree", "ordinal_logistic", "ordinal_ridge")


class TrainingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# standardization


@dataclass
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray  # population convention; zero marks a constant column

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "ScalerParams":
        return cls(np.asarray(doc["mean"], dtype=float), np.asarray(doc["std"], dtype=float))


def fit_scaler(X: np.ndarray) -> ScalerParams:
    X = np.asarray(X, dtype=float)
    if len(X) == 0:
        raise TrainingError("empty training set")
    return ScalerParams(mean=X.mean(axis=0), std=X.std(axis=0))


def apply_scaler(params: ScalerParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    std = np.where(params.std == 0, 1.0, params.std)
    out = (X - params.mean) / std
    out[:, params.std == 0] = 0.0  # constant columns pass through as zero
    return out


# ---------------------------------------------------------------------------
# class balancing


def oversample_balance(
    X: np.ndarray, y: np.ndarray, patient_ids: np.ndarray, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upsample every minority class with replacement until counts match."""
    rng = np.random.default_rng(seed)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) == 0:
        raise TrainingError("no classes present")
    target = counts.max()
    keep = [np.arange(len(y))]
    for cls, cnt in zip(classes, counts):
        if cnt < target:
            idx = np.flatnonzero(y == cls)
            keep.append(rng.choice(idx, size=target - cnt, replace=True))
    sel = np.concatenate(keep)
    return np.asarray(X)[sel], y[sel], np.asarray(patient_ids)[sel]


# ---------------------------------------------------------------------------
# mutual-information ranking


def _quantile_bins(col: np.ndarray, bins: int = MI_BINS) -> np.ndarray:
    edges = np.quantile(col, np.linspace(0, 1, bins + 1)[1:-1])
    return np.searchsorted(edges, col, side="right")


def discrete_mi(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in mutual information of two small discrete sequences (nats)."""
    a = np.asarray(a, dtype=int)
    b = np.asarray(b, dtype=int)
    n = len(a)
    joint = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(joint, (a, b), 1.0)
    joint /= n
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    mask = joint > 0
    return float((joint[mask] * np.log(joint[mask] / (pa @ pb)[mask])).sum())


def mrmr_mid_rank(
    X: np.ndarray, y: np.ndarray, k: int, candidate_ids: list[int] | None = None
) -> list[int]:
    """Greedy relevance-minus-redundancy ranking; returns feature ids (1-based).

    Features are quantile-binned so any strictly monotone per-feature
    transform leaves the ranking unchanged. Ties break toward the lowest
    feature id.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    n_feat = X.shape[1]
    if candidate_ids is None:
        candidate_ids = list(range(1, n_feat + 1))
    if k > len(candidate_ids):
        raise TrainingError(f"k={k} exceeds {len(candidate_ids)} candidate features")
    cols = {fid: _quantile_bins(X[:, fid - 1]) for fid in candidate_ids}
    ymin = y - y.min()
    relevance = {fid: discrete_mi(cols[fid], ymin) for fid in candidate_ids}

    selected: list[int] = []
    remaining = sorted(candidate_ids)
    redundancy_sum = {fid: 0.0 for fid in candidate_ids}
    while len(selected) < k:
        best_fid, best_score = None, -np.inf
        for fid in remaining:
            score = relevance[fid]
            if selected:
                score -= redundancy_sum[fid] / len(selected)
            if score > best_score + 1e-12:
                best_fid, best_score = fid, score
        selected.append(best_fid)
        remaining.remove(best_fid)
        for fid in remaining:
            redundancy_sum[fid] += discrete_mi(cols[fid], cols[best_fid])
    return selected


# ---------------------------------------------------------------------------
# patient-wise folds


def patientwise_folds(
    patient_ids: np.ndarray, labels: np.ndarray, n_splits: int | str = 5
) -> np.ndarray:
    """Fold index per row; every patient lands in exactly one fold.

    Stratification is best-effort on the patient's majority label:
    patients are bucketed by that label and dealt round-robin into the
    currently smallest folds. `n_splits="loo"` leaves one patient out.
    """
    patient_ids = np.asarray(patient_ids)
    labels = np.asarray(labels)
    patients = sorted(set(patient_ids.tolist()))
    if n_splits == "loo":
        n_splits = len(patients)
    if len(patients) < n_splits:
        raise TrainingError(f"{len(patients)} patients cannot fill {n_splits} folds")

    majority = {}
    for p in patients:
        ls = labels[patient_ids == p]
        vals, cnts = np.unique(ls, return_counts=True)
        majority[p] = int(vals[np.argmax(cnts)])

    fold_sizes = np.zeros(n_splits, dtype=int)
    assignment: dict = {}
    for label in sorted(set(majority.values())):
        group = [p for p in patients if majority[p] == label]
        group.sort(key=lambda p: (-np.count_nonzero(patient_ids == p), str(p)))
        for p in group:
            f = int(np.argmin(fold_sizes))
            assignment[p] = f
            fold_sizes[f] += np.count_nonzero(patient_ids == p)
    return np.array([assignment[p] for p in patient_ids])


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    mse: float
    accuracy: float
    balanced_accuracy: float
    confusion: np.ndarray  # 5x5 counts, rows = true class
    per_fold: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "mse": self.mse,
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "confusion": self.confusion.astype(int).tolist(),
            "per_fold": self.per_fold,
        }

    def confusion_csv(self) -> str:
        lines = ["true\\pred," + ",".join(str(c) for c in range(1, 6))]
        for i in range(5):
            lines.append(
                f"{i + 1}," + ",".join(str(int(v)) for v in self.confusion[i])
            )
        return "\n".join(lines) + "\n"


def round_quality(values: np.ndarray) -> np.ndarray:
    """Half-up rounding clamped to the 1-5 scale."""
    return np.clip(np.floor(np.asarray(values, dtype=float) + 0.5), 1, 5).astype(int)


def evaluate(preds: np.ndarray, labels: np.ndarray, per_fold: list[dict] | None = None) -> EvalReport:
    preds = np.asarray(preds, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(preds) != len(labels) or len(preds) == 0:
        raise TrainingError("prediction/label length mismatch or empty input")
    mse = float(np.mean((preds - labels) ** 2))
    rounded = round_quality(preds)
    acc = float(np.mean(rounded == labels))
    conf = np.zeros((5, 5))
    np.add.at(conf, (labels - 1, rounded - 1), 1.0)
    recalls = []
    for c in range(5):
        total = conf[c].sum()
        if total > 0:
            recalls.append(conf[c, c] / total)
    bacc = float(np.mean(recalls)) if recalls else 0.0
    return EvalReport(mse=mse, accuracy=acc, balanced_accuracy=bacc,
                      confusion=conf, per_fold=per_fold or [])


# ---------------------------------------------------------------------------
# the quality model artifact


@dataclass
class QualityModel:
    scaler: ScalerParams
    selected_ids: list[int]
    regressor: object
    target: str  # heart | lung
    mode: str  # full | fast
    metadata: dict

    def predict(self, X_catalog: np.ndarray) -> np.ndarray:
        """Clamped quality from full-catalog feature rows."""
        X = np.asarray(X_catalog, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        scaled = apply_scaler(self.scaler, X)
        sub = scaled[:, [i - 1 for i in self.selected_ids]]
        return np.clip(self.regressor.predict(sub), 1.0, 5.0)

    def to_json(self) -> dict:
        return {
            "artifact_version": MODEL_ARTIFACT_VERSION,
            "catalog_version": CATALOG_VERSION,
            "target": self.target,
            "mode": self.mode,
            "scaler": self.scaler.to_json(),
            "selected_ids": list(self.selected_ids),
            "regressor": self.regressor.to_json(),
            "clamp": [1, 5],
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "QualityModel":
        if str(doc.get("catalog_version")) != CATALOG_VERSION:
            raise TrainingError(
                f"model built for catalog {doc.get('catalog_version')}, "
                f"this build is {CATALOG_VERSION}"
            )
        return cls(
            scaler=ScalerParams.from_json(doc["scaler"]),
            selected_ids=[int(i) for i in doc["selected_ids"]],
            regressor=regressors.regressor_from_json(doc["regressor"]),
            target=doc["target"],
            mode=doc["mode"],
            metadata=doc.get("metadata", {}),
        )


def save_model(model: QualityModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_json(), indent=1, sort_keys=True))


def load_model(path: str | Path) -> QualityModel:
    return QualityModel.from_json(json.loads(Path(path).read_text()))


def predict_quality(model: QualityModel, features: np.ndarray) -> np.ndarray:
    return model.predict(features)


# ---------------------------------------------------------------------------
# grid search over feature count and hyperparameters


def grid_search_train(
    X: np.ndarray,
    y: np.ndarray,
    patient_ids: np.ndarray,
    family: str,
    grid: list[dict] | None = None,
    feature_range: tuple[int, int] = FEATURE_RANGE_HEART,
    candidate_ids: list[int] | None = None,
    seed: int = 0,
    n_splits: int = 5,
) -> tuple[object, list[int], float, list[dict]]:
    """(fitted regressor, selected ids, cv mse, cv table) for one family.

    `X` must already be standardized. Ranking runs once on the balanced
    training set; every inner fold re-balances its own training half.
    """
    if grid is None:
        grid = DEFAULT_GRID[family]
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    patient_ids = np.asarray(patient_ids)

    xb, yb, _ = oversample_balance(X, y, patient_ids, seed)
    k_max = min(feature_range[1], len(candidate_ids) if candidate_ids else X.shape[1])
    k_lo = min(feature_range[0], k_max)
    ranking = mrmr_mid_rank(xb, yb, k_max, candidate_ids)

    folds = patientwise_folds(patient_ids, y, n_splits)
    cv_table: list[dict] = []
    best = None
    for k in range(k_lo, k_max + 1):
        ids = ranking[:k]
        cols = [i - 1 for i in ids]
        for params in grid:
            fold_mse = []
            for f in range(int(folds.max()) + 1):
                tr, te = folds != f, folds == f
                if not np.any(te) or not np.any(tr):
                    continue
                xtr, ytr, _ = oversample_balance(
                    X[tr], y[tr], patient_ids[tr], seed + f + 1)
                try:
                    reg = regressors.make_regressor(family, **params)
                    reg.fit(xtr[:, cols], ytr.astype(float),
                            rng=np.random.default_rng(seed + f))
                    preds = np.clip(reg.predict(X[te][:, cols]), 1.0, 5.0)
                except (regressors.FitError, np.linalg.LinAlgError):
                    fold_mse = None
                    break
                fold_mse.append(float(np.mean((preds - y[te]) ** 2)))
            if not fold_mse:
                continue
            mean_mse = float(np.mean(fold_mse))
            cv_table.append({"family": family, "k": k, "params": params, "cv_mse": mean_mse})
            key = (mean_mse, k, json.dumps(params, sort_keys=True))
            if best is None or key < best[0]:
                best = (key, ids, params)
    if best is None:
        raise TrainingError(f"no valid grid point for family {family!r}")
    (_, _, _), ids, params = best
    cols = [i - 1 for i in ids]
    xb_fit, yb_fit, _ = oversample_balance(X, y, patient_ids, seed)
    final = regressors.make_regressor(family, **params)
    final.fit(xb_fit[:, cols], yb_fit.astype(float), rng=np.random.default_rng(seed))
    return final, ids, best[0][0], cv_table


def train_quality_model(
    X_raw: np.ndarray,
    y: np.ndarray,
    patient_ids: np.ndarray,
    target: str,
    mode: str = "full",
    families: tuple[str, ...] = DEFAULT_FAMILIES,
    grid: dict[str, list[dict]] | None = None,
    seed: int = 0,
    n_splits: int = 5,
) -> tuple[QualityModel, dict]:
    """Scale, search every family, keep the lowest cross-validated MSE."""
    X_raw = np.asarray(X_raw, dtype=float)
    y = np.asarray(y, dtype=int)
    scaler = fit_scaler(X_raw)
    X = apply_scaler(scaler, X_raw)
    feature_range = FEATURE_RANGE_HEART if target == "heart" else FEATURE_RANGE_LUNG
    candidates = fast_ids() if mode == "fast" else None

    results = {}
    best = None
    for family in families:
        fam_grid = (grid or DEFAULT_GRID).get(family, DEFAULT_GRID[family])
        reg, ids, cv_mse, table = grid_search_train(
            X, y, patient_ids, family, fam_grid, feature_range,
            candidate_ids=candidates, seed=seed, n_splits=n_splits,
        )
        results[family] = {"cv_mse": cv_mse, "n_features": len(ids)}
        if best is None or cv_mse < best[0]:
            best = (cv_mse, family, reg, ids)
    cv_mse, family, reg, ids = best
    model = QualityModel(
        scaler=scaler,
        selected_ids=ids,
        regressor=reg,
        target=target,
        mode=mode,
        metadata={
            "seed": seed,
            "family": family,
            "cv_mse": cv_mse,
            "n_train": len(y),
            "n_patients": len(set(np.asarray(patient_ids).tolist())),
            "family_results": results,
        },
    )
    return model, results


def crossval_eval(
    X_raw: np.ndarray,
    y: np.ndarray,
    patient_ids: np.ndarray,
    model: QualityModel,
    seed: int = 0,
    n_splits: int = 5,
) -> tuple[EvalReport, np.ndarray]:
    """Patient-wise outer CV of the selected configuration.

    The chosen family, hyperparameters and feature ids are refit per
    fold (scaler included) and scored on the held-out patients; the
    feature ranking itself is not recomputed per fold. Returns the
    report and the out-of-fold predictions in row order.
    """
    X_raw = np.asarray(X_raw, dtype=float)
    y = np.asarray(y, dtype=int)
    patient_ids = np.asarray(patient_ids)
    folds = patientwise_folds(patient_ids, y, n_splits)
    cols = [i - 1 for i in model.selected_ids]
    params = regressors.params_of(model.regressor)
    preds = np.zeros(len(y))
    per_fold = []
    for f in range(int(folds.max()) + 1):
        tr, te = folds != f, folds == f
        scaler = fit_scaler(X_raw[tr])
        xtr_all = apply_scaler(scaler, X_raw[tr])
        xte_all = apply_scaler(scaler, X_raw[te])
        xb, yb, _ = oversample_balance(xtr_all, y[tr], patient_ids[tr], seed + f)
        reg = regressors.make_regressor(model.regressor.kind, **params)
        reg.fit(xb[:, cols], yb.astype(float), rng=np.random.default_rng(seed + f))
        p = np.clip(reg.predict(xte_all[:, cols]), 1.0, 5.0)
        preds[te] = p
        per_fold.append({
            "fold": f,
            "n_test": int(te.sum()),
            "mse": float(np.mean((p - y[te]) ** 2)),
        })
    return evaluate(preds, y, per_fold=per_fold), preds
