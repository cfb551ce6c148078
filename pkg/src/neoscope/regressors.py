"""Regression back-ends for the quality model.

Every regressor serializes losslessly to JSON (weights, tree nodes,
neighbor tables, thresholds), which keeps trained artifacts
byte-reproducible and free of library version pinning. The set covers
plain least squares, ridge, k-nearest-neighbours, a squared-error
decision tree, logistic threshold models (all-threshold and
immediate-threshold variants), and rounding ridge for the ordinal group.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

N_CLASSES = 5


class FitError(ValueError):
    pass


# ---------------------------------------------------------------------------


class OLSRegressor:
    kind = "ols"

    def __init__(self) -> None:
        self.coef_: np.ndarray | None = None

    def fit(self, X: np.ndarray, y: np.ndarray, rng=None) -> "OLSRegressor":
        xb = np.column_stack([X, np.ones(len(X))])
        self.coef_, *_ = np.linalg.lstsq(xb, y, rcond=None)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.column_stack([X, np.ones(len(X))]) @ self.coef_

    def to_json(self) -> dict:
        return {"kind": self.kind, "coef": self.coef_.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "OLSRegressor":
        obj = cls()
        obj.coef_ = np.asarray(doc["coef"], dtype=float)
        return obj


class RidgeRegressor:
    kind = "ridge"

    def __init__(self, alpha: float = 1.0) -> None:
        self.alpha = float(alpha)
        self.coef_: np.ndarray | None = None

    def fit(self, X: np.ndarray, y: np.ndarray, rng=None) -> "RidgeRegressor":
        n, k = X.shape
        xb = np.column_stack([X, np.ones(n)])
        pen = self.alpha * np.eye(k + 1)
        pen[-1, -1] = 0.0  # intercept unpenalized
        try:
            self.coef_ = np.linalg.solve(xb.T @ xb + pen, xb.T @ y)
        except np.linalg.LinAlgError:
            self.coef_, *_ = np.linalg.lstsq(xb, y, rcond=None)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.column_stack([X, np.ones(len(X))]) @ self.coef_

    def to_json(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "coef": self.coef_.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "RidgeRegressor":
        obj = cls(doc["alpha"])
        obj.coef_ = np.asarray(doc["coef"], dtype=float)
        return obj


class KNNRegressor:
    kind = "knn"

    def __init__(self, n_neighbors: int = 5, weights: str = "uniform", metric: str = "l2") -> None:
        if weights not in ("uniform", "distance"):
            raise ValueError(f"unknown weight scheme {weights!r}")
        if metric not in ("l1", "l2"):
            raise ValueError(f"unknown metric {metric!r}")
        self.n_neighbors = int(n_neighbors)
        self.weights = weights
        self.metric = metric
        self.X_: np.ndarray | None = None
        self.y_: np.ndarray | None = None

    def fit(self, X: np.ndarray, y: np.ndarray, rng=None) -> "KNNRegressor":
        if len(X) < 1:
            raise FitError("empty training set")
        self.X_ = np.asarray(X, dtype=float)
        self.y_ = np.asarray(y, dtype=float)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        k = min(self.n_neighbors, len(self.X_))
        out = np.empty(len(X))
        for i, row in enumerate(np.asarray(X, dtype=float)):
            diff = self.X_ - row
            if self.metric == "l1":
                dist = np.abs(diff).sum(axis=1)
            else:
                dist = np.sqrt((diff**2).sum(axis=1))
            idx = np.argsort(dist, kind="stable")[:k]
            if self.weights == "uniform":
                out[i] = self.y_[idx].mean()
            else:
                d = dist[idx]
                if np.any(d == 0):
                    out[i] = self.y_[idx[d == 0]].mean()
                else:
                    w = 1.0 / d
                    out[i] = (w * self.y_[idx]).sum() / w.sum()
        return out

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "n_neighbors": self.n_neighbors,
            "weights": self.weights,
            "metric": self.metric,
            "train_x": self.X_.tolist(),
            "train_y": self.y_.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "KNNRegressor":
        obj = cls(doc["n_neighbors"], doc["weights"], doc["metric"])
        obj.X_ = np.asarray(doc["train_x"], dtype=float)
        obj.y_ = np.asarray(doc["train_y"], dtype=float)
        return obj


class TreeRegressor:
    """CART with squared-error splits only."""

    kind = "tree"

    def __init__(self, max_depth: int | None = None, max_features: str = "all") -> None:
        if max_features not in ("all", "sqrt", "log2"):
            raise ValueError(f"unknown max_features {max_features!r}")
        self.max_depth = max_depth
        self.max_features = max_features
        self.tree_: dict | None = None

    def _n_candidates(self, k: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(k)))
        if self.max_features == "log2":
            return max(1, int(np.log2(k))) if k > 1 else 1
        return k

    def _best_split(self, X, y, feat_idx):
        best = None
        base = ((y - y.mean()) ** 2).sum()
        for f in feat_idx:
            order = np.argsort(X[:, f], kind="stable")
            xs, ys = X[order, f], y[order]
            csum = np.cumsum(ys)
            csq = np.cumsum(ys**2)
            total, total_sq = csum[-1], csq[-1]
            n = len(ys)
            for i in range(1, n):
                if xs[i] == xs[i - 1]:
                    continue
                nl = i
                sse_l = csq[i - 1] - csum[i - 1] ** 2 / nl
                nr = n - i
                sr = total - csum[i - 1]
                sse_r = (total_sq - csq[i - 1]) - sr**2 / nr
                gain = base - sse_l - sse_r
                if best is None or gain > best[0] + 1e-12:
                    best = (gain, f, (xs[i] + xs[i - 1]) / 2.0)
        return best

    def _grow(self, X, y, depth, rng):
        if (self.max_depth is not None and depth >= self.max_depth) or len(y) < 2 \
                or np.all(y == y[0]):
            return {"value": float(y.mean())}
        k = X.shape[1]
        m = self._n_candidates(k)
        feat_idx = np.arange(k) if m >= k else np.sort(rng.choice(k, size=m, replace=False))
        split = self._best_split(X, y, feat_idx)
        if split is None or split[0] <= 1e-12:
            return {"value": float(y.mean())}
        _, f, thr = split
        mask = X[:, f] <= thr
        return {
            "feature": int(f),
            "threshold": float(thr),
            "left": self._grow(X[mask], y[mask], depth + 1, rng),
            "right": self._grow(X[~mask], y[~mask], depth + 1, rng),
        }

    def fit(self, X: np.ndarray, y: np.ndarray, rng=None) -> "TreeRegressor":
        if rng is None:
            rng = np.random.default_rng(0)
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(X) == 0:
            raise FitError("empty training set")
        self.tree_ = self._grow(X, y, 0, rng)
        return self

    def _eval(self, node, row):
        while "value" not in node:
            node = node["left"] if row[node["feature"]] <= node["threshold"] else node["right"]
        return node["value"]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.array([self._eval(self.tree_, row) for row in X])

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "max_depth": self.max_depth,
            "max_features": self.max_features,
            "tree": self.tree_,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TreeRegressor":
        obj = cls(doc["max_depth"], doc["max_features"])
        obj.tree_ = doc["tree"]
        return obj


# ---------------------------------------------------------------------------
# ordinal threshold models


def _log1pexp(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z > 0
    out[pos] = z[pos] + np.log1p(np.exp(-z[pos]))
    out[~pos] = np.log1p(np.exp(z[~pos]))
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class OrdinalLogistic:
    """Threshold model: score w.x against ordered cutpoints.

    The all-threshold variant penalizes every misordered cutpoint per
    sample; the immediate variant only the two adjacent to the true
    class. Prediction is 1 + #{cutpoints below the score}.
    """

    kind = "ordinal_logistic"

    def __init__(self, variant: str = "all_threshold", alpha: float = 0.0,
                 max_iter: int = 10000) -> None:
        if variant not in ("all_threshold", "immediate_threshold"):
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.alpha = float(alpha)
        self.max_iter = int(max_iter)
        self.coef_: np.ndarray | None = None
        self.theta_: np.ndarray | None = None

    def _loss_grad(self, params, X, y):
        k = X.shape[1]
        w, theta = params[:k], params[k:]
        s = X @ w
        n = len(y)
        # margins[i, j] = theta_j - s_i ; sign +1 when j >= y_i (cutpoint must
        # sit above the score), -1 when j < y_i
        margins = theta[None, :] - s[:, None]
        jgrid = np.arange(1, N_CLASSES)[None, :]
        sign = np.where(jgrid >= y[:, None], 1.0, -1.0)
        if self.variant == "immediate_threshold":
            active = (jgrid == y[:, None] - 1) | (jgrid == y[:, None])
        else:
            active = np.ones_like(sign, dtype=bool)
        z = sign * margins
        loss = (_log1pexp(-z) * active).sum() / n + self.alpha * (w @ w)
        dz = (-_sigmoid(-z)) * sign * active  # d loss / d margins
        grad_theta = dz.sum(axis=0) / n
        grad_w = -(dz.sum(axis=1) @ X) / n + 2 * self.alpha * w
        return loss, np.concatenate([grad_w, grad_theta])

    def fit(self, X: np.ndarray, y: np.ndarray, rng=None) -> "OrdinalLogistic":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        if len(np.unique(y)) < 2:
            raise FitError("ordinal fit needs at least two classes")
        k = X.shape[1]
        x0 = np.concatenate([np.zeros(k), np.linspace(-1, 1, N_CLASSES - 1)])
        res = minimize(
            self._loss_grad, x0, args=(X, y), jac=True, method="L-BFGS-B",
            options={"maxiter": self.max_iter},
        )
        self.coef_ = res.x[:k]
        self.theta_ = np.sort(res.x[k:])  # enforce the ordered-cutpoint invariant
        return self

    def decision(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coef_

    def predict(self, X: np.ndarray) -> np.ndarray:
        s = self.decision(X)
        return 1.0 + (self.theta_[None, :] < s[:, None]).sum(axis=1)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "variant": self.variant,
            "alpha": self.alpha,
            "coef": self.coef_.tolist(),
            "theta": self.theta_.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "OrdinalLogistic":
        obj = cls(doc["variant"], doc["alpha"])
        obj.coef_ = np.asarray(doc["coef"], dtype=float)
        obj.theta_ = np.asarray(doc["theta"], dtype=float)
        return obj


class OrdinalRidge:
    """Ridge on the class scale; predictions round to the nearest class."""

    kind = "ordinal_ridge"

    def __init__(self, alpha: float = 1.0) -> None:
        self.alpha = float(alpha)
        self._ridge = RidgeRegressor(alpha)

    def fit(self, X: np.ndarray, y: np.ndarray, rng=None) -> "OrdinalRidge":
        self._ridge.fit(X, np.asarray(y, dtype=float))
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        cont = np.clip(self._ridge.predict(X), 1.0, N_CLASSES)
        return np.floor(cont + 0.5)

    def to_json(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "coef": self._ridge.coef_.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "OrdinalRidge":
        obj = cls(doc["alpha"])
        obj._ridge.coef_ = np.asarray(doc["coef"], dtype=float)
        return obj


_KINDS = {
    cls.kind: cls
    for cls in (OLSRegressor, RidgeRegressor, KNNRegressor, TreeRegressor,
                OrdinalLogistic, OrdinalRidge)
}

ORDINAL_KINDS = ("ordinal_logistic", "ordinal_ridge")


def regressor_from_json(doc: dict):
    kind = doc.get("kind")
    if kind not in _KINDS:
        raise ValueError(f"unknown regressor kind {kind!r}")
    return _KINDS[kind].from_json(doc)


def make_regressor(kind: str, **params):
    if kind not in _KINDS:
        raise ValueError(f"unknown regressor kind {kind!r}")
    return _KINDS[kind](**params)


_PARAM_KEYS = {
    "ols": (),
    "ridge": ("alpha",),
    "knn": ("n_neighbors", "weights", "metric"),
    "tree": ("max_depth", "max_features"),
    "ordinal_logistic": ("variant", "alpha"),
    "ordinal_ridge": ("alpha",),
}


def params_of(reg) -> dict:
    """Constructor parameters of a fitted regressor (for refitting)."""
    return {k: getattr(reg, k) for k in _PARAM_KEYS[reg.kind]}
