"""Gaussian-kernel SVM trained by sequential minimal optimization.

The solver follows the usual decomposition scheme: at every iteration it
picks the maximal violating pair (first-order choice for ``i``, second-order
gain for ``j``), solves the two-variable subproblem in closed form and
updates the gradient.  Kernel rows are computed on demand and cached, so the
full Gram matrix is never materialized.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DegenerateError, FormatError

SVM_SCHEMA = "slamsafe.svm"
SVM_VERSION = 1
TAU = 1e-12


def median_pairwise_distance(X: np.ndarray, max_points: int = 1000, seed: int = 0) -> float:
    """Median Euclidean distance between rows (on a subsample for large X)."""
    if len(X) > max_points:
        X = X[np.random.default_rng(seed).choice(len(X), max_points, replace=False)]
    sq = np.sum(X * X, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    iu = np.triu_indices(len(X), k=1)
    d = np.sqrt(d2[iu])
    d = d[d > 0]
    return float(np.median(d)) if len(d) else 1.0


def rbf(A: np.ndarray, B: np.ndarray, sigma: float) -> np.ndarray:
    sa = np.sum(A * A, axis=1)[:, None]
    sb = np.sum(B * B, axis=1)[None, :]
    d2 = np.maximum(sa + sb - 2.0 * A @ B.T, 0.0)
    return np.exp(-d2 / (2.0 * sigma * sigma))


class KernelClassifier:
    """Binary RBF-kernel SVM on standardized inputs.

    Parameters
    ----------
    C : float
        Box constraint on the dual coefficients.
    sigma : float or None
        Kernel width; ``None`` picks the median pairwise distance of the
        standardized training set.
    tol : float
        Stopping tolerance on the maximal KKT violation.
    """

    def __init__(self, C: float = 1.0, sigma: float | None = None, tol: float = 1e-3,
                 max_iter: int = 200_000, cache_rows: int = 4096):
        if C <= 0:
            raise ValueError("C must be positive")
        self.C = float(C)
        self.sigma = sigma
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.cache_rows = int(cache_rows)

    # ---- training -------------------------------------------------------
    def fit(self, X, y) -> "KernelClassifier":
        X = np.asarray(X, dtype=float)
        y = np.where(np.asarray(y) > 0, 1.0, -1.0)
        if len(np.unique(y)) < 2:
            raise DegenerateError("training set holds a single class")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        Z = (X - self.mean_) / self.scale_
        if self.sigma is None:
            self.sigma = median_pairwise_distance(Z)
        alpha, rho, self.n_iter_ = self._smo(Z, y)
        sv = alpha > 0
        self.support_ = np.flatnonzero(sv)
        self.support_vectors_ = Z[sv]
        self.sv_labels_ = y[sv]
        self.dual_coef_ = alpha[sv]
        self.rho_ = rho
        return self

    def _smo(self, Z, y):
        n = len(y)
        C = self.C
        alpha = np.zeros(n)
        grad = -np.ones(n)           # gradient of 0.5 a'Qa - e'a at a = 0
        cache: dict[int, np.ndarray] = {}

        def qrow(i):
            row = cache.get(i)
            if row is None:
                if len(cache) >= self.cache_rows:
                    cache.pop(next(iter(cache)))
                row = y[i] * y * rbf(Z[i:i + 1], Z, self.sigma)[0]
                cache[i] = row
            return row

        qdiag = np.ones(n)           # k(x, x) = 1 for the Gaussian kernel
        it = 0
        while it < self.max_iter:
            up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
            low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
            yg = -y * grad
            if not up.any() or not low.any():
                break
            i = int(np.flatnonzero(up)[np.argmax(yg[up])])
            gmax = yg[i]
            gmin = yg[low].min()
            if gmax - gmin < self.tol:
                break
            qi = qrow(i)
            cand = low & (yg < gmax)
            b = gmax - yg[cand]
            a = qdiag[i] + qdiag[cand] - 2.0 * y[i] * y[cand] * qi[cand]
            a = np.where(a > 0, a, TAU)
            j = int(np.flatnonzero(cand)[np.argmin(-(b * b) / a)])
            qj = qrow(j)
            ai_old, aj_old = alpha[i], alpha[j]
            if y[i] != y[j]:
                quad = qdiag[i] + qdiag[j] + 2.0 * qi[j]
                delta = (-grad[i] - grad[j]) / max(quad, TAU)
                diff = ai_old - aj_old
                ai, aj = ai_old + delta, aj_old + delta
                if diff > 0:
                    if aj < 0:
                        aj, ai = 0.0, diff
                else:
                    if ai < 0:
                        ai, aj = 0.0, -diff
                if diff > 0:
                    if ai > C:
                        ai, aj = C, C - diff
                else:
                    if aj > C:
                        aj, ai = C, C + diff
            else:
                quad = qdiag[i] + qdiag[j] - 2.0 * qi[j]
                delta = (grad[i] - grad[j]) / max(quad, TAU)
                total = ai_old + aj_old
                ai, aj = ai_old - delta, aj_old + delta
                if total > C:
                    if ai > C:
                        ai, aj = C, total - C
                else:
                    if aj < 0:
                        aj, ai = 0.0, total
                if total > C:
                    if aj > C:
                        aj, ai = C, total - C
                else:
                    if ai < 0:
                        ai, aj = 0.0, total
            alpha[i], alpha[j] = ai, aj
            grad += qi * (ai - ai_old) + qj * (aj - aj_old)
            it += 1
        self.grad_ = grad
        self.alpha_full_ = alpha
        self.labels_full_ = y
        return alpha, self._rho(alpha, grad, y), it

    def _rho(self, alpha, grad, y):
        yg = y * grad
        at_upper = alpha >= self.C
        at_lower = alpha <= 0
        free = ~(at_upper | at_lower)
        if free.any():
            return float(yg[free].mean())
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        return float((ub + lb) / 2.0)

    # ---- inference ------------------------------------------------------
    def _standardized_decision(self, Z: np.ndarray) -> np.ndarray:
        if len(self.dual_coef_) == 0:
            return np.full(len(Z), -self.rho_)
        K = rbf(Z, self.support_vectors_, self.sigma)
        return K @ (self.dual_coef_ * self.sv_labels_) - self.rho_

    def decision_function(self, X) -> np.ndarray:
        Z = (np.atleast_2d(np.asarray(X, dtype=float)) - self.mean_) / self.scale_
        return self._standardized_decision(Z)

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0, 1, -1)

    def kkt_residuals(self, X, y) -> np.ndarray:
        """Per-sample KKT violation of the training set (0 when satisfied)."""
        y = np.where(np.asarray(y) > 0, 1.0, -1.0)
        alpha = np.zeros(len(y))
        alpha[self.support_] = self.dual_coef_
        m = y * self.decision_function(X)
        res = np.zeros(len(y))
        lower = alpha <= 0
        upper = alpha >= self.C
        free = ~(lower | upper)
        res[lower] = np.maximum(0.0, 1.0 - m[lower])
        res[upper] = np.maximum(0.0, m[upper] - 1.0)
        res[free] = np.abs(m[free] - 1.0)
        return res

    # ---- persistence ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "schema": SVM_SCHEMA, "version": SVM_VERSION,
            "C": self.C, "sigma": self.sigma, "tol": self.tol,
            "mean": self.mean_.tolist(), "scale": self.scale_.tolist(),
            "support_vectors": self.support_vectors_.tolist(),
            "labels": self.sv_labels_.tolist(), "dual_coef": self.dual_coef_.tolist(),
            "rho": self.rho_,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "KernelClassifier":
        if doc.get("schema") != SVM_SCHEMA:
            raise FormatError("not an SVM file")
        if doc.get("version") != SVM_VERSION:
            raise FormatError(f"unsupported SVM version {doc.get('version')!r}")
        clf = cls(C=doc["C"], sigma=doc["sigma"], tol=doc["tol"])
        clf.mean_ = np.array(doc["mean"])
        clf.scale_ = np.array(doc["scale"])
        clf.support_vectors_ = np.array(doc["support_vectors"], dtype=float).reshape(-1, len(clf.mean_))
        clf.sv_labels_ = np.array(doc["labels"], dtype=float)
        clf.dual_coef_ = np.array(doc["dual_coef"], dtype=float)
        clf.support_ = np.arange(len(clf.dual_coef_))
        clf.rho_ = float(doc["rho"])
        return clf


def save_svm(clf: KernelClassifier, path) -> None:
    Path(path).write_text(json.dumps(clf.to_dict()) + "\n")


def load_svm(path) -> KernelClassifier:
    return KernelClassifier.from_dict(json.loads(Path(path).read_text()))


def feature_matrix(samples: np.ndarray) -> np.ndarray:
    """(eta_bin, dtheta_deg, overlap) columns of a training sample array."""
    return np.asarray(samples, dtype=float)[:, :3]


def svm_train(samples, C: float = 1.0, sigma: float | None = None, max_samples: int = 4000,
              seed: int = 0) -> KernelClassifier:
    """Fit a breaking / non-breaking classifier on logged steps.

    ``samples`` is either an array with columns ``eta_bin, dtheta_deg,
    overlap, phi[, cell]`` or a list of ``(StateActionFeatures, phi)``
    pairs.  Non-breaking steps get label +1, so a positive margin means safe.
    Large logs are subsampled to ``max_samples`` rows.
    """
    if len(samples) and not isinstance(samples, np.ndarray):
        samples = np.array([(0 if f.eta == "forward" else 1, f.dtheta_deg, f.overlap, float(phi))
                            for f, phi in samples])
    samples = np.asarray(samples, dtype=float)
    if len(samples) == 0:
        raise DegenerateError("no samples")
    if len(samples) > max_samples:
        keep = np.sort(np.random.default_rng(seed).choice(len(samples), max_samples, replace=False))
        samples = samples[keep]
    y = np.where(samples[:, 3] > 0, -1, 1)
    return KernelClassifier(C=C, sigma=sigma).fit(feature_matrix(samples), y)
