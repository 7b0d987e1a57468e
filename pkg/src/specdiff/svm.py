"""Two-class SVM trained in-repo with Platt's SMO algorithm.

Labels are +1 (live) and -1 (spoof). The decision function is
f(x) = sum_i dual_coefs_i * K(sv_i, x) + bias; `classify` declares live
iff f(x) >= threshold.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .errors import DescriptorKindError, ModelFormatError, TrainingError

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SvmConfig:
    kernel: str = "rbf"
    C: float = 1.0
    gamma: Union[float, str] = "scale"
    kkt_tol: float = 1e-3
    max_passes: Optional[int] = None  # default 10 * n at train time
    seed: int = 0

    def __post_init__(self):
        if self.kernel not in ("linear", "rbf"):
            raise ValueError(f"kernel must be 'linear' or 'rbf', got {self.kernel!r}")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.gamma != "scale" and float(self.gamma) <= 0:
            raise ValueError("gamma must be positive or 'scale'")


@dataclass
class SvmModel:
    kernel: str
    C: float
    gamma: float  # resolved; unused for the linear kernel
    support_vectors: np.ndarray
    dual_coefs: np.ndarray  # alpha_i * y_i
    bias: float
    threshold: float
    feature_dim: int
    descriptor_kind: Optional[str] = None


@dataclass(frozen=True)
class LabeledSet:
    features: np.ndarray  # n x d
    labels: np.ndarray    # n, in {+1, -1}
    subject_ids: tuple = ()

    def __post_init__(self):
        if self.features.ndim != 2 or len(self.labels) != self.features.shape[0]:
            raise ValueError("features must be n x d with n matching labels")
        if not set(np.unique(self.labels)) <= {-1, 1}:
            raise ValueError("labels must be +1 or -1")


def resolve_gamma(gamma, X):
    """'scale' resolves to 1 / (dim * overall feature variance)."""
    if gamma == "scale":
        var = float(np.var(X))
        if var <= 0:
            var = 1.0
        return 1.0 / (X.shape[1] * var)
    return float(gamma)


def kernel_matrix(kernel, gamma, A, B):
    if kernel == "linear":
        return A @ B.T
    sq = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :]
          - 2.0 * (A @ B.T))
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


class _Smo:
    """Platt-style SMO on a precomputed kernel matrix."""

    def __init__(self, K, y, C, tol, rng):
        self.K = K
        self.y = y.astype(np.float64)
        self.C = C
        self.tol = tol
        self.rng = rng
        self.n = len(y)
        self.alpha = np.zeros(self.n)
        self.b = 0.0
        self.errors = -self.y.copy()  # f(x_i) - y_i with f = 0 initially

    def _take_step(self, i1, i2):
        if i1 == i2:
            return False
        a1_old, a2_old = self.alpha[i1], self.alpha[i2]
        y1, y2 = self.y[i1], self.y[i2]
        e1, e2 = self.errors[i1], self.errors[i2]
        s = y1 * y2
        if s > 0:
            lo = max(0.0, a1_old + a2_old - self.C)
            hi = min(self.C, a1_old + a2_old)
        else:
            lo = max(0.0, a2_old - a1_old)
            hi = min(self.C, self.C + a2_old - a1_old)
        if lo >= hi:
            return False
        k11, k12, k22 = self.K[i1, i1], self.K[i1, i2], self.K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2 = a2_old + y2 * (e1 - e2) / eta
            a2 = min(max(a2, lo), hi)
        else:
            # objective is flat or concave along this pair; compare endpoints
            f1 = y1 * e1 - a1_old * k11 - s * a2_old * k12
            f2 = y2 * e2 - s * a1_old * k12 - a2_old * k22
            l1 = a1_old + s * (a2_old - lo)
            h1 = a1_old + s * (a2_old - hi)
            lo_obj = (l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11
                      + 0.5 * lo * lo * k22 + s * lo * l1 * k12)
            hi_obj = (h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11
                      + 0.5 * hi * hi * k22 + s * hi * h1 * k12)
            if lo_obj < hi_obj - 1e-12:
                a2 = lo
            elif lo_obj > hi_obj + 1e-12:
                a2 = hi
            else:
                return False
        if abs(a2 - a2_old) < 1e-12 * (a2 + a2_old + 1e-12):
            return False
        a1 = a1_old + s * (a2_old - a2)

        d1, d2 = a1 - a1_old, a2 - a2_old
        b1 = self.b - e1 - y1 * d1 * k11 - y2 * d2 * k12
        b2 = self.b - e2 - y1 * d1 * k12 - y2 * d2 * k22
        if 0 < a1 < self.C:
            b_new = b1
        elif 0 < a2 < self.C:
            b_new = b2
        else:
            b_new = (b1 + b2) / 2.0

        self.errors += (y1 * d1 * self.K[i1] + y2 * d2 * self.K[i2]
                        + (b_new - self.b))
        self.alpha[i1], self.alpha[i2] = a1, a2
        self.b = b_new
        return True

    def _examine(self, i2):
        y2, a2, e2 = self.y[i2], self.alpha[i2], self.errors[i2]
        r2 = e2 * y2
        if not ((r2 < -self.tol and a2 < self.C) or (r2 > self.tol and a2 > 0)):
            return False
        non_bound = np.flatnonzero((self.alpha > 0) & (self.alpha < self.C))
        if len(non_bound) > 1:
            i1 = int(non_bound[np.argmax(np.abs(self.errors[non_bound] - e2))])
            if self._take_step(i1, i2):
                return True
        if len(non_bound):
            start = self.rng.randrange(len(non_bound))
            for k in range(len(non_bound)):
                if self._take_step(int(non_bound[(start + k) % len(non_bound)]), i2):
                    return True
        start = self.rng.randrange(self.n)
        for k in range(self.n):
            if self._take_step((start + k) % self.n, i2):
                return True
        return False

    def solve(self, max_passes):
        examine_all = True
        passes = 0
        while passes < max_passes:
            passes += 1
            changed = 0
            if examine_all:
                targets = range(self.n)
            else:
                targets = np.flatnonzero((self.alpha > 0) & (self.alpha < self.C))
            for i in targets:
                if self._examine(int(i)):
                    changed += 1
            if examine_all:
                if changed == 0:
                    break
                examine_all = False
            elif changed == 0:
                examine_all = True

    def objective(self):
        v = self.alpha * self.y
        return float(self.alpha.sum() - 0.5 * v @ self.K @ v)

    def decision_values(self):
        return (self.alpha * self.y) @ self.K + self.b


def dual_objective(K, y, alpha):
    """W(alpha) = sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij."""
    v = alpha * y
    return float(alpha.sum() - 0.5 * v @ K @ v)


def _refine_bias(K, y, alpha, C):
    """Best bias for a converged alpha.

    Free support vectors pin it exactly (averaged); when every alpha sits
    at a bound, SMO's running midpoint heuristic can land outside the
    KKT-feasible interval, so use that interval's midpoint instead.
    """
    g = K @ (alpha * y)
    c = y - g  # per-point bias that would put the point exactly on the margin
    free = (alpha > 1e-9) & (alpha < C - 1e-9)
    if free.any():
        return float(np.mean(c[free]))
    at_zero = alpha <= 1e-9
    lower = (at_zero & (y > 0)) | (~at_zero & (y < 0))
    upper = (at_zero & (y < 0)) | (~at_zero & (y > 0))
    lo = np.max(c[lower]) if lower.any() else -np.inf
    hi = np.min(c[upper]) if upper.any() else np.inf
    if not np.isfinite(lo):
        return float(hi)
    if not np.isfinite(hi):
        return float(lo)
    return float((lo + hi) / 2.0)


def solve_dual(data: LabeledSet, cfg: SvmConfig):
    """Run SMO; returns (alpha, bias, gamma, K) for inspection and tests."""
    X = np.asarray(data.features, dtype=np.float64)
    y = np.asarray(data.labels, dtype=np.float64)
    n = len(y)
    if n < 2:
        raise TrainingError("need at least 2 training points")
    if len(set(np.unique(y))) < 2:
        raise TrainingError("training data contains a single class")
    if not np.all(np.isfinite(X)):
        raise TrainingError("non-finite feature values")

    gamma = resolve_gamma(cfg.gamma, X)
    K = kernel_matrix(cfg.kernel, gamma, X, X)
    rng = random.Random(cfg.seed)
    smo = _Smo(K, y, cfg.C, cfg.kkt_tol, rng)
    smo.solve(cfg.max_passes if cfg.max_passes is not None else 10 * n)
    bias = _refine_bias(K, y, smo.alpha, cfg.C)
    return smo.alpha, bias, gamma, K


def train_svm_with_objective(data: LabeledSet, cfg: SvmConfig):
    """Train and also report the achieved dual objective value."""
    alpha, bias, gamma, K = solve_dual(data, cfg)
    X = np.asarray(data.features, dtype=np.float64)
    y = np.asarray(data.labels, dtype=np.float64)
    sv = alpha > 1e-12
    model = SvmModel(
        kernel=cfg.kernel,
        C=cfg.C,
        gamma=gamma,
        support_vectors=X[sv].copy(),
        dual_coefs=(alpha * y)[sv].copy(),
        bias=bias,
        threshold=0.0,
        feature_dim=X.shape[1],
    )
    return model, dual_objective(K, y, alpha)


def train_svm(data: LabeledSet, cfg: SvmConfig) -> SvmModel:
    """SMO-optimized dual solution; deterministic for a fixed cfg.seed."""
    model, _ = train_svm_with_objective(data, cfg)
    return model


def decision_value(model: SvmModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.feature_dim,):
        raise ValueError(f"expected feature dim {model.feature_dim}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature values")
    k = kernel_matrix(model.kernel, model.gamma, model.support_vectors, x[None, :])
    return float(model.dual_coefs @ k[:, 0] + model.bias)


def decision_values(model: SvmModel, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.feature_dim:
        raise ValueError(f"expected n x {model.feature_dim} features, got {X.shape}")
    k = kernel_matrix(model.kernel, model.gamma, X, model.support_vectors)
    return k @ model.dual_coefs + model.bias


def kkt_violation(K, y, alpha, bias, C):
    """Max violation of the KKT conditions for a dual solution.

    alpha_i = 0 requires y_i f_i >= 1; alpha_i = C requires y_i f_i <= 1;
    interior alphas require y_i f_i = 1.
    """
    y = np.asarray(y, dtype=np.float64)
    margins = y * (K @ (alpha * y) + bias)
    viol = 0.0
    for a, m in zip(alpha, margins):
        if a <= 1e-9:
            viol = max(viol, 1.0 - m)
        elif a >= C - 1e-9:
            viol = max(viol, m - 1.0)
        else:
            viol = max(viol, abs(m - 1.0))
    return viol


def select_threshold(live_scores, spoof_scores):
    """Pick the decision cutoff minimizing (FAR + FRR) / 2.

    Candidates are midpoints between adjacent sorted scores; ties go to
    the smallest candidate. `classify` declares live iff score >= cutoff.
    """
    live = np.asarray(live_scores, dtype=np.float64)
    spoof = np.asarray(spoof_scores, dtype=np.float64)
    if live.size == 0 or spoof.size == 0:
        raise ValueError("both score lists must be non-empty")
    merged = np.sort(np.concatenate([live, spoof]))
    candidates = (merged[:-1] + merged[1:]) / 2.0
    best_t, best_err = None, np.inf
    for t in candidates:
        far = np.mean(spoof >= t)
        frr = np.mean(live < t)
        err = (far + frr) / 2.0
        if err < best_err - 1e-15:
            best_t, best_err = float(t), err
    return best_t


def classify(model: SvmModel, descriptor):
    """Return ('live'|'spoof', score) for a Descriptor."""
    if model.descriptor_kind is not None and descriptor.kind != model.descriptor_kind:
        raise DescriptorKindError(
            f"model expects {model.descriptor_kind!r} descriptors, got {descriptor.kind!r}")
    score = decision_value(model, descriptor.values)
    return ("live" if score >= model.threshold else "spoof"), score


def save_model(model: SvmModel, path):
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "kernel": model.kernel,
        "C": model.C,
        "gamma": model.gamma,
        "bias": model.bias,
        "threshold": model.threshold,
        "descriptor_kind": model.descriptor_kind,
        "feature_dim": model.feature_dim,
        "dual_coefs": model.dual_coefs.tolist(),
        "support_vectors": model.support_vectors.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path) -> SvmModel:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"corrupt model file {path}: {exc}")
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ModelFormatError(f"not a model file: {path}")
    if payload["format_version"] != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {payload['format_version']}")
    try:
        sv = np.asarray(payload["support_vectors"], dtype=np.float64)
        if sv.size == 0:
            sv = sv.reshape(0, payload["feature_dim"])
        return SvmModel(
            kernel=payload["kernel"],
            C=payload["C"],
            gamma=payload["gamma"],
            support_vectors=sv,
            dual_coefs=np.asarray(payload["dual_coefs"], dtype=np.float64),
            bias=payload["bias"],
            threshold=payload["threshold"],
            feature_dim=payload["feature_dim"],
            descriptor_kind=payload["descriptor_kind"],
        )
    except KeyError as exc:
        raise ModelFormatError(f"model file {path} missing field {exc}")


DEFAULT_GRID_C = (0.1, 1.0, 10.0)
DEFAULT_GRID_GAMMA_FACTORS = (0.1, 1.0, 10.0)


def grid_candidates(cfg: SvmConfig, X):
    """The small (C, gamma) grid around the defaults."""
    scale = resolve_gamma("scale", X)
    out = []
    for C in DEFAULT_GRID_C:
        if cfg.kernel == "linear":
            out.append(replace(cfg, C=C))
        else:
            for f in DEFAULT_GRID_GAMMA_FACTORS:
                out.append(replace(cfg, C=C, gamma=f * scale))
    return out
