"""Vocabularies, encodings, chi-squared kernels, linear and multiple-kernel SVMs,
and ranking metrics."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

log = logging.getLogger(__name__)


class TooFewPoints(ValueError):
    pass


class NegativeInput(ValueError):
    pass


class TooFewDescriptors(ValueError):
    pass


class SingleClass(ValueError):
    pass


class NoPositives(ValueError):
    pass


class NotPSD(UserWarning):
    pass


# ---------------------------------------------------------------- k-means

@dataclass
class Vocabulary:
    centroids: np.ndarray
    inertia: float = 0.0

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def sq_distances(X: np.ndarray, C: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Squared Euclidean distances between rows of X and rows of C."""
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    cn = np.einsum("ij,ij->i", C, C)
    out = np.empty((X.shape[0], C.shape[0]))
    for s in range(0, X.shape[0], chunk):
        xb = X[s : s + chunk]
        d = np.einsum("ij,ij->i", xb, xb)[:, None] - 2.0 * xb @ C.T + cn[None, :]
        out[s : s + chunk] = np.maximum(d, 0.0)
    return out


def kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    d2 = sq_distances(X, X[idx]).ravel()
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # fewer distinct points than k; take any unused index
            unused = np.setdiff1d(np.arange(n), idx)
            nxt = int(rng.choice(unused))
        else:
            nxt = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            nxt = min(nxt, n - 1)
        idx.append(nxt)
        d2 = np.minimum(d2, sq_distances(X, X[nxt : nxt + 1]).ravel())
    return X[idx].copy()


def lloyd(X: np.ndarray, C: np.ndarray, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray, float]:
    C = C.copy()
    labels = None
    for _ in range(max_iter):
        d = sq_distances(X, C)
        new = d.argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(C.shape[0]):
            members = labels == j
            if members.any():
                C[j] = X[members].mean(axis=0)
            else:
                # empty cluster: move it onto the worst-fit point
                worst = int(d[np.arange(len(X)), labels].argmax())
                C[j] = X[worst]
                labels[worst] = j
    d = sq_distances(X, C)
    labels = d.argmin(axis=1)
    return C, labels, float(d[np.arange(len(X)), labels].sum())


def kmeans(points: np.ndarray, k: int, rng_seed: int = 0, max_iter: int = 100, n_init: int = 1) -> Vocabulary:
    """k-means++ seeding followed by Lloyd iterations to an assignment fixpoint.

    With ``n_init`` > 1 the restart with the lowest SSE is kept.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if k < 1 or X.shape[0] < k:
        raise TooFewPoints(f"need at least k={k} points, got {X.shape[0]}")
    rng = np.random.default_rng(rng_seed)
    best = None
    for _ in range(n_init):
        C, _, sse = lloyd(X, kmeans_pp_init(X, k, rng), max_iter)
        if best is None or sse < best.inertia:
            best = Vocabulary(C, sse)
    return best


def bow_encode(descriptors: np.ndarray, vocab: Vocabulary) -> tuple[np.ndarray, bool]:
    """L1-normalized hard-assignment histogram. Returns (histogram, empty)."""
    D = np.asarray(descriptors, dtype=np.float64)
    if D.size == 0:
        return np.full(vocab.k, 1.0 / vocab.k), True
    words = sq_distances(D.reshape(len(D), -1), vocab.centroids).argmin(axis=1)
    hist = np.bincount(words, minlength=vocab.k).astype(np.float64)
    return hist / hist.sum(), False


# ---------------------------------------------------------------- chi-squared kernels

def chi2_distance(X: np.ndarray, Y: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Half the chi-squared distance, sum (x-y)^2/(x+y) / 2, between all row pairs."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if (X < 0).any() or (Y < 0).any():
        raise NegativeInput("chi-squared kernels need non-negative inputs")
    out = np.empty((X.shape[0], Y.shape[0]))
    for s in range(0, X.shape[0], chunk):
        a = X[s : s + chunk, None, :]
        num = (a - Y[None, :, :]) ** 2
        den = a + Y[None, :, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            terms = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        out[s : s + chunk] = 0.5 * terms.sum(axis=2)
    return out


def chi2_rbf_gram(X: np.ndarray, Y: np.ndarray | None = None, gamma: float = 1.0) -> np.ndarray:
    Ysym = Y is None
    K = np.exp(-gamma * chi2_distance(X, X if Ysym else Y))
    if Ysym:
        K = 0.5 * (K + K.T)
    return K


def additive_chi2(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact additive chi-squared kernel sum 2 x y / (x + y) along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    s = x + y
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(s > 0, 2.0 * x * y / np.where(s > 0, s, 1.0), 0.0)
    return t.sum(axis=-1)


def chi2_feature_map(x: np.ndarray, order: int = 3, period: float = 0.5) -> np.ndarray:
    """Explicit feature map of the additive chi-squared kernel.

    Each coordinate expands into ``2*order + 1`` values obtained by sampling
    the kernel spectrum sech(pi * w) at multiples of ``period``. The output
    layout along the last axis is [j=0 | cos j=1 | sin j=1 | ... ], each
    block as wide as the input.
    """
    x = np.asarray(x, dtype=np.float64)
    if (x < 0).any():
        raise NegativeInput("chi2_feature_map needs non-negative input")
    pos = x > 0
    logx = np.log(np.where(pos, x, 1.0))
    parts = [np.sqrt(x * period)]  # sech(0) = 1
    for j in range(1, order + 1):
        lam = j * period
        scale = np.sqrt(2.0 * x * period / np.cosh(math.pi * lam))
        parts.append(np.where(pos, scale * np.cos(lam * logx), 0.0))
        parts.append(np.where(pos, scale * np.sin(lam * logx), 0.0))
    return np.concatenate(parts, axis=-1)


# ---------------------------------------------------------------- second-order pooling

def spd_logm(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    if (w <= 0).any():
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (V * np.log(w)) @ V.T


def spd_expm(L: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(L)
    return (V * np.exp(w)) @ V.T


def o2p_encode(descriptors: np.ndarray, epsilon: float = 1e-3, exponent: float = 0.5) -> np.ndarray:
    """Log-Euclidean second-order pooling followed by signed power scaling."""
    D = np.asarray(descriptors, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] < 2:
        raise TooFewDescriptors("second-order pooling needs at least 2 descriptors")
    d = D.shape[1]
    S = np.cov(D, rowvar=False).reshape(d, d) + epsilon * np.eye(d)
    L = spd_logm(0.5 * (S + S.T))
    iu = np.triu_indices(d)
    v = L[iu] * np.where(iu[0] == iu[1], 1.0, math.sqrt(2.0))
    return np.sign(v) * np.abs(v) ** exponent


# ---------------------------------------------------------------- linear SVM

@dataclass
class LinearModel:
    w: np.ndarray
    b: float
    C: float
    history: list[float] = field(default_factory=list, repr=False)

    def decision(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.w + self.b


@njit(cache=True)
def _dcd_epoch(X, y, alpha, w, qdiag, order, C):
    # one pass of dual coordinate descent for the L1-loss SVM; w includes the bias slot
    n, d = X.shape
    for k in range(n):
        i = order[k]
        if qdiag[i] <= 0.0:
            continue
        g = 0.0
        for j in range(d):
            g += w[j] * X[i, j]
        g = y[i] * g - 1.0
        a = alpha[i]
        if a == 0.0:
            pg = min(g, 0.0)
        elif a == C:
            pg = max(g, 0.0)
        else:
            pg = g
        if pg != 0.0:
            na = min(max(a - g / qdiag[i], 0.0), C)
            delta = (na - a) * y[i]
            for j in range(d):
                w[j] += delta * X[i, j]
            alpha[i] = na


def _linear_objectives(Xa, y, alpha, w, C):
    margins = 1.0 - y * (Xa @ w)
    primal = 0.5 * w @ w + C * np.maximum(margins, 0.0).sum()
    dual = alpha.sum() - 0.5 * w @ w
    return primal, dual


def svm_train_linear(
    X: np.ndarray,
    y: np.ndarray,
    C: float = 1.0,
    rng_seed: int = 0,
    tol: float = 1e-4,
    max_epochs: int = 2000,
    bias: float = 1.0,
) -> LinearModel:
    """L2-regularized hinge-loss SVM solved in the dual by coordinate descent.

    The loss is summed over examples. The bias is learnt as the weight of a
    constant feature of value ``bias`` and is therefore regularized too.
    Training stops once the duality gap falls below ``tol`` times the primal
    objective. ``history`` records the negated dual objective after each
    epoch, which never increases.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise SingleClass("training labels must contain both -1 and +1")
    if C <= 0:
        raise ValueError("C must be positive")
    Xa = np.hstack([X, np.full((len(X), 1), bias)]) if bias > 0 else X.copy()
    Xa = np.ascontiguousarray(Xa)
    qdiag = np.einsum("ij,ij->i", Xa, Xa)
    alpha = np.zeros(len(X))
    w = np.zeros(Xa.shape[1])
    rng = np.random.default_rng(rng_seed)
    history = []
    for _ in range(max_epochs):
        _dcd_epoch(Xa, y, alpha, w, qdiag, rng.permutation(len(X)), float(C))
        primal, dual = _linear_objectives(Xa, y, alpha, w, C)
        history.append(-dual)
        if primal - dual <= tol * abs(primal):
            break
    else:
        log.warning("linear SVM stopped at max_epochs with gap %.3g", primal - dual)
    if bias > 0:
        return LinearModel(w[:-1].copy(), float(w[-1] * bias), float(C), history)
    return LinearModel(w.copy(), 0.0, float(C), history)


# ---------------------------------------------------------------- kernel SVM and MKL

@njit(cache=True)
def _kernel_dcd(K, y, alpha, C, tol, max_epochs, order_seed):
    n = K.shape[0]
    np.random.seed(order_seed)
    # f = K (alpha * y)
    f = np.zeros(n)
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += K[i, j] * alpha[j] * y[j]
        f[i] = s
    for epoch in range(max_epochs):
        order = np.random.permutation(n)
        maxpg = 0.0
        for k in range(n):
            i = order[k]
            qii = K[i, i]
            if qii <= 0.0:
                continue
            g = y[i] * f[i] - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(g, 0.0)
            elif a == C:
                pg = max(g, 0.0)
            else:
                pg = g
            if abs(pg) > maxpg:
                maxpg = abs(pg)
            if pg != 0.0:
                na = min(max(a - g / qii, 0.0), C)
                delta = (na - a) * y[i]
                if delta != 0.0:
                    for j in range(n):
                        f[j] += delta * K[j, i]
                    alpha[i] = na
        if maxpg < tol:
            break
    return alpha


def svm_train_kernel(K: np.ndarray, y: np.ndarray, C: float, alpha0: np.ndarray | None = None, tol: float = 1e-6, max_epochs: int = 5000, rng_seed: int = 0) -> np.ndarray:
    """Dual coefficients of a kernel SVM; the bias enters as a constant kernel offset of 1."""
    y = np.asarray(y, dtype=np.float64)
    Kb = np.ascontiguousarray(np.asarray(K, dtype=np.float64) + 1.0)
    alpha = np.zeros(len(y)) if alpha0 is None else np.clip(alpha0.astype(np.float64), 0.0, C)
    return _kernel_dcd(Kb, y, alpha, float(C), tol, max_epochs, rng_seed)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    w = np.maximum(v - theta, 0.0)
    return w / w.sum()


def _psd_floor(K: np.ndarray) -> np.ndarray:
    K = 0.5 * (K + K.T)
    w, V = np.linalg.eigh(K)
    if w.min() < -1e-6:
        import warnings

        warnings.warn(f"Gram matrix not PSD (min eigenvalue {w.min():.3g}); flooring", NotPSD)
        return (V * np.maximum(w, 0.0)) @ V.T
    return K


@dataclass
class MklModel:
    beta: np.ndarray
    alpha: np.ndarray
    y: np.ndarray
    C: float
    objective: list[float] = field(default_factory=list, repr=False)

    def decision(self, grams_test: np.ndarray) -> np.ndarray:
        """Scores for test rows; ``grams_test`` is (channels, n_test, n_train)."""
        K = np.tensordot(self.beta, np.asarray(grams_test), axes=1) + 1.0
        return K @ (self.alpha * self.y)


def _mkl_objective(grams, beta, y, alpha, sigma_reg):
    ay = alpha * y
    K = np.tensordot(beta, grams, axes=1) + 1.0
    ent = float(np.sum(beta[beta > 0] * np.log(beta[beta > 0])))
    return alpha.sum() - 0.5 * ay @ K @ ay + sigma_reg * ent


def mkl_train(
    grams: np.ndarray,
    y: np.ndarray,
    C: float = 10.0,
    sigma_reg: float = 1e-3,
    max_outer: int = 60,
    tol: float = 1e-5,
    rng_seed: int = 0,
) -> MklModel:
    """Learn simplex kernel weights jointly with a kernel SVM.

    Alternates between solving the SVM for fixed weights and a projected
    (reduced) gradient step on the weights, with a backtracking line search
    on the regularized SVM objective. ``sigma_reg`` weighs an entropy term
    that pulls the weights toward uniform.
    """
    G = np.asarray(grams, dtype=np.float64)
    if G.ndim == 2:
        G = G[None]
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise SingleClass("MKL needs both classes")
    G = np.stack([_psd_floor(K) for K in G])
    m = G.shape[0]
    beta = np.full(m, 1.0 / m)
    alpha = svm_train_kernel(np.tensordot(beta, G, axes=1), y, C, rng_seed=rng_seed)
    obj = _mkl_objective(G, beta, y, alpha, sigma_reg)
    history = [obj]
    if m == 1:
        return MklModel(beta, alpha, y, C, history)
    step = 1.0
    for _ in range(max_outer):
        ay = alpha * y
        grad = -0.5 * np.einsum("i,mij,j->m", ay, G, ay)
        grad = grad + sigma_reg * (1.0 + np.log(np.maximum(beta, 1e-12)))
        spread = np.ptp(grad)
        if spread <= 1e-12:
            break
        improved = False
        for _ in range(12):
            cand = project_simplex(beta - step * grad / spread)
            if np.abs(cand - beta).max() < tol:
                break
            a_c = svm_train_kernel(np.tensordot(cand, G, axes=1), y, C, alpha0=alpha, rng_seed=rng_seed)
            o_c = _mkl_objective(G, cand, y, a_c, sigma_reg)
            if o_c < obj - 1e-12 * max(1.0, abs(obj)):
                beta, alpha, obj = cand, a_c, o_c
                improved = True
                step = min(step * 2.0, 1.0)
                break
            step *= 0.5
        history.append(obj)
        if not improved:
            break
    return MklModel(beta, alpha, y, C, history)


# ---------------------------------------------------------------- ranking metrics

def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean over positives of the precision at each positive's rank.

    Ranks follow descending score with ties kept in input order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if not labels.any():
        raise NoPositives("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    ranks = np.nonzero(hits)[0] + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))
