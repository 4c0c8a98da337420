"""Embedding space, contrastive loss and a small trainable embedder.

The embedder maps raw building features to an L2-normalized embedding.
Both views share the same weights. Gradients are computed analytically
and checked against finite differences in the test-suite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ContractError,
    DegenerateVectorError,
    InsufficientDataError,
    ParseError,
    UndefinedMetricError,
)

logger = logging.getLogger(__name__)

_NORM_EPS = 1e-12
_UNIT_TOL = 1e-6
MODEL_MAGIC = "xviewgeo-embedder"
MODEL_VERSION = 1


@dataclass(frozen=True)
class PairSample:
    x_raw: np.ndarray
    y_raw: np.ndarray
    label: int  # 1 = matched, 0 = unmatched


def l2_normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm <= _NORM_EPS:
        raise DegenerateVectorError(f"cannot normalize vector with norm {norm:g}")
    return v / norm


def _check_unit(v: np.ndarray, name: str) -> None:
    if abs(np.linalg.norm(v) - 1.0) > _UNIT_TOL:
        raise ContractError(f"{name} is not L2-normalized (norm {np.linalg.norm(v):.6g})")


def pair_distance(a, b) -> float:
    """Euclidean distance between two unit vectors, in [0, 2]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_unit(a, "a")
    _check_unit(b, "b")
    return float(min(np.linalg.norm(a - b), 2.0))


def contrastive_loss_from_distance(d: float, label: int, margin: float = 1.0) -> float:
    if label == 1:
        return 0.5 * d * d
    hinge = max(0.0, margin - d)
    return 0.5 * hinge * hinge


def contrastive_loss(a, b, label: int, margin: float = 1.0) -> float:
    """``0.5*l*D^2 + 0.5*(1-l)*max(0, m-D)^2``."""
    if margin <= 0:
        raise ContractError("margin must be positive")
    return contrastive_loss_from_distance(pair_distance(a, b), label, margin)


def similarity(a, b) -> float:
    """Matching score ``1 - D/2``: 1 for identical, 0 for antipodal embeddings."""
    return 1.0 - pair_distance(a, b) / 2.0


def average_precision(scores: Sequence[tuple[float, int]]) -> float:
    """Non-interpolated AP of a ranking by descending score.

    Ties keep their input order.
    """
    if len(scores) == 0:
        raise UndefinedMetricError("average precision of an empty ranking")
    s = np.array([float(x[0]) for x in scores])
    y = np.array([int(x[1]) for x in scores])
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one positive")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    precision_at = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision_at[hits == 1].sum() / n_pos)


@dataclass
class Embedder:
    """Shared-weight embedder: linear map, or one ReLU hidden layer then linear.

    ``weights`` holds ``[W]`` (F x F_raw) or ``[W1, W2]`` (H x F_raw, F x H).
    """

    weights: list[np.ndarray]
    margin: float = 1.0
    history: list[float] = field(default_factory=list, compare=False)

    def __post_init__(self):
        if self.margin <= 0:
            raise ContractError("margin must be positive")
        self.weights = [np.ascontiguousarray(w, dtype=float) for w in self.weights]
        if not all(np.all(np.isfinite(w)) for w in self.weights):
            raise ContractError("embedder weights must be finite")
        if len(self.weights) not in (1, 2):
            raise ContractError("embedder has one or two weight matrices")
        if len(self.weights) == 2 and self.weights[1].shape[1] != self.weights[0].shape[0]:
            raise ContractError("hidden layer shapes do not chain")

    @classmethod
    def random(cls, f_raw: int = 64, f: int = 32, hidden: int | None = None,
               margin: float = 1.0, seed: int = 0) -> "Embedder":
        rng = np.random.default_rng(seed)
        if hidden:
            w1 = rng.normal(0.0, 1.0 / np.sqrt(f_raw), size=(hidden, f_raw))
            w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(f, hidden))
            return cls([w1, w2], margin)
        return cls([rng.normal(0.0, 1.0 / np.sqrt(f_raw), size=(f, f_raw))], margin)

    @property
    def f_raw(self) -> int:
        return self.weights[0].shape[1]

    @property
    def f(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def hidden(self) -> int:
        return self.weights[0].shape[0] if len(self.weights) == 2 else 0

    def copy(self) -> "Embedder":
        return Embedder([w.copy() for w in self.weights], self.margin, list(self.history))

    def _forward(self, X: np.ndarray):
        if len(self.weights) == 1:
            return X @ self.weights[0].T, None
        h = np.maximum(X @ self.weights[0].T, 0.0)
        return h @ self.weights[1].T, h

    def embed(self, raw) -> np.ndarray:
        """Embed one raw vector (1-D) or a batch (2-D), returning unit rows."""
        X = np.asarray(raw, dtype=float)
        single = X.ndim == 1
        Z, _ = self._forward(np.atleast_2d(X))
        norms = np.linalg.norm(Z, axis=1, keepdims=True)
        if np.any(norms <= _NORM_EPS):
            raise DegenerateVectorError("embedder produced a zero vector")
        E = Z / norms
        return E[0] if single else E

    def loss_and_grad(self, X: np.ndarray, Y: np.ndarray, labels: np.ndarray):
        """Mean contrastive loss over a batch and its gradient per weight matrix."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        labels = np.asarray(labels, dtype=float).reshape(-1)
        zx, hx = self._forward(X)
        zy, hy = self._forward(Y)
        nx = np.linalg.norm(zx, axis=1, keepdims=True)
        ny = np.linalg.norm(zy, axis=1, keepdims=True)
        if np.any(nx <= _NORM_EPS) or np.any(ny <= _NORM_EPS):
            raise DegenerateVectorError("embedder produced a zero vector")
        fx, fy = zx / nx, zy / ny
        diff = fx - fy
        d = np.linalg.norm(diff, axis=1)
        hinge = np.maximum(0.0, self.margin - d)
        loss = 0.5 * labels * d ** 2 + 0.5 * (1.0 - labels) * hinge ** 2

        # dL/dfx; D = 0 on a negative pair has no direction, take zero
        safe_d = np.where(d > 0.0, d, 1.0)
        coef = labels - (1.0 - labels) * np.where(d > 0.0, hinge / safe_d, 0.0)
        gx = coef[:, None] * diff
        gy = -gx
        # through v/|v|
        dzx = (gx - fx * np.sum(fx * gx, axis=1, keepdims=True)) / nx
        dzy = (gy - fy * np.sum(fy * gy, axis=1, keepdims=True)) / ny

        b = len(labels)
        if len(self.weights) == 1:
            grads = [(dzx.T @ X + dzy.T @ Y) / b]
        else:
            w2 = self.weights[1]
            g2 = (dzx.T @ hx + dzy.T @ hy) / b
            dhx = (dzx @ w2) * (hx > 0)
            dhy = (dzy @ w2) * (hy > 0)
            g1 = (dhx.T @ X + dhy.T @ Y) / b
            grads = [g1, g2]
        return float(loss.mean()), grads

    def mean_loss(self, pairs: Sequence[PairSample]) -> float:
        X, Y, lab = _stack(pairs)
        return self.loss_and_grad(X, Y, lab)[0]

    # -- serialization ---------------------------------------------------
    def save(self, path) -> None:
        lines = [
            f"{MODEL_MAGIC} {MODEL_VERSION}",
            f"f_raw {self.f_raw}",
            f"f {self.f}",
            f"hidden {self.hidden}",
            f"margin {self.margin!r}",
        ]
        for w in self.weights:
            lines.append(f"matrix {w.shape[0]} {w.shape[1]}")
            lines.extend(" ".join(repr(float(v)) for v in row) for row in w)
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "Embedder":
        text = Path(path).read_text().splitlines()
        it = iter(enumerate(text, start=1))

        def take(key):
            lineno, line = next(it)
            parts = line.split()
            if not parts or parts[0] != key:
                raise ParseError(f"expected '{key}' header", line=lineno, field=key)
            return lineno, parts[1:]

        try:
            _, ver = take(MODEL_MAGIC)
            if int(ver[0]) != MODEL_VERSION:
                raise ParseError(f"unsupported model version {ver[0]}", line=1)
            f_raw = int(take("f_raw")[1][0])
            f = int(take("f")[1][0])
            hidden = int(take("hidden")[1][0])
            margin = float(take("margin")[1][0])
            weights = []
            for _ in range(2 if hidden else 1):
                lineno, (r, c) = take("matrix")
                rows = []
                for _ in range(int(r)):
                    lineno, line = next(it)
                    vals = [float(v) for v in line.split()]
                    if len(vals) != int(c):
                        raise ParseError(f"expected {c} values, got {len(vals)}", line=lineno)
                    rows.append(vals)
                weights.append(np.array(rows))
        except StopIteration:
            raise ParseError("truncated model file") from None
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"malformed model file: {exc}") from None
        e = cls(weights, margin)
        if e.f_raw != f_raw or e.f != f or e.hidden != hidden:
            raise ParseError("model header disagrees with matrix shapes")
        return e


def _stack(pairs: Sequence[PairSample]):
    X = np.array([p.x_raw for p in pairs], dtype=float)
    Y = np.array([p.y_raw for p in pairs], dtype=float)
    lab = np.array([p.label for p in pairs], dtype=float)
    return X, Y, lab


def contrastive_grad(sample: PairSample, e: Embedder) -> list[np.ndarray]:
    """Gradient of the single-pair contrastive loss w.r.t. every weight matrix."""
    return e.loss_and_grad(sample.x_raw[None, :], sample.y_raw[None, :],
                           np.array([sample.label]))[1]


def train_embedder(
    pairs: Sequence[PairSample],
    epochs: int = 20,
    learning_rate: float = 0.01,
    seed: int = 0,
    *,
    f: int = 32,
    hidden: int | None = None,
    margin: float = 1.0,
    batch_size: int = 1,
    init: Embedder | None = None,
) -> Embedder:
    """Mini-batch SGD on the contrastive loss.

    The returned embedder carries ``history``: the mean loss over all pairs
    before training and after each epoch. Weights from the epoch with the
    lowest mean loss are returned, so the final loss never exceeds the
    initial one.
    """
    labels = [p.label for p in pairs]
    if 1 not in labels or 0 not in labels:
        raise InsufficientDataError("training needs at least one matched and one unmatched pair")
    X, Y, lab = _stack(pairs)
    rng = np.random.default_rng(seed)
    if init is None:
        e = Embedder.random(X.shape[1], f, hidden, margin, seed=int(rng.integers(2**31)))
    else:
        e = init.copy()
    history = [e.loss_and_grad(X, Y, lab)[0]]
    best_loss, best = history[0], [w.copy() for w in e.weights]
    n = len(lab)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            _, grads = e.loss_and_grad(X[idx], Y[idx], lab[idx])
            for w, g in zip(e.weights, grads):
                w -= learning_rate * g
        loss = e.loss_and_grad(X, Y, lab)[0]
        if not np.isfinite(loss):
            raise FloatingPointError(f"training diverged at epoch {epoch + 1}")
        history.append(loss)
        logger.debug("epoch %d mean loss %.6f", epoch + 1, loss)
        if loss < best_loss:
            best_loss, best = loss, [w.copy() for w in e.weights]
    e.weights = best
    e.history = history
    return e
