"""Stochastic convex objectives accessed through sampled gradients.

Two problem families are provided:

* :class:`QuadraticProblem` -- randomly perturbed diagonal quadratics,
  f(w, theta) = 0.5 w'(A + A diag(theta)) w + b'w with theta uniform on
  [-theta0, theta0]^n, so the expected objective is F(w) = 0.5 w'Aw + b'w.
* :class:`SvmProblem` -- regularized binary SVM training risk over a finite
  training set, f(w, (x, y)) = lam/2 ||w||^2 + loss(y, x'w), with the
  expectation taken uniformly over the training pairs.

Both expose the same batch interface consumed by the optimizers: draw a
batch of L i.i.d. samples, then evaluate the averaged stochastic gradient
at any iterate.  Batches are immutable so the same batch can be re-evaluated
at two consecutive iterates.
"""
from __future__ import annotations

import csv
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._util import as_rng, fmt_float

SVM_LOSSES = ("hinge", "squared_hinge", "log")

# reject curvature draws below this in the uniform generator family
_A_REJECT = 1e-12


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """A batch of L i.i.d. samples from a problem's sample space.

    ``samples`` is problem specific: an (L, n) array of perturbation
    vectors for quadratics, or an (L,) array of training-set indices for
    SVM problems.
    """

    samples: np.ndarray

    def __post_init__(self):
        if len(self.samples) < 1:
            raise ValueError("a batch must contain at least one sample")

    @property
    def size(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class CurvatureBounds:
    """Bounds 0 < m_tilde <= M_tilde on instantaneous Hessian eigenvalues.

    ``s_sq_bound`` optionally carries a bound on E[||stochastic gradient||^2]
    when one is known; it is usually estimated empirically instead.
    """

    m_tilde: float
    M_tilde: float
    s_sq_bound: float | None = None

    def __post_init__(self):
        if not (0.0 < self.m_tilde <= self.M_tilde < np.inf):
            raise ValueError(
                f"need 0 < m_tilde <= M_tilde < inf, got ({self.m_tilde}, {self.M_tilde})"
            )


class StochasticObjective(ABC):
    """Expected objective F(w) = E[f(w, theta)] seen through sampled batches."""

    @property
    @abstractmethod
    def dim(self) -> int:
        ...

    @abstractmethod
    def draw_batch(self, L: int, rng: np.random.Generator) -> SampleBatch:
        """Draw L i.i.d. samples (with replacement where applicable)."""

    @abstractmethod
    def stochastic_gradient(self, w: np.ndarray, batch: SampleBatch) -> np.ndarray:
        """Average of per-sample gradients over the batch."""

    @abstractmethod
    def stochastic_value(self, w: np.ndarray, batch: SampleBatch) -> float:
        """Average of per-sample function values over the batch."""

    @abstractmethod
    def curvature_bounds(self) -> CurvatureBounds:
        ...

    @abstractmethod
    def exact_objective(self, w: np.ndarray) -> float:
        """Deterministic evaluation of F(w); for reporting, never inside
        the optimizer loop."""

    def _check_iterate(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            raise ValueError(f"iterate has shape {w.shape}, expected ({self.dim},)")
        return w


@dataclass(frozen=True, eq=False)
class QuadraticProblem(StochasticObjective):
    """Randomly perturbed diagonal quadratic.

    A = diag(a_diag) is positive definite and the per-sample Hessian is
    A + A diag(theta) with theta uniform on [-theta0, theta0]^n, so its
    eigenvalues lie in [(1 - theta0) min a, (1 + theta0) max a].
    """

    a_diag: np.ndarray
    b: np.ndarray
    theta0: float
    seed: int | None = None  # generation provenance, kept in the descriptor

    def __post_init__(self):
        a = np.asarray(self.a_diag, dtype=float)
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "a_diag", a)
        object.__setattr__(self, "b", b)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("a_diag must be a nonempty vector")
        if b.shape != a.shape:
            raise ValueError("b must have the same shape as a_diag")
        if not np.all(a > 0):
            raise ValueError("a_diag must be strictly positive")
        if not (0.0 <= self.theta0 < 1.0):
            raise ValueError("theta0 must lie in [0, 1) to keep Hessians positive")

    @property
    def dim(self) -> int:
        return self.a_diag.size

    def draw_batch(self, L, rng):
        if L < 1:
            raise ValueError("batch size must be at least 1")
        thetas = rng.uniform(-self.theta0, self.theta0, size=(L, self.dim))
        return SampleBatch(thetas)

    # -- per-sample access (used by the gradient consistency checks) --

    def sample_value(self, w, theta) -> float:
        w = self._check_iterate(w)
        h = self.a_diag * (1.0 + theta)
        return 0.5 * float(w @ (h * w)) + float(self.b @ w)

    def sample_gradient(self, w, theta) -> np.ndarray:
        w = self._check_iterate(w)
        return self.a_diag * (1.0 + theta) * w + self.b

    def instantaneous_hessian(self, theta) -> np.ndarray:
        """Per-sample Hessian A + A diag(theta); constant in w."""
        return np.diag(self.a_diag * (1.0 + np.asarray(theta, dtype=float)))

    # -- batch interface --

    def stochastic_gradient(self, w, batch):
        w = self._check_iterate(w)
        theta_bar = batch.samples.mean(axis=0)
        return self.a_diag * (1.0 + theta_bar) * w + self.b

    def stochastic_value(self, w, batch):
        w = self._check_iterate(w)
        theta_bar = batch.samples.mean(axis=0)
        h = self.a_diag * (1.0 + theta_bar)
        return 0.5 * float(w @ (h * w)) + float(self.b @ w)

    def exact_objective(self, w):
        w = self._check_iterate(w)
        return 0.5 * float(w @ (self.a_diag * w)) + float(self.b @ w)

    def optimum(self) -> np.ndarray:
        """Minimizer of F: the stationary point solving A w = -b."""
        return -self.b / self.a_diag

    def curvature_bounds(self):
        return CurvatureBounds(
            m_tilde=(1.0 - self.theta0) * float(self.a_diag.min()),
            M_tilde=(1.0 + self.theta0) * float(self.a_diag.max()),
        )

    # -- descriptor round-trip --

    def to_json_dict(self) -> dict:
        return {
            "a_diag": self.a_diag.tolist(),
            "b": self.b.tolist(),
            "theta0": self.theta0,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "QuadraticProblem":
        unknown = set(d) - {"a_diag", "b", "theta0", "seed"}
        if unknown:
            raise ValueError(f"unknown problem descriptor fields: {sorted(unknown)}")
        return cls(
            a_diag=np.asarray(d["a_diag"], dtype=float),
            b=np.asarray(d["b"], dtype=float),
            theta0=float(d["theta0"]),
            seed=d.get("seed"),
        )

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "QuadraticProblem":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def generate_quadratic(n, xi, theta0, rng) -> QuadraticProblem:
    """Draw a random quadratic instance.

    ``xi`` selects the curvature family: an integer xi >= 0 draws each a_ii
    uniformly from the xi + 1 values {1, 10^-1, ..., 10^-xi} (condition
    number rises with xi); the string "uniform" draws a_ii uniformly from
    (0, 1], rejecting values below 1e-12.  b is uniform on [0, 1]^n.
    """
    seed = None
    if not isinstance(rng, np.random.Generator):
        if not isinstance(rng, np.random.SeedSequence):
            seed = int(rng)
        rng = as_rng(rng)
    if n < 1:
        raise ValueError("dimension must be at least 1")
    if xi == "uniform":
        a = 1.0 - rng.uniform(size=n)  # lies in (0, 1]
        while np.any(a < _A_REJECT):
            bad = a < _A_REJECT
            a[bad] = 1.0 - rng.uniform(size=int(bad.sum()))
    elif isinstance(xi, (int, np.integer)) and not isinstance(xi, bool) and xi >= 0:
        exponents = rng.integers(0, int(xi) + 1, size=n)
        a = 10.0 ** (-exponents.astype(float))
    else:
        raise ValueError(f"xi must be a nonnegative integer or 'uniform', got {xi!r}")
    b = rng.uniform(0.0, 1.0, size=n)
    return QuadraticProblem(a_diag=a, b=b, theta0=float(theta0), seed=seed)


@dataclass(frozen=True, eq=False)
class SvmProblem(StochasticObjective):
    """Regularized binary SVM training risk over a finite training set.

    Batches sample training-pair indices uniformly with replacement.  The
    hinge loss is subdifferentiable only; at its kink the subgradient 0 is
    used.  The squared hinge (default elsewhere) and logistic losses are
    differentiable.
    """

    X: np.ndarray
    y: np.ndarray
    lam: float
    loss: str = "squared_hinge"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("X must be a nonempty (N, n) array")
        if y.shape != (X.shape[0],):
            raise ValueError("y must be a vector matching the rows of X")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.loss not in SVM_LOSSES:
            raise ValueError(f"loss must be one of {SVM_LOSSES}, got {self.loss!r}")

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    def draw_batch(self, L, rng):
        if L < 1:
            raise ValueError("batch size must be at least 1")
        idx = rng.integers(0, self.n_samples, size=L)
        return SampleBatch(idx)

    def _loss_terms(self, margins: np.ndarray) -> np.ndarray:
        if self.loss == "hinge":
            return np.maximum(0.0, 1.0 - margins)
        if self.loss == "squared_hinge":
            return np.maximum(0.0, 1.0 - margins) ** 2
        return np.logaddexp(0.0, -margins)

    def _loss_margin_derivs(self, margins: np.ndarray) -> np.ndarray:
        # derivative of the loss w.r.t. the margin y * x'w
        if self.loss == "hinge":
            return np.where(margins < 1.0, -1.0, 0.0)
        if self.loss == "squared_hinge":
            return -2.0 * np.maximum(0.0, 1.0 - margins)
        return -expit(-margins)

    # -- per-sample access --

    def sample_value(self, w, index: int) -> float:
        w = self._check_iterate(w)
        m = self.y[index] * float(self.X[index] @ w)
        reg = 0.5 * self.lam * float(w @ w)
        return reg + float(self._loss_terms(np.asarray([m]))[0])

    def sample_gradient(self, w, index: int) -> np.ndarray:
        w = self._check_iterate(w)
        m = self.y[index] * float(self.X[index] @ w)
        d = float(self._loss_margin_derivs(np.asarray([m]))[0])
        return self.lam * w + d * self.y[index] * self.X[index]

    # -- batch interface --

    def stochastic_gradient(self, w, batch):
        w = self._check_iterate(w)
        idx = batch.samples
        Xb = self.X[idx]
        yb = self.y[idx]
        margins = yb * (Xb @ w)
        d = self._loss_margin_derivs(margins)
        return self.lam * w + ((d * yb) @ Xb) / len(idx)

    def stochastic_value(self, w, batch):
        w = self._check_iterate(w)
        idx = batch.samples
        margins = self.y[idx] * (self.X[idx] @ w)
        return 0.5 * self.lam * float(w @ w) + float(self._loss_terms(margins).mean())

    def exact_objective(self, w):
        """Full pass over the training set; reporting only."""
        w = self._check_iterate(w)
        margins = self.y * (self.X @ w)
        return 0.5 * self.lam * float(w @ w) + float(self._loss_terms(margins).mean())

    def curvature_bounds(self):
        row_sq = float((self.X * self.X).sum(axis=1).max())
        if self.loss == "squared_hinge":
            M = self.lam + 2.0 * row_sq
        elif self.loss == "log":
            M = self.lam + 0.25 * row_sq
        else:  # hinge: loss Hessian vanishes almost everywhere
            M = self.lam
        return CurvatureBounds(m_tilde=self.lam, M_tilde=M)


def classify_accuracy(w, X, y) -> float:
    """Fraction of pairs with sign(x'w) == y; a zero score counts as
    misclassified."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree on the number of pairs")
    scores = X @ np.asarray(w, dtype=float)
    return float(np.mean(scores * y > 0))


def generate_svm_data(n, N, rng) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic linearly separable-in-expectation classification data.

    N/2 pairs with y = -1 and coordinates uniform on [-0.8, 0.2], then
    N/2 pairs with y = +1 and coordinates uniform on [-0.2, 0.8].
    """
    if N < 2 or N % 2 != 0:
        raise ValueError("N must be a positive even number")
    if n < 1:
        raise ValueError("dimension must be at least 1")
    rng = as_rng(rng)
    half = N // 2
    X_neg = rng.uniform(-0.8, 0.2, size=(half, n))
    X_pos = rng.uniform(-0.2, 0.8, size=(half, n))
    X = np.vstack([X_neg, X_pos])
    y = np.concatenate([-np.ones(half), np.ones(half)])
    return X, y


def save_training_csv(path, X, y) -> None:
    """Write a training set as CSV with header x_1,...,x_n,y."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n = X.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x_{j + 1}" for j in range(n)] + ["y"])
        for row, label in zip(X, y):
            writer.writerow([fmt_float(v) for v in row] + [str(int(label))])


def load_training_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a training set written by :func:`save_training_csv`.

    Raises ValueError with a diagnostic on any malformed header, row
    width, feature value, or label.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if len(header) < 2 or header[-1] != "y":
            raise ValueError(f"{path}: header must be x_1,...,x_n,y")
        n = len(header) - 1
        expected = [f"x_{j + 1}" for j in range(n)]
        if header[:-1] != expected:
            raise ValueError(f"{path}: header must be x_1,...,x_n,y, got {header}")
        xs, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n + 1:
                raise ValueError(f"{path}:{lineno}: expected {n + 1} fields, got {len(row)}")
            try:
                xs.append([float(v) for v in row[:-1]])
                label = float(row[-1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
            if label not in (-1.0, 1.0):
                raise ValueError(f"{path}:{lineno}: label must be -1 or +1, got {row[-1]}")
            ys.append(label)
    if not xs:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(xs), np.asarray(ys)
