"""Regularized stochastic BFGS curvature estimation.

The Hessian approximation B is updated from a gradient variation pair
(v, r_hat) measured on a single batch:

    v       = w_next - w
    r_hat   = grad(w_next) - grad(w)        (same batch at both iterates)
    r_tilde = r_hat - delta * v

    B_next  = B + r_tilde r_tilde' / (v' r_tilde)
                - B v v' B / (v' B v) + delta * I

The delta * I term keeps every eigenvalue of B_next at or above delta, and
subtracting delta * v from the variation preserves the secant relation
B_next v = r_hat.  With delta = 0 the update reduces to the classic BFGS
formula.

Updates are skipped, never clipped, when the displacement is numerically
zero or the observed curvature v' r_tilde is not safely positive.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

# squared-displacement floor below which a step is treated as no movement
EPS_V = 1e-24
# relative curvature floor: accept only v' r_tilde > EPS_C * ||v||^2
EPS_C = 1e-10

# extra runtime validation (eigenvalue floor after every accepted update);
# enabled by tests, off in normal runs
STRICT_CHECKS = False


class InternalStateError(RuntimeError):
    """The curvature state stopped being usable (non-PD or ill-conditioned)."""


class SkipReason(enum.Enum):
    NO_MOVEMENT = "no_movement"
    CURVATURE_NOT_POSITIVE = "curvature_not_positive"


@dataclass(frozen=True, eq=False)
class HessianApprox:
    """Symmetric positive definite approximation B with eigenvalue floor
    delta (floor 0 means the classic, non-regularized estimate)."""

    B: np.ndarray
    delta: float

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        object.__setattr__(self, "B", B)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError("B must be a square matrix")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    @property
    def dim(self) -> int:
        return self.B.shape[0]


@dataclass(frozen=True, eq=False)
class VariationPair:
    """Displacement and gradient variation measured on one batch.

    r_tilde is constructed exactly as r_hat - delta * v; keeping all three
    avoids recomputing the regularized variation in the update and the
    inverse formulas.
    """

    v: np.ndarray
    r_hat: np.ndarray
    r_tilde: np.ndarray

    @classmethod
    def from_gradients(cls, v, r_hat, delta: float) -> "VariationPair":
        v = np.asarray(v, dtype=float)
        r_hat = np.asarray(r_hat, dtype=float)
        return cls(v=v, r_hat=r_hat, r_tilde=r_hat - delta * v)


def initial_hessian(n: int, delta: float, scale: float | None = None) -> HessianApprox:
    """Identity-scaled starting approximation, (delta + 1) I by default."""
    if scale is None:
        scale = delta + 1.0
    if scale < delta or scale <= 0:
        raise ValueError("initial scale must be positive and at least delta")
    return HessianApprox(B=scale * np.eye(n), delta=float(delta))


def regularized_update(H: HessianApprox, pair: VariationPair):
    """Apply one regularized BFGS update.

    Returns the new HessianApprox, or a SkipReason when the pair fails a
    guard (the caller keeps the previous approximation in that case).
    """
    v, r_tilde = pair.v, pair.r_tilde
    v_sq = float(v @ v)
    if v_sq <= EPS_V:
        return SkipReason.NO_MOVEMENT
    curv = float(v @ r_tilde)
    if curv <= EPS_C * v_sq:
        return SkipReason.CURVATURE_NOT_POSITIVE
    B = H.B
    Bv = B @ v
    vBv = float(v @ Bv)
    if vBv <= 0.0:
        raise InternalStateError(
            f"quadratic form v'Bv = {vBv} is not positive; approximation corrupted"
        )
    B_next = (
        B
        + np.outer(r_tilde, r_tilde) / curv
        - np.outer(Bv, Bv) / vBv
        + H.delta * np.eye(H.dim)
    )
    B_next = 0.5 * (B_next + B_next.T)
    if STRICT_CHECKS and H.delta > 0:
        _assert_floor(B_next, H.delta)
    return HessianApprox(B=B_next, delta=H.delta)


def classic_update(H: HessianApprox, pair: VariationPair):
    """Classic BFGS update B + r r'/(v'r) - Bvv'B/(v'Bv), no regularization.

    Written out independently of regularized_update so the delta = 0
    reduction can be verified against it.  Requires H.delta == 0 and a
    pair built with delta = 0 (r_tilde == r_hat).
    """
    if H.delta != 0.0:
        raise ValueError("classic_update requires a zero eigenvalue floor")
    v, r = pair.v, pair.r_hat
    v_sq = float(v @ v)
    if v_sq <= EPS_V:
        return SkipReason.NO_MOVEMENT
    curv = float(v @ r)
    if curv <= EPS_C * v_sq:
        return SkipReason.CURVATURE_NOT_POSITIVE
    Bv = H.B @ v
    vBv = float(v @ Bv)
    if vBv <= 0.0:
        raise InternalStateError(
            f"quadratic form v'Bv = {vBv} is not positive; approximation corrupted"
        )
    B_next = H.B + np.outer(r, r) / curv - np.outer(Bv, Bv) / vBv
    B_next = 0.5 * (B_next + B_next.T)
    return HessianApprox(B=B_next, delta=0.0)


def inverse_of_shifted(H_prev: HessianApprox, pair: VariationPair,
                       B_prev_inv: np.ndarray | None = None) -> np.ndarray:
    """Structured inverse of (B_next - delta I) for an accepted update.

    B_next - delta I is a classic BFGS update of B_prev with the pair
    (v, r_tilde), so its inverse has the rank-two form

        v v'/(r_tilde' v)
        + (I - v r_tilde'/(r_tilde' v)) B_prev^{-1} (I - r_tilde v'/(r_tilde' v))

    Pass B_prev_inv to reuse an already-known inverse of B_prev.
    """
    v, r_tilde = pair.v, pair.r_tilde
    curv = float(v @ r_tilde)
    v_sq = float(v @ v)
    if v_sq <= EPS_V or curv <= EPS_C * v_sq:
        raise ValueError("inverse formula needs an accepted pair with positive curvature")
    if B_prev_inv is None:
        B_prev_inv = np.linalg.inv(H_prev.B)
    n = H_prev.dim
    P = np.eye(n) - np.outer(v, r_tilde) / curv
    out = np.outer(v, v) / curv + P @ B_prev_inv @ P.T
    return 0.5 * (out + out.T)


def descent_matrix(H: HessianApprox, Gamma: float) -> np.ndarray:
    """B^{-1} + Gamma I, the matrix applied to stochastic gradients.

    With B's eigenvalues in [delta, inf) the result's eigenvalues lie in
    [Gamma, Gamma + 1/delta].
    """
    if Gamma < 0:
        raise ValueError("Gamma must be nonnegative")
    cond = np.linalg.cond(H.B)
    if not np.isfinite(cond) or cond > 1e12:
        raise InternalStateError(f"approximation condition estimate {cond:.3e} too large")
    try:
        c, low = cho_factor(H.B)
    except np.linalg.LinAlgError as exc:
        raise InternalStateError(f"approximation not positive definite: {exc}") from exc
    B_inv = cho_solve((c, low), np.eye(H.dim))
    out = B_inv + Gamma * np.eye(H.dim)
    return 0.5 * (out + out.T)


def descent_direction(H: HessianApprox, s_hat: np.ndarray, Gamma: float) -> np.ndarray:
    """(B^{-1} + Gamma I) s_hat via one positive definite linear solve."""
    if H.delta > 0:
        try:
            c, low = cho_factor(H.B)
        except np.linalg.LinAlgError as exc:
            raise InternalStateError(f"approximation not positive definite: {exc}") from exc
        x = cho_solve((c, low), s_hat)
    else:
        # the classic estimate can drift numerically indefinite; a general
        # solve keeps the run alive until divergence detection triggers
        try:
            x = np.linalg.solve(H.B, s_hat)
        except np.linalg.LinAlgError as exc:
            raise InternalStateError(f"approximation singular: {exc}") from exc
    return x + Gamma * s_hat


def _assert_floor(B: np.ndarray, delta: float, slack: float = 1e-8) -> None:
    # cholesky of B - (delta - slack) I succeeds iff min eig > delta - slack
    try:
        np.linalg.cholesky(B - (delta - slack) * np.eye(B.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise InternalStateError(
            f"updated approximation dips below the eigenvalue floor {delta}"
        ) from exc
