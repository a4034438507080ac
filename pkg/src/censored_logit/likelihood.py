"""Utilities, choice probabilities and the purchase-conditional log-likelihood.

Intercepts are normalized against a baseline alternative ``k`` whose intercept
is pinned at 0.  The free parameter vector is ``(alpha*_j for j != k, in code
order) + beta``.  The no-purchase option has utility ``gamma`` on the same
normalized scale, so the purchase-conditional probabilities do not depend on
``gamma`` at all.

Raw ASVs are used in the design; differencing them against the baseline does
not change a per-record softmax and would require the baseline to be offered
in every choice set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .exceptions import DomainError, NumericError, StateError


@dataclass(frozen=True)
class Design:
    """Dense per-record arrays: availability ``(n, J)``, ASVs ``(n, J, P)``
    with zeros outside the choice set, and chosen column indices ``(n,)``."""

    avail: np.ndarray
    X: np.ndarray
    chosen: np.ndarray

    @classmethod
    def from_arrays(cls, avail, asv, chosen) -> "Design":
        avail = np.asarray(avail, dtype=bool)
        asv = np.asarray(asv, dtype=float)
        if asv.ndim == 2:
            asv = asv[:, :, None]
        X = np.where(avail[:, :, None], np.nan_to_num(asv, nan=0.0), 0.0)
        chosen = np.asarray(chosen, dtype=int)
        n, J = avail.shape
        if X.shape[:2] != (n, J) or chosen.shape != (n,):
            raise DomainError("design arrays disagree in shape")
        if n and not avail[np.arange(n), chosen].all():
            i = int(np.flatnonzero(~avail[np.arange(n), chosen])[0])
            raise DomainError(f"record {i}: chosen alternative is not available")
        for a in (avail, X, chosen):
            a.setflags(write=False)
        return cls(avail, X, chosen)

    @property
    def n_records(self) -> int:
        return self.avail.shape[0]

    @property
    def n_alternatives(self) -> int:
        return self.avail.shape[1]

    @property
    def n_asv(self) -> int:
        return self.X.shape[2]


def _as_design(data) -> Design:
    if isinstance(data, Design):
        return data
    design = getattr(data, "design", None)
    if isinstance(design, Design):
        return design
    raise DomainError(f"expected a Design or TransactionDataset, got {type(data).__name__}")


@dataclass(frozen=True)
class ModelCoefficients:
    """Normalized choice-model coefficients.

    ``alpha_star`` maps every non-baseline code to its intercept relative to
    the baseline; ``gamma`` is the no-purchase utility on the same scale and
    stays ``None`` until the market-share step has run.
    """

    baseline: int
    alpha_star: Mapping[int, float]
    beta: tuple[float, ...]
    gamma: float | None = None

    def __post_init__(self):
        alpha = {int(c): float(v) for c, v in dict(self.alpha_star).items()}
        object.__setattr__(self, "alpha_star", alpha)
        object.__setattr__(self, "beta", tuple(float(b) for b in np.atleast_1d(self.beta)))
        if self.baseline in alpha:
            raise DomainError(f"baseline {self.baseline} must not carry an intercept")
        expected = set(range(1, len(alpha) + 2)) - {self.baseline}
        if set(alpha) != expected:
            raise DomainError(
                f"alpha_star must cover codes {sorted(expected)} (baseline {self.baseline})")
        if not self.beta:
            raise DomainError("beta must have at least one entry")

    @property
    def n_alternatives(self) -> int:
        return len(self.alpha_star) + 1

    def alpha(self, code: int) -> float:
        if code == self.baseline:
            return 0.0
        try:
            return self.alpha_star[int(code)]
        except KeyError:
            raise DomainError(
                f"unknown alternative code {code}; valid 1..{self.n_alternatives}") from None

    def alpha_full(self) -> np.ndarray:
        return np.array([self.alpha(c) for c in range(1, self.n_alternatives + 1)])

    @property
    def params(self) -> np.ndarray:
        """Flattened ``(alpha*_{-k}, beta)``."""
        return pack_params(self.alpha_full(), self.beta, self.baseline)

    @classmethod
    def from_params(cls, params, n_alternatives: int, baseline: int,
                    gamma: float | None = None) -> "ModelCoefficients":
        alpha, beta = split_params(params, n_alternatives, baseline)
        return cls(baseline, {c: alpha[c - 1] for c in range(1, n_alternatives + 1)
                              if c != baseline}, tuple(beta), gamma)

    def with_gamma(self, gamma: float) -> "ModelCoefficients":
        return ModelCoefficients(self.baseline, self.alpha_star, self.beta, float(gamma))


def split_params(params, n_alternatives: int, baseline: int):
    """Expand ``(alpha*_{-k}, beta)`` to a full intercept vector and ``beta``."""
    params = np.asarray(params, dtype=float)
    J = n_alternatives
    if not 1 <= baseline <= J:
        raise DomainError(f"baseline {baseline} outside 1..{J}")
    if params.ndim != 1 or params.size < J:
        raise DomainError(f"parameter vector of size {params.size} too short for J={J}")
    alpha = np.insert(params[:J - 1], baseline - 1, 0.0)
    return alpha, params[J - 1:]


def pack_params(alpha_full, beta, baseline: int) -> np.ndarray:
    alpha_full = np.asarray(alpha_full, dtype=float)
    return np.concatenate([np.delete(alpha_full - alpha_full[baseline - 1], baseline - 1),
                           np.atleast_1d(np.asarray(beta, dtype=float))])


def param_names(n_alternatives: int, baseline: int, asv_names: Sequence[str]) -> list[str]:
    return [f"ASC{c}" for c in range(1, n_alternatives + 1) if c != baseline] + list(asv_names)


# ---------------------------------------------------------------------------
# single choice set


def _row_asv(asv_rows, size: int, n_beta: int) -> np.ndarray:
    x = np.asarray(asv_rows, dtype=float)
    if x.ndim == 1 and n_beta == 1:
        x = x[:, None]
    if x.shape != (size, n_beta):
        raise DomainError(f"ASV rows must have shape ({size}, {n_beta}), got {x.shape}")
    return x


def utility(coeffs: ModelCoefficients, code: int, asv_row) -> float:
    """Normalized mean utility ``alpha*_code + beta . x``."""
    x = np.atleast_1d(np.asarray(asv_row, dtype=float))
    if x.shape != (len(coeffs.beta),):
        raise DomainError(f"expected {len(coeffs.beta)} ASV values, got {x.size}")
    return coeffs.alpha(code) + float(np.dot(coeffs.beta, x))


def _set_utilities(coeffs: ModelCoefficients, codes, X) -> np.ndarray:
    """Utilities for rows of one choice set; ``X`` has shape (rows, |S|, P)."""
    alpha = np.array([coeffs.alpha(c) for c in codes])
    return alpha[None, :] + X @ np.asarray(coeffs.beta)


def _log_softmax(v: np.ndarray, extra: float | None = None):
    m = v.max(axis=-1, keepdims=True)
    if extra is not None:
        m = np.maximum(m, extra)
    total = np.exp(v - m).sum(axis=-1, keepdims=True)
    if extra is not None:
        total = total + np.exp(extra - m)
    return m + np.log(total)


def set_probabilities(coeffs: ModelCoefficients, codes: Sequence[int], X) -> np.ndarray:
    """Purchase-conditional probabilities for many rows of one choice set."""
    v = _set_utilities(coeffs, codes, X)
    return np.exp(v - _log_softmax(v))


def _codes_of(choice_set) -> tuple[int, ...]:
    codes = tuple(getattr(choice_set, "codes", choice_set))
    if not codes:
        raise DomainError("choice set is empty")
    return codes


def purchase_probabilities(coeffs: ModelCoefficients, choice_set, asv_rows) -> np.ndarray:
    """Softmax of utilities over the exposed set (no-purchase excluded).

    ``asv_rows`` has one row per alternative in ``choice_set`` (in the same
    order) and one column per ASV.
    """
    codes = _codes_of(choice_set)
    x = _row_asv(asv_rows, len(codes), len(coeffs.beta))
    return set_probabilities(coeffs, codes, x[None])[0]


def full_probabilities(coeffs: ModelCoefficients, choice_set, asv_rows):
    """No-purchase probability and purchase probabilities under the full model.

    Returns ``(p0, p)`` with ``p0 = e^gamma / (e^gamma + sum e^v)``.
    """
    if coeffs.gamma is None:
        raise StateError("full probabilities need gamma; fit the no-purchase step first")
    codes = _codes_of(choice_set)
    x = _row_asv(asv_rows, len(codes), len(coeffs.beta))
    v = _set_utilities(coeffs, codes, x[None])[0]
    lse = _log_softmax(v, extra=coeffs.gamma)[0]
    return float(np.exp(coeffs.gamma - lse)), np.exp(v - lse)


# ---------------------------------------------------------------------------
# whole dataset


@dataclass(frozen=True)
class LikelihoodWorkspace:
    value: float
    gradient: np.ndarray | None = None
    hessian: np.ndarray | None = None


def utilities(params, data, baseline: int) -> np.ndarray:
    """Per-record utilities ``(n, J)``, ``-inf`` outside each choice set."""
    d = _as_design(data)
    alpha, beta = split_params(params, d.n_alternatives, baseline)
    if beta.size != d.n_asv:
        raise DomainError(f"parameter vector has {beta.size} slopes; data has {d.n_asv} ASVs")
    v = alpha[None, :] + d.X @ beta
    return np.where(d.avail, v, -np.inf)


def log_denominators(params, data, baseline: int) -> np.ndarray:
    """``log D_i = log sum_{j in S_i} exp(v_ij)`` per record."""
    return _log_softmax(utilities(params, data, baseline))[:, 0]


def choice_probabilities(params, data, baseline: int) -> np.ndarray:
    """In-sample purchase-conditional probabilities ``(n, J)``, 0 if unavailable."""
    v = utilities(params, data, baseline)
    return np.exp(v - _log_softmax(v))


def observed_loglik(params, data, baseline: int, *, gradient: bool = True,
                    hessian: bool = True) -> LikelihoodWorkspace:
    """Purchase-conditional log-likelihood with analytic derivatives.

    Parameters
    ----------
    params : array, shape ((J-1) + P,)
        ``(alpha*_{-k}, beta)``.
    data : TransactionDataset or Design
    baseline : int
        Code ``k`` of the alternative whose intercept is pinned at 0.
    gradient, hessian : bool
        Which derivatives to evaluate.
    """
    d = _as_design(data)
    J, P = d.n_alternatives, d.n_asv
    params = np.asarray(params, dtype=float)
    if params.shape != (J - 1 + P,):
        raise DomainError(f"expected {J - 1 + P} parameters, got shape {params.shape}")
    v = utilities(params, d, baseline)
    log_d = _log_softmax(v)
    rows = np.arange(d.n_records)
    terms = v[rows, d.chosen] - log_d[:, 0]
    if not np.all(np.isfinite(terms)):
        i = int(np.flatnonzero(~np.isfinite(terms))[0])
        raise NumericError(f"non-finite log-likelihood term at record {i}")
    value = float(terms.sum())
    if not (gradient or hessian):
        return LikelihoodWorkspace(value)

    p = np.exp(v - log_d)                          # (n, J)
    xbar = np.einsum("ij,ijp->ip", p, d.X)         # (n, P)
    keep = np.delete(np.arange(J + P), baseline - 1)
    g = h = None
    if gradient:
        g_alpha = np.bincount(d.chosen, minlength=J) - p.sum(axis=0)
        g_beta = (d.X[rows, d.chosen] - xbar).sum(axis=0)
        g = np.concatenate([g_alpha, g_beta])[keep]
    if hessian:
        aa = np.diag(p.sum(axis=0)) - p.T @ p
        ab = np.einsum("ij,ijp->jp", p, d.X) - p.T @ xbar
        bb = np.einsum("ij,ijp,ijq->pq", p, d.X, d.X) - xbar.T @ xbar
        full = np.block([[aa, ab], [ab.T, bb]])
        h = -full[np.ix_(keep, keep)]
        h = 0.5 * (h + h.T)
    return LikelihoodWorkspace(value, g, h)
