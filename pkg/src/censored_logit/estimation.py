"""Robust demand estimation for censored transactions.

Pipeline (:func:`fit`): search the baseline alternative (the one with the
smallest intercept), fit the purchase-conditional logit by Newton's method
with that baseline, pick the no-purchase utility ``gamma`` so that the implied
no-purchase total matches the assumed market share, propagate the parameter
covariance to ``gamma`` by the delta method, and size the no-purchase demand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.special import logsumexp
from scipy.stats import norm
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_market_share
from .data import AlternativeCatalog, ChoiceSet, TransactionDataset
from .exceptions import (
    CensoredLogitError,
    ConvergenceError,
    DomainError,
    RankDeficiencyError,
    SchemaError,
)
from .likelihood import (
    Design,
    ModelCoefficients,
    _as_design,
    choice_probabilities,
    log_denominators,
    observed_loglik,
    param_names,
    split_params,
)

MODEL_FORMAT = "censored-logit/model"
MODEL_NAME = "Conditional Logit Model"
METHOD_NAME = "Robust Demand Estimation"

TOL = 1e-8
MAX_ITER = 100
TIE_TOL = 1e-9


@dataclass(frozen=True)
class Convergence:
    iterations: int
    grad_norm: float
    converged: bool


@dataclass(frozen=True)
class MLEResult:
    params: np.ndarray
    covariance: np.ndarray
    loglik: float
    convergence: Convergence
    baseline: int


def _check_identified(d: Design, baseline: int, names: Sequence[str]) -> None:
    J = d.n_alternatives
    if not 1 <= baseline <= J:
        raise DomainError(f"baseline {baseline} outside 1..{J}")
    offered = d.avail.sum(axis=0)
    chosen = np.bincount(d.chosen, minlength=J)
    for j in range(J):
        code = j + 1
        if offered[j] == 0:
            raise RankDeficiencyError(
                f"alternative {code} is never offered; its intercept is not identified",
                direction=f"ASC{code}")
        if chosen[j] == 0:
            raise RankDeficiencyError(
                f"alternative {code} is never chosen; its intercept is not identified",
                direction=f"ASC{code}")
        if chosen[j] == offered[j]:
            raise RankDeficiencyError(
                f"alternative {code} is chosen whenever offered; its intercept diverges",
                direction=f"ASC{code}")
    if J < 2:
        raise DomainError("at least two alternatives are required")

    # curvature at the start point: scale-free check of the information matrix
    info = -observed_loglik(np.zeros(J - 1 + d.n_asv), d, baseline, gradient=False).hessian
    diag = np.diag(info)
    if np.any(diag <= 0):
        i = int(np.flatnonzero(diag <= 0)[0])
        raise RankDeficiencyError(f"parameter {names[i]} has no curvature in the data",
                                  direction=names[i])
    scale = 1.0 / np.sqrt(diag)
    w, vec = np.linalg.eigh(info * np.outer(scale, scale))
    if w[0] < 1e-10:
        i = int(np.argmax(np.abs(vec[:, 0])))
        raise RankDeficiencyError(
            f"information matrix is singular; direction dominated by {names[i]} is "
            "not identified", direction=names[i])


def fit_mle(data, baseline: int, *, tol: float = TOL, max_iter: int = MAX_ITER,
            start=None) -> MLEResult:
    """Maximize the purchase-conditional log-likelihood for a fixed baseline.

    Damped Newton from zero: full steps, halved until the log-likelihood does
    not decrease.  Stops when the gradient max-norm drops below ``tol``.
    The covariance is the inverse of the negative Hessian at the optimum.
    """
    d = _as_design(data)
    J, P = d.n_alternatives, d.n_asv
    names = param_names(J, baseline, [f"beta{p + 1}" for p in range(P)])
    if hasattr(data, "asv_names"):
        names = param_names(J, baseline, data.asv_names)
    _check_identified(d, baseline, names)

    theta = np.zeros(J - 1 + P) if start is None else np.asarray(start, dtype=float).copy()
    ws = observed_loglik(theta, d, baseline)
    it = 0
    grad_norm = float(np.max(np.abs(ws.gradient)))
    while grad_norm >= tol and it < max_iter:
        try:
            step = np.linalg.solve(-ws.hessian, ws.gradient)
        except np.linalg.LinAlgError:
            raise RankDeficiencyError("Hessian became singular during Newton iterations")
        t = 1.0
        floor = ws.value - 1e-12 * max(1.0, abs(ws.value))
        for _ in range(60):
            cand = theta + t * step
            try:
                new = observed_loglik(cand, d, baseline)
            except CensoredLogitError:
                new = None
            if new is not None and new.value >= floor:
                break
            t *= 0.5
        else:
            raise ConvergenceError("line search failed to find an ascent step",
                                   params=theta, grad_norm=grad_norm, iterations=it)
        theta, ws = cand, new
        it += 1
        grad_norm = float(np.max(np.abs(ws.gradient)))
    if grad_norm >= tol:
        raise ConvergenceError(
            f"Newton did not converge in {max_iter} iterations "
            f"(gradient max-norm {grad_norm:.3g})",
            params=theta, grad_norm=grad_norm, iterations=it)
    try:
        chol = np.linalg.cholesky(-ws.hessian)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError("negative Hessian is not positive definite at the optimum")
    inv_chol = np.linalg.inv(chol)
    cov = inv_chol.T @ inv_chol
    return MLEResult(theta, 0.5 * (cov + cov.T), ws.value,
                     Convergence(it, grad_norm, True), baseline)


def search_baseline(data, *, tol: float = TOL, max_iter: int = MAX_ITER) -> int:
    """Return the code of the alternative with the smallest fitted intercept.

    The likelihood does not depend on which baseline is pinned, so one fit
    with code 1 as provisional baseline ranks every intercept.  Ties (within
    1e-9) go to the smallest code.
    """
    d = _as_design(data)
    res = fit_mle(data, 1, tol=tol, max_iter=max_iter)
    alpha, _ = split_params(res.params, d.n_alternatives, 1)
    lowest = alpha.min()
    return int(np.flatnonzero(alpha <= lowest + TIE_TOL)[0]) + 1


def _log_inverse_sum(params, data, baseline: int) -> float:
    """``log T`` with ``T = sum_i 1 / D_i``."""
    return float(logsumexp(-log_denominators(params, data, baseline)))


def estimate_gamma(params, data, baseline: int, prop: float) -> float:
    """No-purchase utility matching the assumed market share ``prop``.

    Solves ``exp(gamma) * T / n_R = (1 - s) / s`` in closed form.
    """
    s = check_market_share(prop)
    n = _as_design(data).n_records
    return math.log(n) + math.log1p(-s) - math.log(s) - _log_inverse_sum(params, data, baseline)


def market_share_residual(gamma: float, params, data, baseline: int, prop: float) -> float:
    """Estimating-equation residual ``exp(gamma) T / n_R - (1 - s) / s``."""
    s = check_market_share(prop)
    n = _as_design(data).n_records
    return math.exp(gamma + _log_inverse_sum(params, data, baseline)) / n - (1 - s) / s


def gamma_jacobian(params, data, baseline: int) -> np.ndarray:
    """Derivative of the fitted ``gamma`` with respect to ``(alpha*_{-k}, beta)``.

    ``d gamma / d eta = sum_i w_i zbar_i`` where ``w_i`` is record ``i``'s
    share of ``T = sum 1/D_i`` and ``zbar_i`` the probability-weighted design
    row of the record.
    """
    d = _as_design(data)
    log_d = log_denominators(params, d, baseline)
    w = np.exp(-log_d - logsumexp(-log_d))
    p = choice_probabilities(params, d, baseline)
    g_alpha = w @ p
    g_beta = w @ np.einsum("ij,ijp->ip", p, d.X)
    return np.delete(np.concatenate([g_alpha, g_beta]),
                     np.r_[baseline - 1])


def gamma_variance(params, covariance, data, baseline: int) -> float:
    """Delta-method variance of ``gamma`` with the market share held fixed."""
    g = gamma_jacobian(params, data, baseline)
    return max(float(g @ np.asarray(covariance) @ g), 0.0)


def loss_rates(gamma: float, params, data, baseline: int) -> np.ndarray:
    """Per-record odds of no purchase, ``exp(gamma) / D_i``."""
    return np.exp(gamma - log_denominators(params, data, baseline))


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass(frozen=True)
class NoPurchase:
    estimate: float
    reported: int
    total_arrivals: float
    total_reported: int


def no_purchase(gamma: float, params, data, baseline: int) -> NoPurchase:
    """Expected no-purchase count summed over observed purchases."""
    n = _as_design(data).n_records
    L = float(math.exp(gamma + _log_inverse_sum(params, data, baseline)))
    return NoPurchase(L, round_half_away(L), n + L, round_half_away(n + L))


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class FitResult:
    """Fitted model plus inference, arrival estimates and provenance.

    ``estimates``, ``std_errors``, ``z_values`` and ``p_values`` follow the
    report order: gamma, intercepts by code (baseline excluded), ASVs.
    ``covariance`` is over the same order.
    """

    coefficients: ModelCoefficients
    covariance: np.ndarray
    loglik: float
    n_observed: int
    no_purchase: NoPurchase
    market_share: float
    convergence: Convergence
    catalog: AlternativeCatalog
    remaining_sets: tuple[ChoiceSet, ...]
    asv_names: tuple[str, ...]
    response: str | None = None
    std_errors: np.ndarray = field(default=None)

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "covariance", cov)
        if self.std_errors is None:
            se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        else:
            se = np.asarray(self.std_errors, dtype=float)
        object.__setattr__(self, "std_errors", se)
        object.__setattr__(self, "remaining_sets", tuple(self.remaining_sets))
        object.__setattr__(self, "asv_names", tuple(self.asv_names))

    @property
    def baseline(self) -> int:
        return self.coefficients.baseline

    @property
    def gamma(self) -> float:
        return self.coefficients.gamma

    @property
    def names(self) -> list[str]:
        return [f"gamma (-ASC{self.baseline})"] + param_names(
            len(self.catalog), self.baseline, self.asv_names)

    @property
    def estimates(self) -> np.ndarray:
        return np.concatenate([[self.coefficients.gamma], self.coefficients.params])

    @property
    def z_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.estimates / self.std_errors

    @property
    def p_values(self) -> np.ndarray:
        return 2.0 * norm.sf(np.abs(self.z_values))

    @property
    def total_arrivals(self) -> float:
        return self.no_purchase.total_arrivals

    def coefficient_table(self) -> pd.DataFrame:
        return pd.DataFrame({"Estimate": self.estimates, "Std. Error": self.std_errors,
                             "z value": self.z_values, "Pr(>|z|)": self.p_values},
                            index=self.names)

    def report(self) -> str:
        table = self.coefficient_table().to_string(float_format=lambda v: f"{v:.4f}")
        k = self.baseline
        lines = [
            f"Model: {MODEL_NAME}",
            f"Estimation_Method: {METHOD_NAME}",
            f"Response_Variable: {self.response or ''}",
            f"Alternative_Specific_Variables: {', '.join(self.asv_names)}",
            f"Baseline_Product: {k} ({self.catalog.label_of(k)})",
            f"Market_Share: {self.market_share:g}",
            "Coefficients:",
            table,
            f"Total_Arrivals_(Estimate): {self.no_purchase.total_reported}",
            f"Observed_Arrivals: {self.n_observed}",
            f"No_Purchase_(Estimate): {self.no_purchase.reported}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_coefficients(cls, coefficients: ModelCoefficients, catalog, remaining_sets,
                          asv_names, *, std_errors=None, market_share: float = 0.7,
                          n_observed: int = 0, response=None) -> "FitResult":
        """Wrap externally supplied coefficients as a fixed model for prediction."""
        if coefficients.gamma is None:
            raise DomainError("coefficients must include gamma")
        k = len(coefficients.params) + 1
        if std_errors is None:
            std_errors = np.full(k, np.nan)
        L = n_observed * (1 - market_share) / market_share
        return cls(coefficients, np.full((k, k), np.nan), float("nan"), n_observed,
                   NoPurchase(L, round_half_away(L), n_observed + L,
                              round_half_away(n_observed + L)),
                   market_share, Convergence(0, float("nan"), False), catalog,
                   tuple(remaining_sets), tuple(asv_names), response,
                   np.asarray(std_errors, dtype=float))

    # -- model file

    def to_dict(self) -> dict:
        def num(x):
            x = float(x)
            return x if math.isfinite(x) else None

        return {
            "format": MODEL_FORMAT,
            "version": 1,
            "model": MODEL_NAME,
            "estimation_method": METHOD_NAME,
            "response": self.response,
            "asv_names": list(self.asv_names),
            "catalog": [{"code": c, "label": lab} for c, lab in self.catalog.entries],
            "remaining_sets": [{"set_code": s.set_code, "codes": list(s.codes),
                                "observations": s.observation_count}
                               for s in self.remaining_sets],
            "baseline": self.baseline,
            "market_share": self.market_share,
            "coefficients": [
                {"name": n, "estimate": num(e), "std_error": num(s), "z_value": num(z),
                 "p_value": num(p)}
                for n, e, s, z, p in zip(self.names, self.estimates, self.std_errors,
                                         self.z_values, self.p_values)],
            "covariance": [[num(v) for v in row] for row in self.covariance],
            "loglik": num(self.loglik),
            "observed_arrivals": self.n_observed,
            "no_purchase": {"estimate": self.no_purchase.estimate,
                            "reported": self.no_purchase.reported},
            "total_arrivals": {"estimate": self.no_purchase.total_arrivals,
                               "reported": self.no_purchase.total_reported},
            "convergence": {"iterations": self.convergence.iterations,
                            "grad_norm": num(self.convergence.grad_norm),
                            "converged": self.convergence.converged},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FitResult":
        if doc.get("format") != MODEL_FORMAT:
            raise SchemaError(f"not a model document (format={doc.get('format')!r})")

        def val(x):
            return float("nan") if x is None else float(x)

        try:
            catalog = AlternativeCatalog(tuple(
                e["label"] for e in sorted(doc["catalog"], key=lambda e: e["code"])))
            est = [val(c["estimate"]) for c in doc["coefficients"]]
            coeffs = ModelCoefficients.from_params(est[1:], len(catalog), doc["baseline"],
                                                   gamma=est[0])
            conv = doc["convergence"]
            return cls(
                coefficients=coeffs,
                covariance=np.array([[val(v) for v in row] for row in doc["covariance"]]),
                loglik=val(doc["loglik"]),
                n_observed=int(doc["observed_arrivals"]),
                no_purchase=NoPurchase(doc["no_purchase"]["estimate"],
                                       doc["no_purchase"]["reported"],
                                       doc["total_arrivals"]["estimate"],
                                       doc["total_arrivals"]["reported"]),
                market_share=float(doc["market_share"]),
                convergence=Convergence(conv["iterations"], val(conv["grad_norm"]),
                                        conv["converged"]),
                catalog=catalog,
                remaining_sets=tuple(ChoiceSet(tuple(s["codes"]), s["set_code"],
                                               s["observations"])
                                     for s in doc["remaining_sets"]),
                asv_names=tuple(doc["asv_names"]),
                response=doc.get("response"),
                std_errors=np.array([val(c["std_error"]) for c in doc["coefficients"]]),
            )
        except KeyError as exc:
            raise SchemaError(f"model document lacks field {exc}") from None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FitResult":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _staged(stage, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except CensoredLogitError as exc:
        exc.stage = stage
        raise


def fit(dataset: TransactionDataset, prop: float = 0.7, *, baseline: int | None = None,
        tol: float = TOL, max_iter: int = MAX_ITER) -> FitResult:
    """Fit the censored-demand conditional logit.

    Parameters
    ----------
    dataset : TransactionDataset
    prop : float
        Assumed market share: purchases over all arrivals, in (0, 1).
    baseline : int, optional
        Skip the baseline search and pin this code instead.

    Errors carry the failing pipeline step in their ``stage`` attribute.
    """
    prop = _staged("validate", check_market_share, prop)
    if baseline is None:
        baseline = _staged("search_baseline", search_baseline, dataset, tol=tol,
                           max_iter=max_iter)
    mle = _staged("fit_mle", fit_mle, dataset, baseline, tol=tol, max_iter=max_iter)
    gamma = _staged("estimate_gamma", estimate_gamma, mle.params, dataset, baseline, prop)
    g = _staged("gamma_variance", gamma_jacobian, mle.params, dataset, baseline)
    cov_g = mle.covariance @ g
    var_gamma = max(float(g @ cov_g), 0.0)
    covariance = np.block([[np.array([[var_gamma]]), cov_g[None, :]],
                           [cov_g[:, None], mle.covariance]])
    np_est = _staged("no_purchase", no_purchase, gamma, mle.params, dataset, baseline)
    coeffs = ModelCoefficients.from_params(mle.params, dataset.n_alternatives, baseline,
                                           gamma=gamma)
    return FitResult(coeffs, covariance, mle.loglik, dataset.n_records, np_est, prop,
                     mle.convergence, dataset.catalog, dataset.remaining_sets,
                     dataset.asv_names, dataset.response)


class RobustDemandEstimator(BaseEstimator):
    """Estimator facade over :func:`fit` and the prediction module.

    Parameters
    ----------
    prop : float, default 0.7
        Assumed market share.
    baseline : int or None
        Fixed baseline code; ``None`` searches for it.
    tol, max_iter
        Newton stopping rule.

    Attributes
    ----------
    result_ : FitResult
    coef_ : ndarray
        Estimates in report order (gamma, intercepts, slopes).
    baseline_, gamma_, no_purchase_, total_arrivals_
    """

    def __init__(self, prop=0.7, baseline=None, tol=TOL, max_iter=MAX_ITER):
        self.prop = prop
        self.baseline = baseline
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        if not isinstance(X, TransactionDataset):
            raise DomainError("fit expects a TransactionDataset; reshape raw tables "
                              "with ChoiceReshaper first")
        self.result_ = fit(X, self.prop, baseline=self.baseline, tol=self.tol,
                           max_iter=self.max_iter)
        self.coef_ = self.result_.estimates
        self.baseline_ = self.result_.baseline
        self.gamma_ = self.result_.gamma
        self.no_purchase_ = self.result_.no_purchase.estimate
        self.total_arrivals_ = self.result_.no_purchase.total_arrivals
        return self

    def predict_proba(self, X, set_code=None, *, with_no_purchase=False):
        """Purchase-conditional probabilities.

        A :class:`TransactionDataset` gives in-sample probabilities ``(n, J)``
        (zero outside each record's set); a table of ``<asv>_<code>`` columns
        needs ``set_code`` and gives one column per alternative in that set.
        """
        check_is_fitted(self, "result_")
        res = self.result_
        if isinstance(X, TransactionDataset):
            return choice_probabilities(res.coefficients.params, X, res.baseline)
        from .prediction import no_purchase_probabilities, predict_probabilities
        probs = predict_probabilities(res, X, set_code)
        if with_no_purchase:
            p0 = no_purchase_probabilities(res, X, set_code)
            return np.column_stack([p0, probs * (1.0 - p0)[:, None]])
        return probs

    def predict(self, X, set_code=None, *, fixed=True, seed=None):
        check_is_fitted(self, "result_")
        from .prediction import predict
        return predict(self.result_, X, set_code, fixed=fixed, seed=seed).decisions

    def score(self, X, y=None):
        """Mean purchase-conditional log-likelihood per record."""
        check_is_fitted(self, "result_")
        ws = observed_loglik(self.result_.coefficients.params, X, self.result_.baseline,
                             gradient=False, hessian=False)
        return ws.value / _as_design(X).n_records
