"""Choice probabilities and decisions for new offers under a fitted model."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from .exceptions import CompletenessError, DomainError, SchemaError
from .likelihood import _log_softmax, _set_utilities

if TYPE_CHECKING:
    from .estimation import FitResult

#: bit generator used for sampled decisions
GENERATOR = "numpy.random.PCG64"


def _choice_set(model: "FitResult", set_code):
    sets = {s.set_code: s for s in model.remaining_sets}
    try:
        return sets[int(set_code)]
    except (KeyError, TypeError, ValueError):
        raise DomainError(f"unknown set_code {set_code!r}; valid codes: "
                          f"{sorted(sets)}") from None


def _offer_matrix(model: "FitResult", rows, codes) -> np.ndarray:
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows)
    X = np.empty((len(frame), len(codes), len(model.asv_names)))
    for p, a in enumerate(model.asv_names):
        for j, c in enumerate(codes):
            col = f"{a}_{c}"
            if col not in frame.columns:
                raise SchemaError(f"new data lacks column {col!r}")
            values = pd.to_numeric(frame[col], errors="coerce").to_numpy(dtype=float)
            if np.isnan(values).any():
                i = int(np.flatnonzero(np.isnan(values))[0])
                raise CompletenessError(f"missing or non-numeric {col!r} at row {i}")
            X[:, j, p] = values
    return X


def predict_probabilities(model: "FitResult", rows, set_code) -> np.ndarray:
    """Purchase-conditional probabilities, shape ``(rows, |S|)``.

    ``rows`` holds one ``<asv>_<code>`` column per ASV and alternative of the
    chosen set; other columns are ignored.
    """
    codes = _choice_set(model, set_code).codes
    X = _offer_matrix(model, rows, codes)
    v = _set_utilities(model.coefficients, codes, X)
    return np.exp(v - _log_softmax(v))


def no_purchase_probabilities(model: "FitResult", rows, set_code) -> np.ndarray:
    """Probability of buying nothing for each offer row, using the fitted gamma."""
    codes = _choice_set(model, set_code).codes
    X = _offer_matrix(model, rows, codes)
    gamma = model.coefficients.gamma
    v = _set_utilities(model.coefficients, codes, X)
    return np.exp(gamma - _log_softmax(v, extra=gamma)[:, 0])


def decide(probabilities, codes, *, fixed: bool = True, seed: int | None = None):
    """Turn probability rows into alternative codes.

    Fixed mode takes the row argmax (first, hence smallest, code on ties).
    Sampled mode inverts the row CDF at one uniform per row; row ``r`` always
    consumes the ``r``-th draw of a PCG64 stream seeded with ``seed``, so
    decisions do not depend on how rows are batched.

    Returns
    -------
    decisions : ndarray of int
    seed : int or None
        The seed actually used (drawn from OS entropy when not given).
    """
    probs = np.atleast_2d(np.asarray(probabilities, dtype=float))
    codes = np.asarray(codes, dtype=int)
    if probs.shape[1] != codes.size:
        raise DomainError("probability columns do not match the codes")
    if fixed:
        return codes[np.argmax(probs, axis=1)], None
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2**63))
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    idx = np.argmax(cdf > u[:, None] * cdf[:, -1:], axis=1)
    return codes[idx], seed


@dataclass(frozen=True)
class PredictionResult:
    probabilities: np.ndarray
    decisions: np.ndarray
    codes: tuple[int, ...]
    set_code: int
    mode: str
    seed: int | None = None
    no_purchase: np.ndarray | None = None

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.probabilities, columns=[f"Alts_{c}" for c in self.codes])
        if self.no_purchase is not None:
            frame["No_Purchase"] = self.no_purchase
        frame["Decision"] = self.decisions
        return frame

    def header(self) -> str:
        seed = "NA" if self.seed is None else str(self.seed)
        return (f"# set_code={self.set_code},mode={self.mode},seed={seed},"
                f"generator={GENERATOR}")

    def to_csv(self, path=None, delimiter: str = ","):
        buf = io.StringIO()
        buf.write(self.header() + "\n")
        self.to_frame().to_csv(buf, index=False, sep=delimiter, lineterminator="\n")
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def predict(model: "FitResult", rows, set_code, *, fixed: bool = True,
            seed: int | None = None, with_no_purchase: bool = False) -> PredictionResult:
    """Probabilities and decisions for offers exposed to choice set ``set_code``."""
    codes = _choice_set(model, set_code).codes
    probs = predict_probabilities(model, rows, set_code)
    decisions, used = decide(probs, codes, fixed=fixed, seed=seed)
    p0 = no_purchase_probabilities(model, rows, set_code) if with_no_purchase else None
    return PredictionResult(probs, decisions, codes, int(set_code),
                            "fixed" if fixed else "sampled", used, p0)


def read_offers(path, delimiter: str = ",") -> pd.DataFrame:
    return pd.read_csv(path, sep=delimiter, comment=None)
