"""Default and systemic-risk estimators on simulated ensembles.

A bank defaults on a path when its running minimum is at or below ``D``; a
systemic event is the same test applied to the market state.  Conditional
probabilities split the paths on whether the major bank defaulted.
Estimates whose conditioning set is empty are ``None``, never zero.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .simulate import PathEnsemble

__all__ = [
    "RiskReport",
    "LossHistogram",
    "UnsupportedEnsembleError",
    "path_default_indicator",
    "estimate_risk_report",
    "total_probability_residual",
    "loss_distribution",
    "RISK_COLUMNS",
]


class UnsupportedEnsembleError(ValueError):
    pass


def path_default_indicator(min_over_time, D):
    """True where the running minimum is ``<= D`` (boundary counts)."""
    return np.asarray(min_over_time) <= D


@dataclass(frozen=True)
class RiskReport:
    n_paths: int
    n_major_default: int
    p0: float
    pi: float
    pSE: float
    pi_given_MD: float | None
    pi_given_MS: float | None
    pSE_given_MD: float | None
    pSE_given_MS: float | None
    se_p0: float
    se_pi: float
    se_pSE: float
    se_pi_given_MD: float | None
    se_pi_given_MS: float | None
    se_pSE_given_MD: float | None
    se_pSE_given_MS: float | None
    n_se_events: int
    minor_default_fraction: np.ndarray  # per path

    def row(self) -> dict:
        d = asdict(self)
        d.pop("minor_default_fraction")
        return d

    def ci95(self, name: str):
        """Normal-approximation 95% interval for estimate ``name``."""
        est, se = getattr(self, name), getattr(self, "se_" + name)
        if est is None:
            return None
        return est - 1.96 * se, est + 1.96 * se


RISK_COLUMNS = [
    "pi", "pi_given_MS", "pi_given_MD", "pSE", "pSE_given_MS", "pSE_given_MD", "p0",
    "se_pi", "se_pi_given_MS", "se_pi_given_MD", "se_pSE", "se_pSE_given_MS", "se_pSE_given_MD", "se_p0",
    "n_paths", "n_major_default",
]


def _binom(hits: np.ndarray):
    n = len(hits)
    if n == 0:
        return None, None
    p = float(hits.mean())
    return p, math.sqrt(p * (1 - p) / n)


def _mean_se(x: np.ndarray):
    n = len(x)
    if n == 0:
        return None, None
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(x.mean()), se


def estimate_risk_report(e: PathEnsemble, D: float | None = None) -> RiskReport:
    """Frequencies of major default, minor default and systemic events.

    ``pi`` is the mean over paths of the fraction of defaulted minors, with a
    sample-std standard error; path-level frequencies use binomial errors.
    """
    if e.n_paths == 0:
        raise ValueError("empty ensemble")
    D = e.params.D if D is None else D
    md = path_default_indicator(e.major_min, D)
    se_event = path_default_indicator(e.market_min, D)
    frac = path_default_indicator(e.minor_min, D).mean(axis=1)
    ms = ~md

    p0, se_p0 = _binom(md)
    pSE, se_pSE = _binom(se_event)
    pi, se_pi = _mean_se(frac)
    pi_md, se_pi_md = _mean_se(frac[md])
    pi_ms, se_pi_ms = _mean_se(frac[ms])
    pse_md, se_pse_md = _binom(se_event[md])
    pse_ms, se_pse_ms = _binom(se_event[ms])
    return RiskReport(
        n_paths=e.n_paths, n_major_default=int(md.sum()),
        p0=p0, pi=pi, pSE=pSE,
        pi_given_MD=pi_md, pi_given_MS=pi_ms, pSE_given_MD=pse_md, pSE_given_MS=pse_ms,
        se_p0=se_p0, se_pi=se_pi, se_pSE=se_pSE,
        se_pi_given_MD=se_pi_md, se_pi_given_MS=se_pi_ms,
        se_pSE_given_MD=se_pse_md, se_pSE_given_MS=se_pse_ms,
        n_se_events=int(se_event.sum()),
        minor_default_fraction=frac,
    )


def total_probability_residual(r: RiskReport):
    """``(pi - [(pi|MD - pi|MS) p0 + pi|MS], pSE - [...])``; ``None`` if undefined."""
    if None in (r.pi_given_MD, r.pi_given_MS, r.pSE_given_MD, r.pSE_given_MS):
        return None
    res_i = r.pi - ((r.pi_given_MD - r.pi_given_MS) * r.p0 + r.pi_given_MS)
    res_se = r.pSE - ((r.pSE_given_MD - r.pSE_given_MS) * r.p0 + r.pSE_given_MS)
    return res_i, res_se


@dataclass(frozen=True)
class LossHistogram:
    """Mass of exactly ``k`` defaulted minors, ``k = 0..N``."""

    n_minors: int
    p0: float
    total: np.ndarray
    given_MD: np.ndarray | None
    given_MS: np.ndarray | None

    def recombination_residual(self) -> float:
        if self.given_MD is None or self.given_MS is None:
            return 0.0
        mix = self.p0 * self.given_MD + (1 - self.p0) * self.given_MS
        return float(np.max(np.abs(mix - self.total)))

    def rows(self):
        """Long-format ``(variant, k, mass)`` rows."""
        out = []
        for name, h in (("total", self.total), ("given_MS", self.given_MS), ("given_MD", self.given_MD)):
            if h is None:
                continue
            out.extend((name, k, float(m)) for k, m in enumerate(h))
        return out


def _hist(counts, n):
    if len(counts) == 0:
        return None
    return np.bincount(counts, minlength=n + 1)[: n + 1] / len(counts)


def loss_distribution(e: PathEnsemble, D: float | None = None) -> LossHistogram:
    """Distribution of the number of defaulted minor banks per path."""
    if e.kind != "finite" or e.minor_default_counts is None:
        raise UnsupportedEnsembleError("loss distribution needs a finite-population ensemble")
    if D is None or D == e.params.D:
        counts = np.asarray(e.minor_default_counts, dtype=np.int64)
        D = e.params.D
    else:
        counts = path_default_indicator(e.minor_min, D).sum(axis=1)
    md = path_default_indicator(e.major_min, D)
    n = e.n_minors
    return LossHistogram(
        n_minors=n,
        p0=float(md.mean()),
        total=_hist(counts, n),
        given_MD=_hist(counts[md], n),
        given_MS=_hist(counts[~md], n),
    )
