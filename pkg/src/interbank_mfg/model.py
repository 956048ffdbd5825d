"""Market parameters, clearing identities and the market state.

A market has one major bank of relative size ``G`` and a continuum (or a
finite number ``N``) of minor banks of collective size ``F``.  Interbank
trades clear only when ``F + G = 1`` and ``a0 = a * G``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

__all__ = [
    "MarketParams",
    "ParameterError",
    "ConfigError",
    "derive_clearing",
    "validate_params",
    "market_state",
    "load_config",
    "parse_config",
]

# relative tolerance for the clearing identities; configs written by hand
# (a=5, G=0.3, a0=1.5) must pass even though 5 * 0.3 != 1.5 in binary
CLEARING_RTOL = 1e-12


class ParameterError(ValueError):
    """Raised when a parameter set violates a model invariant.

    ``violations`` holds ``(kind, message)`` pairs where ``kind`` is one of
    ``"clearing"``, ``"convexity"`` or ``"range"``.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(f"{kind} violation: {text}" for kind, text in self.violations)
        super().__init__(msg)

    @property
    def kinds(self):
        return {kind for kind, _ in self.violations}


class ConfigError(ValueError):
    """Raised for malformed or unknown entries in a configuration file."""


@dataclass(frozen=True)
class MarketParams:
    """All constants of the interbank model.

    Rates (``a``, ``a0``, ``q``, ``q0``, ``c``, ``c0``) are per unit time,
    ``eps``/``eps0`` per unit time squared.  ``D`` is the default threshold
    on log-reserves.  Both ``(a, G)`` and ``(a0, F)`` are stored so config
    files are self-documenting; :func:`validate_params` checks they agree.
    """

    a: float = 5.0
    a0: float = 2.5
    F: float = 0.5
    G: float = 0.5
    q: float = 1.0
    q0: float = 1.0
    eps: float = 10.0
    eps0: float = 10.0
    c: float = 0.0
    c0: float = 0.0
    sigma: float = 1.0
    sigma0: float = 1.0
    T: float = 1.0
    D: float = -0.65
    x0_init: float = 0.0
    xi_init: float = 0.0

    @classmethod
    def from_clearing(cls, a: float, G: float, **kwargs) -> "MarketParams":
        """Build a parameter set whose ``a0`` and ``F`` come from clearing."""
        a0, F = derive_clearing(a, G)
        return cls(a=a, a0=a0, F=F, G=G, **kwargs)

    def with_clearing(self, **changes) -> "MarketParams":
        """Copy with ``changes`` applied, then ``a0`` and ``F`` re-derived."""
        p = replace(self, **changes)
        a0, F = derive_clearing(p.a, p.G)
        return replace(p, a0=a0, F=F)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple:
        return tuple(f.name for f in fields(cls))


def derive_clearing(a: float, G: float) -> tuple[float, float]:
    """Return ``(a0, F)`` satisfying both market-clearing identities.

    >>> derive_clearing(5.0, 0.5)
    (2.5, 0.5)
    """
    problems = []
    if not (isinstance(a, (int, float, np.floating)) and math.isfinite(a) and a > 0):
        problems.append(("range", f"a must be positive, got {a!r}"))
    if not (0.0 <= G <= 1.0):
        problems.append(("range", f"G must lie in [0, 1], got {G!r}"))
    if problems:
        raise ParameterError(problems)
    return float(a * G), float(1.0 - G)


def _close(x: float, y: float) -> bool:
    return abs(x - y) <= CLEARING_RTOL * max(1.0, abs(x), abs(y))


def validate_params(p: MarketParams) -> MarketParams:
    """Return ``p`` unchanged if every invariant holds, else raise.

    All violations are collected and reported together.  A major bank whose
    own cost is non-convex (``q0**2 > eps0``) only triggers a warning.
    """
    v = []
    values = p.to_dict()
    bad = [k for k, x in values.items() if not math.isfinite(float(x))]
    if bad:
        raise ParameterError([("range", f"non-finite value for {', '.join(bad)}")])

    if not p.a > 0:
        v.append(("range", f"a must be positive, got {p.a}"))
    if not p.T > 0:
        v.append(("range", f"T must be positive, got {p.T}"))
    for name in ("sigma", "sigma0"):
        if values[name] < 0:
            v.append(("range", f"{name} must be non-negative, got {values[name]}"))
    for name in ("F", "G"):
        if not 0.0 <= values[name] <= 1.0:
            v.append(("range", f"{name} must lie in [0, 1], got {values[name]}"))

    if not _close(p.F + p.G, 1.0):
        v.append(("clearing", f"F + G = {p.F + p.G!r}, expected 1"))
    if not _close(p.a0, p.a * p.G):
        v.append(("clearing", f"a0 = {p.a0!r} but a * G = {p.a * p.G!r}"))
    if not _close(p.a0, p.a - p.a * p.F):
        v.append(("clearing", f"a0 = {p.a0!r} but a - a * F = {p.a - p.a * p.F!r}"))

    if p.q ** 2 > p.eps:
        v.append(("convexity", f"q**2 = {p.q ** 2!r} exceeds eps = {p.eps!r}"))

    if v:
        raise ParameterError(v)
    if p.q0 ** 2 > p.eps0:
        warnings.warn(
            f"major-bank cost is not convex: q0**2 = {p.q0 ** 2} > eps0 = {p.eps0}",
            stacklevel=2,
        )
    return p


def market_state(x_avg, x0, F: float, G: float):
    """Weighted market log-reserve ``F * x_avg + G * x0`` (works on arrays)."""
    return F * x_avg + G * x0


# -- configuration files ----------------------------------------------------

LIST_KEYS = {"g_values": float, "a_values": float, "n_list": int}


def parse_config(text: str, source: str = "<string>"):
    """Parse flat ``key = value`` text.

    Returns ``(params, lists)`` where ``params`` maps MarketParams field
    names to floats and ``lists`` holds the experiment lists.  Blank lines
    and ``#`` comments are ignored; unknown or repeated keys are errors.
    """
    known = set(MarketParams.field_names())
    params, lists = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in params or key in lists:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            if key in known:
                params[key] = float(value)
            elif key in LIST_KEYS:
                conv = LIST_KEYS[key]
                items = [s.strip() for s in value.replace(";", ",").split(",") if s.strip()]
                lists[key] = [conv(float(s)) if conv is int else conv(s) for s in items]
            else:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {value!r}") from None
    return params, lists


def load_config(path, validate: bool = True):
    """Read a config file into ``(MarketParams, lists)``.

    Missing fields take the dataclass defaults.  When neither ``a0`` nor
    ``F`` is given they are derived from ``(a, G)``; otherwise the values
    are validated as written.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    values, lists = parse_config(text, source=str(path))
    if "a0" not in values and "F" not in values and ("a" in values or "G" in values):
        a = values.get("a", MarketParams.a)
        G = values.get("G", MarketParams.G)
        values["a0"], values["F"] = derive_clearing(a, G)
    p = MarketParams(**values)
    if validate:
        validate_params(p)
    return p, lists
