"""Feedback coefficients of the equilibrium strategies.

The minor-bank gain ``q - phi_t`` and the major-bank gain ``q0 - phi0_t``
come from scalar Riccati equations integrated backward from ``T``.  Two
closed forms of the major-bank equation and control laws are in circulation
and they disagree, so three :class:`StrategyMode` variants are kept:

``THEOREM``
    the closed-form control laws (targets written with ``F xbar - x0``) and
    the matching scalar ODE.
``DERIVATION``
    forms implied by the extended-state algebra; the scalar major ODE is
    the reduction of the 2x2 matrix Riccati equation below.
``ORACLE``
    same control laws as ``DERIVATION`` with ``phi0 = -P[0, 0]`` taken from
    the matrix Riccati solution itself.

All integration is classical RK4 on a uniform grid, stepping from ``T``
down to 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .model import MarketParams

__all__ = [
    "StrategyMode",
    "RiccatiError",
    "RiccatiSolution",
    "ExtendedSystem",
    "OraclePath",
    "solve_minor_phi",
    "solve_major_phi0",
    "solve_major_lqr_oracle",
    "solve_riccati",
    "minor_control",
    "major_control",
    "meanfield_drift",
    "build_extended_system",
    "PHI0_FORMS",
]

DEFAULT_STEPS = 1000
BLOWUP_BOUND = 1e6
SYMMETRY_TOL = 1e-10


class StrategyMode(str, enum.Enum):
    THEOREM = "theorem"
    DERIVATION = "derivation"
    ORACLE = "oracle"

    @classmethod
    def parse(cls, value) -> "StrategyMode":
        if isinstance(value, cls):
            return value
        aliases = {
            "theorem": cls.THEOREM,
            "theoremaspublished": cls.THEOREM,
            "derivation": cls.DERIVATION,
            "derivationconsistent": cls.DERIVATION,
            "oracle": cls.ORACLE,
            "matrixoracle": cls.ORACLE,
        }
        try:
            return aliases[str(value).replace("_", "").replace("-", "").lower()]
        except KeyError:
            raise ValueError(f"unknown strategy mode {value!r}") from None


# coupling term (sign of phi_t, multiplier) in the scalar major ODE
#   d/dt phi0 = 2(a0+q0) phi0 - phi0^2 + k * (a + q + s*phi) * G * phi0 + eps0 - q0^2
PHI0_FORMS = {
    "theorem": (-1.0, 1.0),
    "sign_flipped": (+1.0, 1.0),
    "derived": (-1.0, 2.0),
}


class RiccatiError(ArithmeticError):
    """Integration failure: blow-up, lost symmetry, or incompatible grids."""

    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message if time is None else f"{message} (first at t={time:.6g})")


@dataclass(frozen=True)
class RiccatiSolution:
    """Coefficient paths on a uniform grid over ``[0, T]``.

    ``phi0`` may be ``None`` for a minor-only solve.  ``phi0_form`` names the
    scalar ODE used for ``phi0`` (``"oracle"`` when read off the matrix
    solution).
    """

    grid: np.ndarray
    phi: np.ndarray
    phi0: np.ndarray | None
    mode: StrategyMode
    phi0_form: str = ""

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    def at(self, times):
        """Linear interpolation of ``(phi, phi0)`` at ``times``."""
        times = np.asarray(times, dtype=float)
        phi = np.interp(times, self.grid, self.phi)
        phi0 = None if self.phi0 is None else np.interp(times, self.grid, self.phi0)
        return phi, phi0

    def mean_reversion_levels(self, p: MarketParams):
        """Effective rates ``(a + q - phi, a0 + q0 - phi0)`` on the grid."""
        return p.a + p.q - self.phi, p.a0 + p.q0 - self.phi0


def _grid(T: float, steps: int) -> np.ndarray:
    if steps < 2:
        raise ValueError(f"need at least 2 steps, got {steps}")
    grid = np.linspace(0.0, T, steps + 1)
    grid[0], grid[-1] = 0.0, T
    return grid


def _integrate_backward(rhs, terminal, grid, bound, label):
    """RK4 for ``dy/dt = rhs(t, y)`` from ``grid[-1]`` down to ``grid[0]``.

    ``terminal`` may be a scalar or an array; the returned array has the grid
    as its leading axis with ``out[-1] == terminal`` exactly.
    """
    y = np.array(terminal, dtype=float)
    out = np.empty((len(grid),) + y.shape)
    out[-1] = y
    for k in range(len(grid) - 1, 0, -1):
        t, h = grid[k], grid[k - 1] - grid[k]  # h < 0
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > bound:
            raise RiccatiError(f"{label} exceeded |value| <= {bound:g}", time=grid[k - 1])
        out[k - 1] = y
    return out


def _minor_rhs(p: MarketParams):
    two_aq, const = 2 * (p.a + p.q), p.eps - p.q ** 2

    def rhs(phi):
        return two_aq * phi - phi * phi + const

    return rhs


def solve_minor_phi(p: MarketParams, steps: int = DEFAULT_STEPS, bound: float = BLOWUP_BOUND) -> RiccatiSolution:
    """Minor-bank coefficient: ``phi' = 2(a+q) phi - phi^2 + eps - q^2``, ``phi_T = -c``."""
    grid = _grid(p.T, steps)
    f = _minor_rhs(p)
    phi = _integrate_backward(lambda t, y: f(y), -p.c, grid, bound, "phi")
    return RiccatiSolution(grid=grid, phi=phi, phi0=None, mode=StrategyMode.DERIVATION)


def _check_phi(phi: RiccatiSolution, p: MarketParams, steps: int):
    if len(phi.grid) != steps + 1 or not np.array_equal(phi.grid, _grid(p.T, steps)):
        raise RiccatiError(
            f"phi grid ({len(phi.grid) - 1} steps on [0, {phi.T:g}]) does not match "
            f"requested {steps} steps on [0, {p.T:g}]"
        )


def solve_major_phi0(
    p: MarketParams,
    phi: RiccatiSolution,
    mode=StrategyMode.DERIVATION,
    steps: int | None = None,
    bound: float = BLOWUP_BOUND,
    form: str | None = None,
) -> RiccatiSolution:
    """Major-bank coefficient ``phi0`` under ``mode``.

    ``form`` overrides the scalar ODE (``"theorem"``, ``"sign_flipped"`` or
    ``"derived"``); by default THEOREM uses ``"theorem"`` and DERIVATION uses
    ``"derived"``.  ORACLE reads ``phi0`` from :func:`solve_major_lqr_oracle`.

    ``phi`` is re-integrated jointly with ``phi0`` so RK4 stages see exact
    ``phi`` values; the result must reproduce the supplied path.
    """
    mode = StrategyMode.parse(mode)
    steps = len(phi.grid) - 1 if steps is None else steps
    _check_phi(phi, p, steps)

    if mode is StrategyMode.ORACLE and form is None:
        oracle = solve_major_lqr_oracle(build_extended_system(p), phi, steps=steps, bound=bound)
        return RiccatiSolution(phi.grid, phi.phi, oracle.implied_phi0, mode, "oracle")

    if form is None:
        form = "theorem" if mode is StrategyMode.THEOREM else "derived"
    sign, mult = PHI0_FORMS[form]
    f = _minor_rhs(p)
    two_aq0, const0 = 2 * (p.a0 + p.q0), p.eps0 - p.q0 ** 2
    aq, G = p.a + p.q, p.G

    def rhs(t, y):
        ph, ph0 = y[0], y[1]
        return np.array([
            f(ph),
            two_aq0 * ph0 - ph0 * ph0 + mult * (aq + sign * ph) * G * ph0 + const0,
        ])

    ys = _integrate_backward(rhs, [-p.c, -p.c0], phi.grid, bound, "phi0")
    if np.max(np.abs(ys[:, 0] - phi.phi)) > 1e-9 * max(1.0, np.max(np.abs(phi.phi))):
        raise RiccatiError("supplied phi path does not solve the minor Riccati equation")
    return RiccatiSolution(phi.grid, phi.phi, ys[:, 1], mode, form)


def solve_riccati(p: MarketParams, mode=StrategyMode.DERIVATION, steps: int = DEFAULT_STEPS,
                  form: str | None = None) -> RiccatiSolution:
    """Solve ``phi`` and ``phi0`` together for the given mode."""
    mode = StrategyMode.parse(mode)
    phi = solve_minor_phi(p, steps)
    return solve_major_phi0(p, phi, mode, steps, form=form)


# -- extended-state matrix oracle -------------------------------------------

@dataclass(frozen=True)
class ExtendedSystem:
    """Matrices of the extended-state LQ problems.

    Major side: state ``[x0, xbar]``.  Minor side: state ``[xi, x0, xbar]``.
    ``A_cl`` adds the mean-field control channel to ``A0_tilde``; it depends
    on ``phi_t`` and is produced by :meth:`major_drift`.
    """

    a: float
    q: float
    eps: float
    A0_tilde: np.ndarray
    B0: np.ndarray
    B0_tilde: np.ndarray
    Sigma0: np.ndarray
    Q0: np.ndarray
    N0: np.ndarray
    G0: np.ndarray
    A_tilde: np.ndarray
    B: np.ndarray
    B_tilde: np.ndarray
    Sigma: np.ndarray
    Q: np.ndarray
    N: np.ndarray
    Q_hat: np.ndarray
    K: np.ndarray
    _channel: np.ndarray = field(repr=False, default=None)

    def major_drift(self, phi_t: float) -> np.ndarray:
        """``A0_tilde + (q - phi_t)/a * B0_tilde B0_tilde^T A0_tilde``."""
        return self.A0_tilde + (self.q - phi_t) / self.a * self._channel

    def minor_drift(self, phi_t: float, phi0_t: float, q0: float) -> np.ndarray:
        """3x3 drift of ``[xi, x0, xbar]`` with the major on its feedback law.

        The ``xi`` row holds only the interbank term; the minor's own control
        enters through ``B``.  The major row uses the gain ``q0 - phi0_t``
        towards ``xbar``.
        """
        A = self.A_tilde.copy()
        lower = self.major_drift(phi_t).copy()
        gain = q0 - phi0_t
        lower[0] += gain * np.array([-1.0, 1.0])
        A[1:, 1:] = lower
        return A


def build_extended_system(p: MarketParams) -> ExtendedSystem:
    a, a0, F, G = p.a, p.a0, p.F, p.G
    A0t = np.array([[-a0, a0], [a * G, a * (F - 1)]])
    B0 = np.array([1.0, 0.0])
    B0t = np.array([0.0, 1.0])
    e = np.array([[1.0, -1.0], [-1.0, 1.0]])
    w = np.array([1.0, -G, -F])  # w . [xi, x0, xbar] = -(F xbar + G x0 - xi)
    At = np.zeros((3, 3))
    At[0] = [-a, a * G, a * F]
    At[1:, 1:] = A0t
    return ExtendedSystem(
        a=a,
        q=p.q,
        eps=p.eps,
        A0_tilde=A0t,
        B0=B0,
        B0_tilde=B0t,
        Sigma0=np.diag([p.sigma0, 0.0]),
        Q0=p.eps0 * e,
        N0=np.array([p.q0, -p.q0]),
        G0=p.c0 * e,
        A_tilde=At,
        B=np.array([1.0, 0.0, 0.0]),
        B_tilde=np.array([0.0, 0.0, 1.0]),
        Sigma=np.diag([p.sigma, p.sigma0, 0.0]),
        Q=p.eps * np.outer(w, w),
        N=p.q * w,
        Q_hat=p.c * np.outer(w, w),
        K=np.array([0.0, G, F - 1.0]),
        _channel=np.outer(B0t, B0t) @ A0t,
    )


@dataclass(frozen=True)
class OraclePath:
    grid: np.ndarray
    P: np.ndarray            # (len(grid), 2, 2)
    implied_phi0: np.ndarray

    def null_residual(self) -> float:
        """``max_t |P(t) [1, 1]^T|``."""
        return float(np.max(np.abs(self.P.sum(axis=2))))

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.P - np.swapaxes(self.P, 1, 2))))


def solve_major_lqr_oracle(sys: ExtendedSystem, phi: RiccatiSolution, steps: int | None = None,
                           bound: float = BLOWUP_BOUND, sym_tol: float = SYMMETRY_TOL) -> OraclePath:
    """Finite-horizon LQ Riccati equation with cross weight for the major.

        -P' = A^T P + P A - (P B0 + N0)(B0^T P + N0^T) + Q0,   P(T) = G0

    with ``A = sys.major_drift(phi_t)``.  The scalar ``phi`` ODE is carried
    along as an extra state so every RK4 stage uses exact ``phi`` values.
    """
    grid = phi.grid
    if steps is not None and steps != len(grid) - 1:
        raise RiccatiError(f"phi grid has {len(grid) - 1} steps, oracle asked for {steps}")
    B0, N0, Q0 = sys.B0, sys.N0, sys.Q0
    two_aq, const = 2 * (sys.a + sys.q), sys.eps - sys.q ** 2

    def rhs(t, y):
        ph = y[0, 0]
        P = y[1:]
        A = sys.major_drift(ph)
        L = P @ B0 + N0
        dP = -(A.T @ P + P @ A - np.outer(L, L) + Q0)
        out = np.empty_like(y)
        out[0] = two_aq * ph - ph * ph + const
        out[1:] = dP
        return out

    terminal = np.zeros((3, 2))
    terminal[0, 0] = phi.phi[-1]
    terminal[1:] = sys.G0
    ys = _integrate_backward(rhs, terminal, grid, bound, "P")
    P = ys[:, 1:, :]
    if np.max(np.abs(P - np.swapaxes(P, 1, 2))) > sym_tol:
        k = int(np.argmax(np.max(np.abs(P - np.swapaxes(P, 1, 2)), axis=(1, 2)) > sym_tol))
        raise RiccatiError("oracle lost symmetry", time=grid[k])
    if np.max(np.abs(ys[:, 0, 0] - phi.phi)) > 1e-9 * max(1.0, np.max(np.abs(phi.phi))):
        raise RiccatiError("supplied phi path does not solve the minor Riccati equation")
    return OraclePath(grid=grid, P=P, implied_phi0=-P[:, 0, 0].copy())



# -- feedback laws ------------------------------------------------------------

def minor_control(phi_t, x_avg, x0, xi, p: MarketParams):
    """Minor-bank rate ``(q - phi_t) (F x_avg + G x0 - xi)``."""
    return (p.q - phi_t) * (p.F * x_avg + p.G * x0 - xi)


def major_control(phi0_t, x_avg, x0, p: MarketParams, mode=StrategyMode.DERIVATION):
    """Major-bank rate.

    THEOREM: ``(q - phi0_t)(F x_avg - x0)``, as printed.
    DERIVATION / ORACLE: ``(q0 - phi0_t)(x_avg - x0)``.
    """
    if StrategyMode.parse(mode) is StrategyMode.THEOREM:
        return (p.q - phi0_t) * (p.F * x_avg - x0)
    return (p.q0 - phi0_t) * (x_avg - x0)


def meanfield_drift(phi_t, x_avg, x0, p: MarketParams, mode=StrategyMode.DERIVATION):
    """Time derivative of the mean field ``xbar``.

    THEOREM: ``(a + q + phi_t)((F - 1) xbar + G x0)``; otherwise the sign of
    ``phi_t`` is flipped, which is what substituting the minors' average
    control into the mean-field equation gives.
    """
    sign = 1.0 if StrategyMode.parse(mode) is StrategyMode.THEOREM else -1.0
    return (p.a + p.q + sign * phi_t) * ((p.F - 1.0) * x_avg + p.G * x0)
