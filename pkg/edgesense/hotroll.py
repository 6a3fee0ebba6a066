"""Hot-rolling slab temperature plant discretized by finite differences."""
from __future__ import annotations

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import linalg

from edgesense.linsys import LtiSystem

logger = logging.getLogger(__name__)


class HotRollParams(BaseModel):
    """Material, geometry and discretization constants of one slab section."""

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    c: float = Field(460.0, gt=0, description="specific heat J/(kg K)")
    rho: float = Field(7900.0, gt=0, description="density kg/m^3")
    lam: float = Field(40.0, gt=0, alias="lambda", description="thermal conductivity W/(m K)")
    eps_rad: float = Field(0.85, gt=0, description="surface emissivity")
    sigma0: float = Field(5.67e-8, gt=0, description="Stefan-Boltzmann constant")
    x_inf: float = Field(325.0, gt=0, description="ambient temperature K")
    x_init: float = Field(1180.0, gt=0, description="initial slab temperature K")
    tau_s: int = Field(10, gt=0, description="length lattices")
    nu: int = Field(3, ge=2, description="thickness lattices")
    db: float = Field(0.01, gt=0, description="thickness step m")
    dl: float = Field(5.0, gt=0, description="length step m")
    speed: float = Field(5.0, gt=0, description="conveyor speed m/s")
    dt: float = Field(0.2, gt=0, description="time step s")
    T_slots: int = Field(1000, gt=0, description="horizon")

    @field_validator("eps_rad")
    @classmethod
    def _validate_emissivity(cls, value: float) -> float:
        if value > 1.0:
            raise ValueError("emissivity cannot exceed 1")
        return value

    @property
    def d(self) -> int:
        return self.tau_s * self.nu


def build_Q(nu: int) -> np.ndarray:
    """Thickness stencil with insulated-mirror first and last rows."""

    if nu < 2:
        raise ValueError("nu must be at least 2")
    Q = np.zeros((nu, nu))
    Q[0, :2] = (-2.0, 2.0)
    Q[-1, -2:] = (2.0, -2.0)
    for i in range(1, nu - 1):
        Q[i, i - 1 : i + 2] = (1.0, -2.0, 1.0)
    return Q


def build_lambda(tau_s: int, nu: int, omega: float) -> np.ndarray:
    """Block lower bidiagonal transport term: omega I on the diagonal, -omega I below it."""

    shift = np.eye(tau_s) - np.eye(tau_s, k=-1)
    return omega * np.kron(shift, np.eye(nu))


def coefficients(params: HotRollParams) -> tuple[float, float, float]:
    """(alpha_c, beta_c, omega) for uniform material properties."""

    alpha_c = params.dt * params.lam / (params.db**2 * params.rho * params.c)
    beta_c = 2.0 * params.dt * params.sigma0 * params.eps_rad / (params.db * params.rho * params.c)
    omega = params.speed / (2.0 * params.dl)
    return alpha_c, beta_c, omega


def build_transition(params: HotRollParams) -> np.ndarray:
    alpha_c, _, omega = coefficients(params)
    conduction = linalg.block_diag(*[alpha_c * build_Q(params.nu)] * params.tau_s)
    return build_lambda(params.tau_s, params.nu, omega) + conduction


def build_input(params: HotRollParams) -> np.ndarray:
    """Radiation loss on the first and last node of every thickness column."""

    _, beta_c, _ = coefficients(params)
    column = np.zeros(params.nu)
    column[[0, -1]] = beta_c * (params.x_init**4 - params.x_inf**4)
    return np.tile(column, params.tau_s)


def build_observation(params: HotRollParams) -> np.ndarray:
    """One sensor per length lattice reading its top-surface node."""

    G = np.zeros((params.tau_s, params.d))
    G[np.arange(params.tau_s), np.arange(params.tau_s) * params.nu] = 1.0
    return G


def build_system(
    params: HotRollParams | None = None,
    *,
    q_scale: float = 0.1,
    noise_variance: float = 0.01,
    gamma0_scale: float = 1.0,
) -> LtiSystem:
    params = params or HotRollParams()
    d = params.d
    G = build_observation(params)
    sys = LtiSystem(
        A=build_transition(params),
        G=G,
        Qnoise=q_scale * np.eye(d),
        Unoise=np.full(G.shape[0], noise_variance),
        x0_mean=np.full(d, params.x_init),
        Gamma0=gamma0_scale * np.eye(d),
        u=build_input(params),
    )
    logger.debug("built hot-rolling plant d=%d n=%d spectral norm %.6f", d, sys.n,
                 sys.spectral_norm)
    return sys


def simulate_noiseless(sys: LtiSystem, steps: int, x0: np.ndarray | None = None) -> np.ndarray:
    """States x_0..x_steps of x+ = A x - u without noise; shape (steps + 1, d)."""

    x = np.array(sys.x0_mean if x0 is None else x0, dtype=float)
    out = np.empty((steps + 1, sys.d))
    out[0] = x
    for k in range(steps):
        x = sys.A @ x - sys.input_vector
        out[k + 1] = x
    return out


def steady_state(sys: LtiSystem) -> np.ndarray:
    """Fixed point x* = -(I - A)^-1 u of the noiseless recursion."""

    return -np.linalg.solve(np.eye(sys.d) - sys.A, sys.input_vector)
