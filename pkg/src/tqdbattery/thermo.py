"""Ergotropy, local-stability coefficient and driving-cost functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import simpson

from .errors import ContractError
from .model import DriveConfig, Space, build_h_ad
from .operators import hs_norm, require_density_matrix, require_hermitian
from .spectral import drive_path, eigenstate_derivative, frame_at

if TYPE_CHECKING:
    from .dynamics import Trajectory

ERGOTROPY_RTOL = 1e-10
DEFAULT_QUAD_POINTS = 1001
# stand-in for u = 0 when the integrand has a finite limit but cannot be evaluated there
_SINGULAR_U_FLOOR = 1e-6


@dataclass(frozen=True)
class ErgotropyResult:
    ergotropy: float
    internal_energy: float
    passive_energy: float
    unitary: NDArray[np.complex128] | None = None


def ergotropy(rho: ArrayLike, h0: ArrayLike, return_unitary: bool = False) -> ErgotropyResult:
    """Maximal work extractable from ``rho`` by a unitary, relative to ``h0``.

    The passive energy pairs populations sorted in descending order with
    energies sorted in ascending order. The overlap double sum
    ``sum_{n,i} r_n e_i (|<r_n|e_i>|^2 - delta_ni)`` is evaluated as an
    independent cross-check and must agree to ``1e-10`` (relative to the
    energy scale).
    """
    rho = require_density_matrix(rho)
    h0 = require_hermitian(h0)
    if rho.shape != h0.shape:
        raise ContractError(f"state {rho.shape} and Hamiltonian {h0.shape} dimensions differ")
    eps, e_vecs = np.linalg.eigh(0.5 * (h0 + h0.conj().T))
    pops, r_vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    pops, r_vecs = pops[::-1], r_vecs[:, ::-1]

    internal = float(np.real(np.trace(rho @ h0)))
    passive = float(np.dot(pops, eps))
    erg = internal - passive

    overlaps = np.abs(r_vecs.conj().T @ e_vecs) ** 2  # [n, i] = |<r_n|e_i>|^2
    check = float(pops @ (overlaps - np.eye(len(eps))) @ eps)
    scale = max(1.0, float(np.max(np.abs(eps))))
    if abs(check - erg) > ERGOTROPY_RTOL * scale:
        raise ContractError(f"ergotropy routes disagree: {erg!r} vs {check!r}")

    v = e_vecs @ r_vecs.conj().T if return_unitary else None
    return ErgotropyResult(erg, internal, passive, v)


def ergotropy_overlap_form(rho: ArrayLike, h0: ArrayLike) -> float:
    """Double-sum form of the ergotropy, kept separate for testing."""
    rho = np.asarray(rho, dtype=complex)
    h0 = np.asarray(h0, dtype=complex)
    eps, e_vecs = np.linalg.eigh(h0)
    pops, r_vecs = np.linalg.eigh(rho)
    pops, r_vecs = pops[::-1], r_vecs[:, ::-1]
    total = 0.0
    for n in range(len(pops)):
        for i in range(len(eps)):
            ov = abs(np.vdot(r_vecs[:, n], e_vecs[:, i])) ** 2
            total += pops[n] * eps[i] * (ov - (1.0 if n == i else 0.0))
    return float(total)


def random_unitaries(dim: int, count: int, rng: np.random.Generator) -> NDArray[np.complex128]:
    """Haar-random unitaries, stacked along the first axis."""
    z = (rng.standard_normal((count, dim, dim)) + 1j * rng.standard_normal((count, dim, dim))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=1, axis2=2)
    return q * (d / np.abs(d))[:, None, :]


def unitary_orbit_energies(rho: ArrayLike, h0: ArrayLike, unitaries: NDArray) -> NDArray[np.float64]:
    """``tr(V rho V^dag H0)`` for every ``V`` in ``unitaries``."""
    rho = np.asarray(rho, dtype=complex)
    h0 = np.asarray(h0, dtype=complex)
    moved = unitaries @ rho @ np.conj(np.swapaxes(unitaries, 1, 2))
    return np.real(np.einsum("kij,ji->k", moved, h0))


@dataclass(frozen=True)
class StabilityReport:
    tau_c: float
    offsets: NDArray[np.float64]
    eta: NDArray[np.float64]
    normalization: float
    mode: str

    @property
    def eta_max(self) -> float:
        return float(np.max(self.eta))

    @property
    def eta_mean(self) -> float:
        return float(np.mean(self.eta))


def local_stability(
    traj: "Trajectory",
    tau_c: float | None = None,
    normalization: Literal["max", "asy"] = "max",
) -> StabilityReport:
    """Backflow coefficient ``eta(dt) = |E_norm - E(tau_c + dt)| / E_norm`` clipped to ``[0, 1]``.

    ``normalization="max"`` uses the single-qubit capacity. ``"asy"`` uses
    the mean ergotropy over the final 10% of the trajectory as the
    asymptotic charge.
    """
    tau_c = traj.config.tau if tau_c is None else tau_c
    erg = traj.ergotropy * traj.config.scales.e_max_qubit
    window = traj.grid >= tau_c - 1e-12 * max(1.0, tau_c)
    if not np.any(window) or traj.grid[-1] <= tau_c:
        raise ValueError(f"trajectory ending at t={traj.grid[-1]} has no samples after tau_c={tau_c}")
    if normalization == "max":
        norm = traj.config.scales.e_max_qubit
    elif normalization == "asy":
        t0, t1 = traj.grid[0], traj.grid[-1]
        tail = traj.grid >= t1 - 0.1 * (t1 - t0)
        norm = float(np.mean(erg[tail]))
        if norm <= 0:
            raise ValueError("asymptotic ergotropy is zero; eta is undefined")
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    eta = np.clip(np.abs(norm - erg[window]) / norm, 0.0, 1.0)
    return StabilityReport(float(tau_c), traj.grid[window] - tau_c, eta, float(norm), normalization)


@dataclass(frozen=True)
class CostReport:
    """Time-averaged Hilbert-Schmidt norms over ``[0, tau]`` in units of ``hbar * omega``."""

    sigma_ad: float
    sigma_tqd: float
    sigma_ad_direct: float
    space: str
    points: int

    @property
    def sigma_rel(self) -> float:
        return self.sigma_tqd / self.sigma_ad


def _simpson_nodes(points: int) -> NDArray[np.float64]:
    if points < 3:
        raise ValueError("Simpson quadrature needs at least 3 points")
    if points % 2 == 0:
        points += 1
    return np.linspace(0.0, 1.0, points)


def cost_integrands(config: DriveConfig, t: float, space: Space = "full") -> tuple[float, float, float]:
    """``(sqrt(sum E^2), sqrt(sum E^2 + mu), ||H_ad||_HS)`` at time ``t``."""
    path = drive_path(config, space)
    frame = frame_at(t, path)
    e2 = float(np.sum(frame.energies**2))
    mu = float(np.sum(eigenstate_derivative(frame, path).mu))
    return math.sqrt(e2), math.sqrt(e2 + mu), hs_norm(build_h_ad(t, config, space))


def energy_cost(
    config: DriveConfig,
    quadrature_points: int = DEFAULT_QUAD_POINTS,
    space: Space = "full",
    crosscheck_rtol: float = 1e-8,
) -> CostReport:
    """Adiabatic and counter-diabatic driving cost by composite Simpson quadrature.

    Schedules with a singular derivative at ``t = 0`` are integrated in
    ``u = (t/tau)^(1/3)`` so the integrand stays bounded.
    """
    u = _simpson_nodes(quadrature_points)
    tau = config.tau
    singular = config.schedule.singular_at_zero
    if singular:
        t_nodes = tau * u**3
        jac = 3.0 * u**2
        t_nodes[0] = tau * _SINGULAR_U_FLOOR**3
        jac[0] = 3.0 * _SINGULAR_U_FLOOR**2
    else:
        t_nodes = tau * u
        jac = np.ones_like(u)
    vals = np.array([cost_integrands(config, float(t), space) for t in t_nodes]) * jac[:, None]
    # integral over u in [0, 1] equals (1/tau) * integral over t in [0, tau]
    sigma_ad, sigma_tqd, sigma_direct = (float(simpson(vals[:, k], x=u)) for k in range(3))
    if abs(sigma_ad - sigma_direct) > crosscheck_rtol * max(1.0, abs(sigma_direct)):
        raise ContractError(f"spectral and direct cost routes disagree: {sigma_ad} vs {sigma_direct}")
    return CostReport(sigma_ad, sigma_tqd, sigma_direct, space, len(u))
