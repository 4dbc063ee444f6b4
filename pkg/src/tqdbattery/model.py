"""Charger-battery model: three qubits (C1, C2, QB) driven by an interpolated Hamiltonian.

Basis index convention is ``b = 4*n_C1 + 2*n_C2 + n_QB`` and
``sigma_z |n> = (-1)^(1-n) |n>``, so ``|1>`` is the charged (+1) level.
The one-excitation sector is spanned by ``(|100>, |010>, |001>)`` in that
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Literal, NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigError, ContractError, DimensionError, LeakageError, SingularDerivativeError
from .operators import IDENTITY_2, SIGMA_X, SIGMA_Y, SIGMA_Z, kron

Space = Literal["sector", "full"]

SECTOR_INDICES = np.array([4, 2, 1])
FULL_BLOCKS = (np.array([0]), np.array([4, 2, 1]), np.array([6, 5, 3]), np.array([7]))
BOUNDARY_TOL = 1e-12


class ScheduleValues(NamedTuple):
    f: float
    g: float
    df: float
    dg: float


@dataclass(frozen=True)
class Schedule:
    """Interpolation pair ``(f, g)`` with analytic derivatives.

    Each callable takes ``(t, tau)``. ``singular_at_zero`` marks schedules
    whose derivative is unbounded at ``t = 0``; derivative evaluation there
    returns ``inf`` and integrators grade their first step.
    """

    name: str
    f: Callable[[float, float], float]
    g: Callable[[float, float], float]
    df: Callable[[float, float], float]
    dg: Callable[[float, float], float]
    singular_at_zero: bool = False
    check_boundary: bool = True

    @classmethod
    def custom(
        cls,
        f: Callable[[float], float],
        g: Callable[[float], float],
        df: Callable[[float], float],
        dg: Callable[[float], float],
        name: str = "custom",
        singular_at_zero: bool = False,
        check_boundary: bool = True,
    ) -> "Schedule":
        """Build a schedule from plain functions of ``t``."""
        return cls(
            name,
            lambda t, tau: f(t),
            lambda t, tau: g(t),
            lambda t, tau: df(t),
            lambda t, tau: dg(t),
            singular_at_zero=singular_at_zero,
            check_boundary=check_boundary,
        )

    def check(self, tau: float) -> None:
        vals = (self.f(0.0, tau), self.g(0.0, tau), self.f(tau, tau) - 1.0, self.g(tau, tau) - 1.0)
        if any(not math.isfinite(v) or abs(v) > BOUNDARY_TOL for v in vals):
            raise ConfigError(
                f"schedule {self.name!r} violates f(0)=g(0)=0, f(tau)=g(tau)=1 (residuals {vals})"
            )

    def evaluate(self, t: float, tau: float, clamp: bool = False) -> ScheduleValues:
        if t < 0:
            raise ContractError(f"schedule evaluated at negative time {t}")
        if clamp and t > tau:
            return ScheduleValues(self.f(tau, tau), self.g(tau, tau), 0.0, 0.0)
        if t == 0 and self.singular_at_zero:
            return ScheduleValues(self.f(0.0, tau), self.g(0.0, tau), math.inf, self.dg(0.0, tau))
        return ScheduleValues(self.f(t, tau), self.g(t, tau), self.df(t, tau), self.dg(t, tau))


def _sine(t: float, tau: float) -> float:
    return math.sin(0.5 * math.pi * t / tau)


def _dsine(t: float, tau: float) -> float:
    return 0.5 * math.pi / tau * math.cos(0.5 * math.pi * t / tau)


LINEAR = Schedule("linear", lambda t, tau: t / tau, lambda t, tau: t / tau,
                  lambda t, tau: 1.0 / tau, lambda t, tau: 1.0 / tau)
SINE = Schedule("sine", _sine, _sine, _dsine, _dsine)
# f^3 = g = t/tau: f grows sub-linearly, so H_fin wins at late times
CUBE_ROOT = Schedule(
    "cube-root",
    lambda t, tau: (t / tau) ** (1.0 / 3.0),
    lambda t, tau: t / tau,
    lambda t, tau: (t / tau) ** (-2.0 / 3.0) / (3.0 * tau),
    lambda t, tau: 1.0 / tau,
    singular_at_zero=True,
)

SCHEDULES = {s.name: s for s in (LINEAR, SINE, CUBE_ROOT)}
_ALIASES = {"lin": "linear", "sin": "sine", "cube": "cube-root", "cuberoot": "cube-root",
            "cube_root": "cube-root"}


def get_schedule(name: str | Schedule) -> Schedule:
    if isinstance(name, Schedule):
        return name
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    try:
        return SCHEDULES[key]
    except KeyError:
        raise ConfigError(f"unknown schedule {name!r}; expected one of {sorted(SCHEDULES)}") from None


def schedule_eval(kind: str | Schedule, t: float, tau: float, clamp: bool = False) -> ScheduleValues:
    return get_schedule(kind).evaluate(t, tau, clamp)


@dataclass(frozen=True)
class EnergyScales:
    e_max_qubit: float
    e_max_cell: float

    @classmethod
    def from_omega(cls, omega_ref: float) -> "EnergyScales":
        return cls(2.0 * omega_ref, 4.0 * omega_ref)


@dataclass(frozen=True)
class DriveConfig:
    """Immutable description of one driven protocol (hbar = 1).

    ``omega`` sets the drive strength, ``omega_ref`` the reference
    Hamiltonian used for ergotropy (defaults to ``omega``). ``gap_tol`` is in
    units of ``omega`` and ``fd_delta`` in units of ``tau``.
    """

    tau: float
    schedule: Schedule = LINEAR
    omega: float = 1.0
    omega_ref: float | None = None
    space: Space = "sector"
    clamp: bool = False
    gap_tol: float = 1e-8
    fd_delta: float = 1e-6
    derivative_method: Literal["finite_difference", "off_diagonal"] = "finite_difference"
    scales: EnergyScales = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.schedule, str):
            object.__setattr__(self, "schedule", get_schedule(self.schedule))
        if self.omega_ref is None:
            object.__setattr__(self, "omega_ref", self.omega)
        for name in ("tau", "omega", "omega_ref", "gap_tol", "fd_delta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
        if self.space not in ("sector", "full"):
            raise ConfigError(f"space must be 'sector' or 'full', got {self.space!r}")
        if self.derivative_method not in ("finite_difference", "off_diagonal"):
            raise ConfigError(f"unknown derivative method {self.derivative_method!r}")
        if self.schedule.check_boundary:
            self.schedule.check(self.tau)
        object.__setattr__(self, "scales", EnergyScales.from_omega(self.omega_ref))

    @property
    def dim(self) -> int:
        return 3 if self.space == "sector" else 8

    def with_(self, **changes) -> "DriveConfig":
        from dataclasses import replace

        return replace(self, **changes)


@lru_cache(maxsize=None)
def _static_unit() -> tuple[NDArray, NDArray, NDArray]:
    h_ini = kron(SIGMA_X, SIGMA_X, IDENTITY_2) + kron(SIGMA_Y, SIGMA_Y, IDENTITY_2)
    h_inter = kron(IDENTITY_2, SIGMA_X, SIGMA_X) + kron(IDENTITY_2, SIGMA_Y, SIGMA_Y)
    h_fin = kron(SIGMA_Z, IDENTITY_2, SIGMA_Z) + kron(IDENTITY_2, SIGMA_Z, SIGMA_Z)
    for h in (h_ini, h_inter, h_fin):
        h.setflags(write=False)
    return h_ini, h_inter, h_fin


def build_static_hamiltonians(config: DriveConfig) -> tuple[NDArray, NDArray, NDArray]:
    """``(H_ini, H_inter, H_fin)`` on the full 8-dimensional space."""
    return tuple(config.omega * h for h in _static_unit())


def _restrict(op: NDArray, space: Space) -> NDArray:
    return op[np.ix_(SECTOR_INDICES, SECTOR_INDICES)] if space == "sector" else op


@lru_cache(maxsize=64)
def _static_scaled(omega: float, space: Space) -> tuple[NDArray, NDArray, NDArray]:
    out = tuple(_restrict(omega * h, space) for h in _static_unit())
    for h in out:
        h.setflags(write=False)
    return out


def static_hamiltonians(config: DriveConfig, space: Space | None = None) -> tuple[NDArray, NDArray, NDArray]:
    """Static Hamiltonians restricted to ``space`` (read-only arrays)."""
    return _static_scaled(config.omega, space or config.space)


def build_h_ad(t: float, config: DriveConfig, space: Space | None = None) -> NDArray[np.complex128]:
    """Interpolated drive ``[1-f] H_ini + f(1-f) H_inter + g H_fin``."""
    s = config.schedule.evaluate(t, config.tau, config.clamp)
    h_ini, h_inter, h_fin = static_hamiltonians(config, space)
    return (1.0 - s.f) * h_ini + s.f * (1.0 - s.f) * h_inter + s.g * h_fin


def build_h_ad_dot(t: float, config: DriveConfig, space: Space | None = None) -> NDArray[np.complex128]:
    s = config.schedule.evaluate(t, config.tau, config.clamp)
    if not (math.isfinite(s.df) and math.isfinite(s.dg)):
        raise SingularDerivativeError(
            f"schedule {config.schedule.name!r} has an unbounded derivative at t={t}"
        )
    h_ini, h_inter, h_fin = static_hamiltonians(config, space)
    return -s.df * h_ini + (s.df - 2.0 * s.f * s.df) * h_inter + s.dg * h_fin


def number_operator(space: Space = "full") -> NDArray[np.complex128]:
    """Total excitation number ``sum_k (1 + sigma_z^(k)) / 2``."""
    n1 = 0.5 * (np.eye(2) + SIGMA_Z)
    n = kron(n1, IDENTITY_2, IDENTITY_2) + kron(IDENTITY_2, n1, IDENTITY_2) + kron(IDENTITY_2, IDENTITY_2, n1)
    return _restrict(n, space)


def excitation_blocks(space: Space) -> tuple[NDArray[np.intp], ...]:
    """Index sets of the excitation-number blocks within the working space."""
    if space == "sector":
        return (np.arange(3),)
    return FULL_BLOCKS


def basis_ket(bits: str) -> NDArray[np.complex128]:
    """Full-space ket for a bit string such as ``"001"`` (order C1, C2, QB)."""
    if len(bits) != 3 or set(bits) - {"0", "1"}:
        raise ValueError(f"expected three bits, got {bits!r}")
    v = np.zeros(8, dtype=complex)
    v[int(bits, 2)] = 1.0
    return v


def initial_state(config: DriveConfig | None = None, space: Space | None = None) -> NDArray[np.complex128]:
    """Charger singlet times an empty battery: ``(|010> - |100>) / sqrt(2)``."""
    psi = (basis_ket("010") - basis_ket("100")) / math.sqrt(2.0)
    space = space or (config.space if config else "full")
    return sector_project(psi) if space == "sector" else psi


def target_state(config: DriveConfig | None = None, space: Space | None = None) -> NDArray[np.complex128]:
    psi = basis_ket("001")
    space = space or (config.space if config else "full")
    return sector_project(psi) if space == "sector" else psi


@lru_cache(maxsize=64)
def _reference_scaled(w: float) -> tuple[NDArray, NDArray]:
    h_cell = w * (kron(SIGMA_Z, IDENTITY_2) + kron(IDENTITY_2, SIGMA_Z))
    h_qb = w * SIGMA_Z
    for h in (h_cell, h_qb):
        h.setflags(write=False)
    return h_cell, h_qb


def reference_hamiltonians(config: DriveConfig) -> tuple[NDArray, NDArray]:
    """``(H_0^cell, H_0^QB)``: ``w(sz x 1 + 1 x sz)`` on the charger pair and ``w sz`` on the battery."""
    return _reference_scaled(config.omega_ref)


def sector_project(obj: ArrayLike, tol: float = 1e-10) -> NDArray[np.complex128]:
    """Restrict a full-space ket or operator to the one-excitation sector."""
    a = np.asarray(obj, dtype=complex)
    if a.shape == (8,):
        outside = np.delete(a, SECTOR_INDICES)
        if float(np.sum(np.abs(outside) ** 2)) > tol:
            raise LeakageError("state has weight outside the one-excitation sector")
        return a[SECTOR_INDICES].copy()
    if a.shape == (8, 8):
        rest = np.setdiff1d(np.arange(8), SECTOR_INDICES)
        coupling = a[np.ix_(SECTOR_INDICES, rest)]
        if coupling.size and float(np.max(np.abs(coupling))) > tol * max(1.0, float(np.max(np.abs(a)))):
            raise LeakageError("operator couples the sector to the rest of the space")
        return a[np.ix_(SECTOR_INDICES, SECTOR_INDICES)].copy()
    raise DimensionError(f"expected an 8-vector or 8x8 matrix, got shape {a.shape}")


def sector_embed(obj: ArrayLike) -> NDArray[np.complex128]:
    """Inverse of :func:`sector_project`, padding with zeros."""
    a = np.asarray(obj, dtype=complex)
    if a.shape == (3,):
        out = np.zeros(8, dtype=complex)
        out[SECTOR_INDICES] = a
        return out
    if a.shape == (3, 3):
        out = np.zeros((8, 8), dtype=complex)
        out[np.ix_(SECTOR_INDICES, SECTOR_INDICES)] = a
        return out
    raise DimensionError(f"expected a 3-vector or 3x3 matrix, got shape {a.shape}")


def to_full(obj: ArrayLike) -> NDArray[np.complex128]:
    a = np.asarray(obj, dtype=complex)
    return sector_embed(a) if a.shape[0] == 3 else a
