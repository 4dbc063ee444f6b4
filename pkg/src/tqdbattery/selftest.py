"""Built-in oracle checks run by ``tqdbattery selftest``.

Each check compares a library result against an independent route
(closed form, brute force, or a second numerical method).
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .dynamics import propagate
from .model import (
    DriveConfig,
    Schedule,
    basis_ket,
    build_h_ad,
    build_h_ad_dot,
    build_static_hamiltonians,
    initial_state,
    number_operator,
    reference_hamiltonians,
    sector_project,
)
from .operators import SIGMA_X, SIGMA_Y, SIGMA_Z, commutator, expm_hermitian, hermitian_eig, hs_norm, kron, partial_trace
from .spectral import HamiltonianPath, build_h_cd, eigenstate_derivative, frame_at
from .thermo import energy_cost, ergotropy, random_unitaries, unitary_orbit_energies

Check = Callable[[], tuple[bool, str]]


def _expm_taylor() -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    a = 0.5 * (a + a.conj().T)
    term = np.eye(8, dtype=complex)
    series = term.copy()
    for k in range(1, 21):
        term = term @ (-0.1j * a) / k
        series = series + term
    err = float(np.max(np.abs(expm_hermitian(a, -0.1j) - series)))
    return err < 1e-9, f"max deviation from 20-term series {err:.2e}"


def _sector_eig_vs_charpoly() -> tuple[bool, str]:
    h = build_h_ad(0.5, DriveConfig(tau=1.0))
    roots = np.sort(np.roots(np.poly(h)).real)
    err = float(np.max(np.abs(hermitian_eig(h)[0] - roots)))
    return err < 1e-10, f"max |eig - charpoly root| {err:.2e}"


def _pauli_hopping() -> tuple[bool, str]:
    op = kron(SIGMA_X, SIGMA_X) + kron(SIGMA_Y, SIGMA_Y)
    ket01 = np.array([0, 1, 0, 0], dtype=complex)
    err = float(np.max(np.abs(op @ ket01 - 2 * np.array([0, 0, 1, 0]))))
    return err == 0.0, "(XX+YY)|01> = 2|10>"


def _singlet_marginal() -> tuple[bool, str]:
    singlet = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)
    rho = np.outer(singlet, singlet.conj())
    err = max(float(np.max(np.abs(partial_trace(rho, k, (2, 2)) - np.eye(2) / 2))) for k in (0, 1))
    return err < 1e-12, f"marginal deviation from I/2 {err:.2e}"


def _static_norms() -> tuple[bool, str]:
    h_ini, _, h_fin = build_static_hamiltonians(DriveConfig(tau=1.0))
    vals = (hs_norm(h_ini), hs_norm(h_fin))
    return all(abs(v - 4.0) < 1e-12 for v in vals), f"||H_ini||, ||H_fin|| = {vals}"


def _initial_eigenstate() -> tuple[bool, str]:
    cfg = DriveConfig(tau=1.0, space="full")
    h_ini, _, h_fin = build_static_hamiltonians(cfg)
    phi = initial_state(space="full")
    e1 = float(np.max(np.abs(h_ini @ phi + 2 * phi)))
    e2 = float(np.max(np.abs(h_fin @ basis_ket("001") + 2 * basis_ket("001"))))
    return max(e1, e2) < 1e-12, "H_ini|phi0> = -2|phi0>, H_fin|001> = -2|001>"


def _excitation_conservation() -> tuple[bool, str]:
    n = number_operator()
    worst = max(float(np.max(np.abs(commutator(h, n)))) for h in build_static_hamiltonians(DriveConfig(tau=1.0)))
    return worst == 0.0, "[H, N] = 0 for all static terms"


def _sector_blocks() -> tuple[bool, str]:
    h_ini, _, h_fin = build_static_hamiltonians(DriveConfig(tau=1.0))
    ok = np.allclose(sector_project(h_ini), [[0, 2, 0], [2, 0, 0], [0, 0, 0]]) and np.allclose(
        sector_project(h_fin), np.diag([0, 0, -2])
    )
    return bool(ok), "sector blocks of H_ini and H_fin"


def _h_dot_fd() -> tuple[bool, str]:
    worst = 0.0
    for name in ("linear", "sine", "cube-root"):
        cfg = DriveConfig(tau=1.0, schedule=name)
        t, d = 0.4, 1e-5
        fd = (build_h_ad(t + d, cfg) - build_h_ad(t - d, cfg)) / (2 * d)
        worst = max(worst, float(np.max(np.abs(fd - build_h_ad_dot(t, cfg)))))
    return worst < 1e-6, f"central difference vs analytic derivative {worst:.2e}"


def _two_level_cd() -> tuple[bool, str]:
    tau = 1.0
    theta = lambda t: 0.5 * math.pi * t / tau  # noqa: E731
    z = -SIGMA_Z  # textbook diag(1, -1), for which H_cd = (theta'/2) sigma_y
    path = HamiltonianPath(
        h=lambda t: math.cos(theta(t)) * z + math.sin(theta(t)) * SIGMA_X,
        h_dot=lambda t: 0.5 * math.pi / tau * (-math.sin(theta(t)) * z + math.cos(theta(t)) * SIGMA_X),
        blocks=(np.arange(2),),
        fd_delta=1e-6,
    )
    expected = 0.25 * math.pi / tau * SIGMA_Y
    err = float(np.max(np.abs(build_h_cd(0.3, path) - expected)))
    mu = eigenstate_derivative(frame_at(0.3, path), path, "off_diagonal").mu
    mu_err = float(np.max(np.abs(mu - (math.pi / (4 * tau)) ** 2)))
    return err < 1e-6 and mu_err < 1e-8, f"|H_cd - (theta'/2) sigma_y| {err:.2e}, mu error {mu_err:.2e}"


def _derivative_routes() -> tuple[bool, str]:
    cfg = DriveConfig(tau=1.0)
    frame = frame_at(0.5, cfg)
    a = eigenstate_derivative(frame, cfg, "finite_difference").dstates
    b = eigenstate_derivative(frame, cfg, "off_diagonal").dstates
    rel = float(np.max(np.abs(a - b)) / np.max(np.abs(b)))
    return rel < 1e-5, f"relative difference {rel:.2e}"


def _ergotropy_cell() -> tuple[bool, str]:
    cfg = DriveConfig(tau=1.0)
    h_cell, _ = reference_hamiltonians(cfg)
    full = np.zeros((4, 4), dtype=complex)
    full[3, 3] = 1
    singlet = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)
    e_full = ergotropy(full, h_cell).ergotropy
    e_singlet = ergotropy(np.outer(singlet, singlet.conj()), h_cell).ergotropy
    ok = abs(e_full - 4 * cfg.omega_ref) < 1e-12 and abs(e_singlet - 2 * cfg.omega_ref) < 1e-12
    return ok, f"full cell {e_full}, singlet {e_singlet}"


def _random_unitary_bound() -> tuple[bool, str]:
    rng = np.random.default_rng(11)
    singlet = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)
    rho = np.outer(singlet, singlet.conj())
    h_cell, _ = reference_hamiltonians(DriveConfig(tau=1.0))
    passive = ergotropy(rho, h_cell).passive_energy
    low = float(np.min(unitary_orbit_energies(rho, h_cell, random_unitaries(4, 20000, rng))))
    return low >= passive - 1e-9, f"lowest sampled energy {low:.6f} vs passive {passive:.6f}"


def _cost_closed_form() -> tuple[bool, str]:
    # ||H_ad(t)||_HS = 4 (1 - s + s^2) for the linear schedule, so the mean is 10/3
    rep = energy_cost(DriveConfig(tau=10.0), quadrature_points=201)
    err = abs(rep.sigma_ad - 10.0 / 3.0)
    return err < 1e-10 and rep.sigma_tqd >= rep.sigma_ad, f"sigma_ad {rep.sigma_ad:.12f}, sigma_rel {rep.sigma_rel:.6f}"


def _constant_eigenstate() -> tuple[bool, str]:
    const = Schedule.custom(lambda t: 0.0, lambda t: 0.0, lambda t: 0.0, lambda t: 0.0, "constant", check_boundary=False)
    traj = propagate(DriveConfig(tau=1.0, schedule=const), "adiabatic", steps=200)
    loss = 1.0 - float(abs(np.vdot(initial_state(traj.config), traj.final_state)))
    return loss < 1e-12, f"1 - |<phi0|psi(t)>| = {loss:.2e}"


def _tqd_transitionless() -> tuple[bool, str]:
    traj = propagate(DriveConfig(tau=1.0, schedule="linear"), "tqd", steps=500)
    worst = 1.0 - float(np.min(traj.fidelity_to_tracked))
    return worst < 1e-4 and traj.ergotropy[-1] > 0.99, f"max infidelity {worst:.2e}, final ergotropy {traj.ergotropy[-1]:.6f}"


def _sector_vs_full() -> tuple[bool, str]:
    a = propagate(DriveConfig(tau=2.0, space="sector"), "tqd", steps=300)
    b = propagate(DriveConfig(tau=2.0, space="full"), "tqd", steps=300)
    worst = 1.0 - min(
        float(abs(np.vdot(sector_project(y), x)) ** 2) for x, y in zip(a.states, b.states)
    )
    return worst < 1e-8, f"max infidelity between spaces {worst:.2e}"


QUICK_CHECKS: dict[str, Check] = {
    "operators.expm_taylor": _expm_taylor,
    "operators.eig_charpoly": _sector_eig_vs_charpoly,
    "operators.pauli_hopping": _pauli_hopping,
    "operators.singlet_marginal": _singlet_marginal,
    "model.static_norms": _static_norms,
    "model.initial_eigenstate": _initial_eigenstate,
    "model.excitation_conservation": _excitation_conservation,
    "model.sector_blocks": _sector_blocks,
    "model.h_dot_finite_difference": _h_dot_fd,
    "spectral.two_level_counter_diabatic": _two_level_cd,
    "spectral.derivative_routes": _derivative_routes,
    "thermo.ergotropy_cell": _ergotropy_cell,
    "thermo.random_unitary_bound": _random_unitary_bound,
    "thermo.cost_closed_form": _cost_closed_form,
}
SLOW_CHECKS: dict[str, Check] = {
    "dynamics.constant_eigenstate": _constant_eigenstate,
    "dynamics.tqd_transitionless": _tqd_transitionless,
    "dynamics.sector_vs_full": _sector_vs_full,
}


def run_selftest(quick: bool = False, echo: Callable[[str], None] = print) -> bool:
    checks = dict(QUICK_CHECKS)
    if not quick:
        checks.update(SLOW_CHECKS)
    all_ok = True
    for name, fn in checks.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not an aborted run
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        echo(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    echo(f"{'all checks passed' if all_ok else 'some checks failed'} ({len(checks)} run)")
    return all_ok
