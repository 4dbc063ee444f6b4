"""Instantaneous eigensystems of a driven Hamiltonian and the counter-diabatic term.

Frames are computed block by block over excitation-number blocks, so
accidental degeneracies between blocks never mix eigenvectors. Consecutive
frames are matched by maximal overlap (not by index) and their phases are
chosen so that ``<n(t_prev)|n(t)>`` is real and positive.

The adiabatic phase never enters: the reference state is the projector
``|n(t)><n(t)|``, which is phase free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import DegeneracyError, SingularDerivativeError, TrackingError
from .model import DriveConfig, Space, build_h_ad, build_h_ad_dot, excitation_blocks, initial_state
from .operators import require_hermitian

Method = Literal["finite_difference", "off_diagonal"]

MATCH_THRESHOLD = 0.5
# finite differences leave ~eps/delta anti-Hermitian noise; larger deviations mean a real failure
HERMITICITY_GUARD = 1e-7
# smallest stencil spacing relative to the distance from a singular start point
SINGULAR_STENCIL_FRACTION = 1e-3


@dataclass(frozen=True)
class HamiltonianPath:
    """A Hermitian matrix function of time plus the numerical knobs used to track it.

    ``fd_delta`` is an absolute time step. ``singular_start`` says the
    derivative blows up at ``t_min``; finite differences then shrink their
    stencil in proportion to ``t - t_min``.
    """

    h: Callable[[float], NDArray]
    h_dot: Callable[[float], NDArray] | None
    blocks: tuple[NDArray, ...]
    gap_tol: float = 1e-8
    fd_delta: float = 1e-6
    t_min: float = 0.0
    singular_start: bool = False
    method: Method = "finite_difference"

    @property
    def dim(self) -> int:
        return int(sum(len(b) for b in self.blocks))


def drive_path(config: DriveConfig, space: Space | None = None) -> HamiltonianPath:
    space = space or config.space
    return HamiltonianPath(
        h=lambda t: build_h_ad(t, config, space),
        h_dot=lambda t: build_h_ad_dot(t, config, space),
        blocks=excitation_blocks(space),
        gap_tol=config.gap_tol * config.omega,
        fd_delta=config.fd_delta * config.tau,
        singular_start=config.schedule.singular_at_zero,
        method=config.derivative_method,
    )


def _as_path(src: DriveConfig | HamiltonianPath) -> HamiltonianPath:
    return src if isinstance(src, HamiltonianPath) else drive_path(src)


@dataclass(frozen=True)
class SpectralFrame:
    """Gauge-fixed eigensystem at one time.

    Columns of ``states`` follow ascending ``energies``. ``labels[j]`` is the
    identity of column ``j`` as tracked from the first frame of its chain,
    so a level keeps its label through crossings even when its position in
    the ascending order changes.
    """

    t: float
    energies: NDArray[np.float64]
    states: NDArray[np.complex128]
    labels: NDArray[np.intp]
    block_ids: NDArray[np.intp]
    gap_min: float
    warnings: tuple[str, ...] = ()

    @property
    def near_degenerate(self) -> bool:
        return bool(self.warnings)

    def column(self, label: int) -> int:
        hits = np.flatnonzero(self.labels == label)
        if hits.size != 1:
            raise KeyError(f"label {label} not present in frame at t={self.t}")
        return int(hits[0])

    def state(self, label: int) -> NDArray[np.complex128]:
        return self.states[:, self.column(label)]

    def energy(self, label: int) -> float:
        return float(self.energies[self.column(label)])

    def level_gap(self, label: int) -> float:
        """Distance from level ``label`` to the nearest other level of its block."""
        j = self.column(label)
        same = np.flatnonzero(self.block_ids == self.block_ids[j])
        others = same[same != j]
        if others.size == 0:
            return math.inf
        return float(np.min(np.abs(self.energies[others] - self.energies[j])))

    def projector(self, label: int) -> NDArray[np.complex128]:
        v = self.state(label)
        return np.outer(v, v.conj())


@dataclass(frozen=True)
class FlowDerivatives:
    """Eigenstate velocities ``|n'(t)>`` and the gauge-invariant ``mu_n(t)``.

    ``states`` may differ from the source frame inside an exactly degenerate
    cluster, where the basis was rotated to follow the neighbouring frame.
    """

    t: float
    states: NDArray[np.complex128]
    dstates: NDArray[np.complex128]
    labels: NDArray[np.intp]
    mu: NDArray[np.float64] = field(init=False)

    def __post_init__(self):
        norm2 = np.sum(np.abs(self.dstates) ** 2, axis=0)
        berry = np.abs(np.sum(self.states.conj() * self.dstates, axis=0)) ** 2
        object.__setattr__(self, "mu", norm2 - berry)


def _phase_fix_largest(v: NDArray) -> NDArray:
    out = v.copy()
    for j in range(out.shape[1]):
        k = int(np.argmax(np.abs(out[:, j])))
        a = out[k, j]
        if a != 0:
            out[:, j] *= abs(a) / a
    return out


def _clusters(e: NDArray, tol: float) -> list[NDArray[np.intp]]:
    """Group sorted eigenvalues whose neighbours are closer than ``tol``."""
    groups = [[0]]
    for i in range(1, len(e)):
        if e[i] - e[i - 1] < tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return [np.array(g) for g in groups]


def _raw_frame(path: HamiltonianPath, t: float):
    """Per-block eigensystems assembled into full columns, ascending overall."""
    h = require_hermitian(path.h(t))
    dim = h.shape[0]
    if len(path.blocks) == 1:
        w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
        gap = float(np.min(np.diff(w))) if dim > 1 else math.inf
        return w, v, np.zeros(dim, dtype=np.intp), gap
    energies, vectors, block_ids = [], [], []
    gap_min = math.inf
    for b, idx in enumerate(path.blocks):
        sub = h[np.ix_(idx, idx)]
        w, v = np.linalg.eigh(0.5 * (sub + sub.conj().T))
        if len(w) > 1:
            gap_min = min(gap_min, float(np.min(np.diff(w))))
        full = np.zeros((dim, len(idx)), dtype=complex)
        full[idx, :] = v
        energies.append(w)
        vectors.append(full)
        block_ids.append(np.full(len(idx), b))
    e = np.concatenate(energies)
    v = np.concatenate(vectors, axis=1)
    bid = np.concatenate(block_ids)
    order = np.argsort(e, kind="stable")
    return e[order], v[:, order], bid[order], gap_min


def _rotate_clusters(e, v, bid, ref, tol):
    """Inside each degenerate cluster pick the basis closest to ``ref`` (polar factor)."""
    v = v.copy()
    for b in np.unique(bid):
        cols = np.flatnonzero(bid == b)
        for cl in _clusters(e[cols], tol):
            if cl.size < 2:
                continue
            cc = cols[cl]
            w = v[:, cc]
            m = w.conj().T @ ref
            weights = np.sum(np.abs(m) ** 2, axis=0)
            pick = np.argsort(weights)[::-1][: cc.size]
            u, _, vh = np.linalg.svd(m[:, pick])
            v[:, cc] = w @ (u @ vh)
    return v


def _match(v, bid, ref_states, ref_labels, ref_bid, t):
    """Assign labels and phases to ``v`` by maximal overlap with a reference frame."""
    labels = np.empty(v.shape[1], dtype=np.intp)
    out = v.copy()
    for b in np.unique(bid):
        cols = np.flatnonzero(bid == b)
        rcols = np.flatnonzero(ref_bid == b)
        ov = ref_states[:, rcols].conj().T @ v[:, cols]
        mag = np.abs(ov)
        ambiguous = np.sum(mag > MATCH_THRESHOLD, axis=1) > 1
        if np.any(ambiguous):
            raise TrackingError(f"ambiguous eigenvector overlap at t={t:.12g}; refine the grid", t)
        best = np.argmax(mag, axis=1)
        if len(set(best.tolist())) != best.size:
            raise TrackingError(f"eigenvector overlaps do not define a one-to-one match at t={t:.12g}", t)
        for r, c in enumerate(best):
            if mag[r, c] <= MATCH_THRESHOLD:
                raise TrackingError(
                    f"eigenvector overlap {mag[r, c]:.3f} below {MATCH_THRESHOLD} at t={t:.12g}; refine the grid", t
                )
            j = cols[c]
            labels[j] = ref_labels[rcols[r]]
            z = ov[r, c]
            out[:, j] *= np.conj(z) / abs(z)
    return out, labels


def _align(path, t, e, v, bid, gap_min, ref: SpectralFrame | None) -> SpectralFrame:
    warnings = ()
    if gap_min < path.gap_tol:
        warnings = (f"adjacent gap {gap_min:.3e} below gap_tol {path.gap_tol:.3e}",)
    if ref is None:
        v = _phase_fix_largest(v)
        labels = np.arange(v.shape[1])
    else:
        v = _rotate_clusters(e, v, bid, ref.states, path.gap_tol)
        v, labels = _match(v, bid, ref.states, ref.labels, ref.block_ids, t)
    return SpectralFrame(float(t), e, v, labels, bid, float(gap_min), warnings)


def frame_at(t: float, source: DriveConfig | HamiltonianPath, prev: SpectralFrame | None = None) -> SpectralFrame:
    """Eigensystem at ``t``, gauge-aligned to ``prev`` when given."""
    path = _as_path(source)
    e, v, bid, gap = _raw_frame(path, t)
    return _align(path, t, e, v, bid, gap, prev)


def track_frames(source: DriveConfig | HamiltonianPath, times: Sequence[float]) -> list[SpectralFrame]:
    """Frames along ``times`` with each one aligned to its predecessor."""
    frames: list[SpectralFrame] = []
    prev = None
    for t in times:
        prev = frame_at(float(t), source, prev)
        frames.append(prev)
    return frames


def _stencil_step(path: HamiltonianPath, t: float) -> float:
    if path.singular_start:
        if t <= path.t_min:
            raise SingularDerivativeError(f"eigenstate derivative is unbounded at t={t}")
        return min(path.fd_delta, SINGULAR_STENCIL_FRACTION * (t - path.t_min))
    return path.fd_delta


def _derivative_fd(path: HamiltonianPath, frame: SpectralFrame) -> FlowDerivatives:
    t = frame.t
    d = _stencil_step(path, t)
    central = t - d >= path.t_min
    t_first = t - d if central else t + d
    raw_first = _raw_frame(path, t_first)
    centre = frame
    if frame.near_degenerate:
        # rebuild the centre so degenerate clusters follow the neighbouring frame
        v = _rotate_clusters(frame.energies, frame.states, frame.block_ids, raw_first[1], path.gap_tol)
        centre = SpectralFrame(
            t, frame.energies, _phase_fix_largest(v), frame.labels, frame.block_ids, frame.gap_min, frame.warnings
        )
    first = _align(path, t_first, *raw_first, centre)
    if central:
        plus = frame_at(t + d, path, centre)
        dn = (_reorder(plus, centre) - _reorder(first, centre)) / (2.0 * d)
    else:
        plus2 = frame_at(t + 2.0 * d, path, centre)
        dn = (-3.0 * centre.states + 4.0 * _reorder(first, centre) - _reorder(plus2, centre)) / (2.0 * d)
    return FlowDerivatives(t, centre.states, dn, centre.labels)


def _reorder(frame: SpectralFrame, like: SpectralFrame) -> NDArray[np.complex128]:
    """Columns of ``frame`` permuted to follow the labels of ``like``."""
    pos = {int(l): j for j, l in enumerate(frame.labels)}
    return frame.states[:, [pos[int(l)] for l in like.labels]]


def _derivative_offdiag(path: HamiltonianPath, frame: SpectralFrame) -> FlowDerivatives:
    if path.h_dot is None:
        raise ValueError("off-diagonal derivatives need the Hamiltonian's time derivative")
    if frame.gap_min < path.gap_tol:
        raise DegeneracyError(f"levels closer than gap_tol at t={frame.t:.12g}", frame.t)
    hd = path.h_dot(frame.t)
    v = frame.states
    dn = np.zeros_like(v)
    for b in np.unique(frame.block_ids):
        cols = np.flatnonzero(frame.block_ids == b)
        vb = v[:, cols]
        e = frame.energies[cols]
        mel = vb.conj().T @ hd @ vb
        denom = e[None, :] - e[:, None]
        np.fill_diagonal(denom, 1.0)
        coef = mel / denom
        np.fill_diagonal(coef, 0.0)
        dn[:, cols] = vb @ coef
    return FlowDerivatives(frame.t, v, dn, frame.labels)


def eigenstate_derivative(
    frame: SpectralFrame, source: DriveConfig | HamiltonianPath, method: Method | None = None
) -> FlowDerivatives:
    """``|n'(t)>`` for every level of ``frame``.

    ``finite_difference`` differentiates gauge-aligned frames at ``t +- delta``
    (one-sided at the start of the domain); ``off_diagonal`` uses
    ``<m|H'|n> / (E_n - E_m)`` and needs every gap above ``gap_tol``.
    """
    path = _as_path(source)
    method = method or path.method
    if method == "finite_difference":
        return _derivative_fd(path, frame)
    if method == "off_diagonal":
        return _derivative_offdiag(path, frame)
    raise ValueError(f"unknown derivative method {method!r}")


def h_cd_from_flow(flow: FlowDerivatives) -> NDArray[np.complex128]:
    """``i sum_n (|n'><n| + <n'|n> |n><n|)``, symmetrized after a Hermiticity check."""
    v, dv = flow.states, flow.dstates
    berry = np.sum(dv.conj() * v, axis=0)  # <n'|n>
    h = 1j * (dv @ v.conj().T + (v * berry) @ v.conj().T)
    dev = float(np.max(np.abs(h - h.conj().T)))
    scale = max(1.0, float(np.max(np.abs(h))))
    if dev > HERMITICITY_GUARD * scale:
        raise DegeneracyError(f"counter-diabatic term not Hermitian (deviation {dev:.3e}) at t={flow.t:.12g}", flow.t)
    return 0.5 * (h + h.conj().T)


def build_h_cd(
    t: float, source: DriveConfig | HamiltonianPath, method: Method | None = None
) -> NDArray[np.complex128]:
    """Counter-diabatic Hamiltonian at ``t``.

    Raises :class:`DegeneracyError` when two levels of a block are closer
    than ``gap_tol``; the operator is not defined there without extra
    gauge choices.
    """
    path = _as_path(source)
    frame = frame_at(t, path)
    if frame.gap_min < path.gap_tol:
        raise DegeneracyError(f"degenerate levels in working space at t={t:.12g}", t)
    return h_cd_from_flow(eigenstate_derivative(frame, path, method))


def build_h_tqd(t: float, source: DriveConfig | HamiltonianPath, method: Method | None = None) -> NDArray[np.complex128]:
    path = _as_path(source)
    return path.h(t) + build_h_cd(t, path, method)


def tracked_label(source: DriveConfig | HamiltonianPath, psi0: NDArray | None = None, t0: float = 0.0) -> tuple[int, SpectralFrame]:
    """Label of the level holding ``psi0`` at ``t0`` (defaults to the charger singlet)."""
    path = _as_path(source)
    if psi0 is None:
        if not isinstance(source, DriveConfig):
            raise ValueError("psi0 is required for a bare HamiltonianPath")
        psi0 = initial_state(source)
    frame = frame_at(t0, path)
    ov = np.abs(frame.states.conj().T @ psi0) ** 2
    j = int(np.argmax(ov))
    if ov[j] < 1.0 - 1e-8:
        raise TrackingError(f"initial state is not an eigenstate (best overlap {ov[j]:.6f})", t0)
    return int(frame.labels[j]), frame


def adiabatic_reference(
    t: float,
    config: DriveConfig,
    level: int | None = None,
    steps_per_tau: int = 2000,
) -> NDArray[np.complex128]:
    """Projector onto the eigenstate continued from ``t = 0`` to ``t``.

    ``level`` is a label of the ``t = 0`` frame; by default the level
    holding the initial singlet.
    """
    path = drive_path(config)
    if level is None:
        level, _ = tracked_label(config)
    n = max(1, math.ceil(steps_per_tau * t / config.tau))
    frames = track_frames(path, np.linspace(0.0, t, n + 1))
    return frames[-1].projector(level)
