"""Tapered whisker as a discretized Euler-Bernoulli cantilever.

The whisker is meshed with two-node Hermite beam elements (deflection and
rotation per node), clamped at the root.  It is driven by prescribed support
motion, so the equations of motion in coordinates relative to the base are

    M q'' + C q' + K q = -M iota y_b''(t)

with Rayleigh damping ``C = alpha M + beta K``.  Tap points along the axis
read the relative deflection and form the reservoir output channels.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import (
    ArgumentError,
    DivergenceError,
    InvalidGeometryError,
    NumericalError,
    ResolutionError,
)

# Newmark average acceleration
NEWMARK_GAMMA = 0.5
NEWMARK_BETA = 0.25


@dataclass(frozen=True)
class WhiskerGeometry:
    length_m: float = 0.15
    base_radius_m: float = 1.5e-3
    tip_radius_m: float = 0.45e-3
    n_elements: int = 20

    def __post_init__(self):
        for name in ("length_m", "base_radius_m", "tip_radius_m"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidGeometryError(f"{name} must be finite and > 0, got {value!r}")
        if self.tip_radius_m > self.base_radius_m:
            raise InvalidGeometryError(
                f"tip radius {self.tip_radius_m} exceeds base radius {self.base_radius_m}"
            )
        if int(self.n_elements) != self.n_elements or self.n_elements < 4:
            raise ResolutionError(f"n_elements must be an integer >= 4, got {self.n_elements!r}")

    @property
    def taper_ratio(self) -> float:
        return self.tip_radius_m / self.base_radius_m

    @classmethod
    def tapered(cls, length_m=0.15, base_radius_m=1.5e-3, taper_ratio=0.3, n_elements=20):
        return cls(length_m, base_radius_m, base_radius_m * taper_ratio, n_elements)


@dataclass(frozen=True)
class Material:
    """Steel-like defaults; about 2% damping in the first mode of the default whisker."""

    youngs_modulus_pa: float = 200e9
    density_kg_m3: float = 7850.0
    rayleigh_alpha: float = 30.0
    rayleigh_beta: float = 1e-5

    def __post_init__(self):
        for name in ("youngs_modulus_pa", "density_kg_m3"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidGeometryError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("rayleigh_alpha", "rayleigh_beta"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise InvalidGeometryError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True, eq=False)
class DiscretizedWhisker:
    mass: np.ndarray
    stiffness: np.ndarray
    damping: np.ndarray
    influence: np.ndarray
    geometry: WhiskerGeometry
    material: Material

    @property
    def n_dof(self) -> int:
        return self.mass.shape[0]

    @property
    def n_nodes(self) -> int:
        """Free nodes (root excluded)."""
        return self.geometry.n_elements

    def dof_map(self, node: int) -> tuple[int, int]:
        """(deflection, rotation) indices of free node ``node`` in 1..n_elements."""
        if not 1 <= node <= self.n_nodes:
            raise ArgumentError(f"node {node} outside 1..{self.n_nodes}")
        return 2 * (node - 1), 2 * (node - 1) + 1

    def tap_node(self, fraction: float) -> int:
        """Free node nearest to an axial fraction of the length."""
        return int(np.clip(np.rint(fraction * self.n_nodes), 1, self.n_nodes))


@dataclass(frozen=True, eq=False)
class ModalBasis:
    natural_frequencies_hz: np.ndarray
    mode_shapes: np.ndarray

    @property
    def angular_frequencies(self) -> np.ndarray:
        return 2.0 * np.pi * self.natural_frequencies_hz


@dataclass(frozen=True, eq=False)
class ResponseTrajectory:
    dt_s: float
    node_displacements: np.ndarray  # T x n_dof, relative to the base
    node_velocities: np.ndarray
    node_accelerations: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class ReservoirSignal:
    dt_s: float
    tap_positions: tuple[float, ...]
    samples: np.ndarray  # T x n_taps

    @property
    def duration_s(self) -> float:
        return self.samples.shape[0] * self.dt_s


def _element_matrices(h, EI, rhoA):
    k = (EI / h**3) * np.array([
        [12.0, 6 * h, -12.0, 6 * h],
        [6 * h, 4 * h**2, -6 * h, 2 * h**2],
        [-12.0, -6 * h, 12.0, -6 * h],
        [6 * h, 2 * h**2, -6 * h, 4 * h**2],
    ])
    m = (rhoA * h / 420.0) * np.array([
        [156.0, 22 * h, 54.0, -13 * h],
        [22 * h, 4 * h**2, 13 * h, -3 * h**2],
        [54.0, 13 * h, 156.0, -22 * h],
        [-13 * h, -3 * h**2, -22 * h, 4 * h**2],
    ])
    return k, m


def build_whisker(geometry: WhiskerGeometry, material: Material) -> DiscretizedWhisker:
    """Assemble M, K, C and the base-motion influence vector.

    Section properties of each element come from the linearly interpolated
    radius at the element midpoint (solid circular section).
    """
    n_el = geometry.n_elements
    h = geometry.length_m / n_el
    mid = (np.arange(n_el) + 0.5) / n_el
    radius = geometry.base_radius_m + (geometry.tip_radius_m - geometry.base_radius_m) * mid
    area = np.pi * radius**2
    second_moment = np.pi * radius**4 / 4.0

    n_full = 2 * (n_el + 1)
    K = np.zeros((n_full, n_full))
    M = np.zeros((n_full, n_full))
    for e in range(n_el):
        k_e, m_e = _element_matrices(h, material.youngs_modulus_pa * second_moment[e],
                                     material.density_kg_m3 * area[e])
        sl = slice(2 * e, 2 * e + 4)
        K[sl, sl] += k_e
        M[sl, sl] += m_e

    # clamp the root
    K = K[2:, 2:]
    M = M[2:, 2:]
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    C = material.rayleigh_alpha * M + material.rayleigh_beta * K

    influence = np.zeros(n_full - 2)
    influence[0::2] = 1.0
    return DiscretizedWhisker(M, K, C, influence, geometry, material)


def modal_analysis(whisker: DiscretizedWhisker, m: int) -> ModalBasis:
    """Lowest ``m`` modes of K phi = w^2 M phi, mass normalized."""
    n = whisker.n_dof
    if not 1 <= m <= n:
        raise ArgumentError(f"mode count must lie in 1..{n}, got {m}")
    try:
        eigvals, vecs = linalg.eigh(whisker.stiffness, whisker.mass, subset_by_index=[0, m - 1])
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"generalized eigensolver failed: {exc}") from exc

    residual = whisker.stiffness @ vecs - whisker.mass @ vecs * eigvals
    scale = np.linalg.norm(whisker.stiffness, ord=1) * max(1.0, np.abs(vecs).max())
    rel = np.abs(residual).max() / scale
    if not np.isfinite(rel) or rel > 1e-8:
        raise NumericalError(f"eigensolver did not converge, relative residual {rel:.3e}")

    # fix sign so the tip deflection of every mode is positive
    tip = vecs[-2, :]
    vecs = vecs * np.where(tip < 0, -1.0, 1.0)
    freqs = np.sqrt(np.clip(eigvals, 0.0, None)) / (2.0 * np.pi)
    return ModalBasis(freqs, vecs)


def modal_damping_ratios(whisker: DiscretizedWhisker, basis: ModalBasis) -> np.ndarray:
    omega = basis.angular_frequencies
    mat = whisker.material
    with np.errstate(divide="ignore"):
        return mat.rayleigh_alpha / (2.0 * omega) + mat.rayleigh_beta * omega / 2.0


def base_acceleration(displacement: np.ndarray, dt: float) -> np.ndarray:
    """Second derivative of base displacement along the last axis.

    Interior samples use the three-point central stencil; both ends use the
    second-order one-sided four-point stencil.
    """
    y = np.asarray(displacement, dtype=float)
    n = y.shape[-1]
    acc = np.zeros_like(y)
    if n < 4:
        if n == 3:
            acc[...] = ((y[..., 2] - 2 * y[..., 1] + y[..., 0]) / dt**2)[..., None]
        return acc
    acc[..., 1:-1] = (y[..., 2:] - 2.0 * y[..., 1:-1] + y[..., :-2]) / dt**2
    acc[..., 0] = (2 * y[..., 0] - 5 * y[..., 1] + 4 * y[..., 2] - y[..., 3]) / dt**2
    acc[..., -1] = (2 * y[..., -1] - 5 * y[..., -2] + 4 * y[..., -3] - y[..., -4]) / dt**2
    return acc


class _NewmarkOperator:
    """Precomputed one-step map of the Newmark average-acceleration scheme.

    With constant matrices the scheme is linear and time invariant, so each
    step is ``q' = Aq q + Av v + Aa a + b yb''`` followed by the usual
    acceleration and velocity updates.
    """

    def __init__(self, whisker: DiscretizedWhisker, dt: float):
        g, b = NEWMARK_GAMMA, NEWMARK_BETA
        M, C, K = whisker.mass, whisker.damping, whisker.stiffness
        self.dt = dt
        self.a0 = 1.0 / (b * dt**2)
        self.a1 = g / (b * dt)
        self.a2 = 1.0 / (b * dt)
        self.a3 = 1.0 / (2 * b) - 1.0
        a4 = g / b - 1.0
        a5 = dt / 2.0 * (g / b - 2.0)
        k_eff = linalg.cho_factor(K + self.a0 * M + self.a1 * C)
        self.Aq = linalg.cho_solve(k_eff, self.a0 * M + self.a1 * C)
        self.Av = linalg.cho_solve(k_eff, self.a2 * M + a4 * C)
        self.Aa = linalg.cho_solve(k_eff, self.a3 * M + a5 * C)
        self.b = -linalg.cho_solve(k_eff, M @ whisker.influence)
        self.influence = whisker.influence

    def step(self, q, v, a, acc_next):
        q_new = self.Aq @ q + self.Av @ v + self.Aa @ a + np.multiply.outer(self.b, acc_next)
        a_new = self.a0 * (q_new - q) - self.a2 * v - self.a3 * a
        v_new = v + self.dt * ((1.0 - NEWMARK_GAMMA) * a + NEWMARK_GAMMA * a_new)
        return q_new, v_new, a_new


def _check_excitation(dt, samples):
    if not np.isfinite(dt) or dt <= 0 or dt**2 == 0:
        raise ArgumentError(f"excitation dt must be > 0, got {dt!r}")
    if not np.all(np.isfinite(samples)):
        raise ArgumentError("excitation contains non-finite samples")


def simulate_response(whisker: DiscretizedWhisker, excitation) -> ResponseTrajectory:
    """Integrate the base-excited whisker from rest with Newmark (1/2, 1/4)."""
    dt = float(excitation.dt_s)
    y = np.asarray(excitation.base_displacement_m, dtype=float)
    _check_excitation(dt, y)
    acc = base_acceleration(y, dt)
    op = _NewmarkOperator(whisker, dt)

    n = whisker.n_dof
    T = y.shape[0]
    Q = np.zeros((T, n))
    V = np.zeros((T, n))
    A = np.zeros((T, n))
    if T:
        A[0] = -whisker.influence * acc[0]
    q, v, a = Q[0], V[0], A[0]
    for i in range(1, T):
        q, v, a = op.step(q, v, a, acc[i])
        Q[i], V[i], A[i] = q, v, a

    finite = np.isfinite(Q).all(axis=1) & np.isfinite(V).all(axis=1)
    if not finite.all():
        raise DivergenceError(f"non-finite state at step {int(np.argmin(finite))}")
    return ResponseTrajectory(dt, Q, V, A)


def _sorted_taps(tap_positions: Sequence[float]) -> tuple[float, ...]:
    taps = [float(s) for s in tap_positions]
    if not taps:
        raise ArgumentError("tap list is empty")
    for s in taps:
        if not (0.0 < s <= 1.0):
            raise ArgumentError(f"tap position {s} outside (0, 1]")
    return tuple(sorted(set(taps)))


def tap_signals(trajectory: ResponseTrajectory, tap_positions: Sequence[float],
                whisker: DiscretizedWhisker | None = None) -> ReservoirSignal:
    """Deflection at the node nearest each axial fraction, taps sorted ascending."""
    taps = _sorted_taps(tap_positions)
    n_nodes = trajectory.node_displacements.shape[1] // 2
    nodes = [int(np.clip(np.rint(s * n_nodes), 1, n_nodes)) for s in taps]
    cols = [2 * (j - 1) for j in nodes]
    return ReservoirSignal(trajectory.dt_s, taps, trajectory.node_displacements[:, cols].copy())


def _modal_newmark_coefficients(omega, zeta, dt):
    """Per-mode Newmark (1/2, 1/4) one-step coefficients for eta'' + 2 z w eta' + w^2 eta = u."""
    g, b = NEWMARK_GAMMA, NEWMARK_BETA
    a0, a1, a2, a3 = 1 / (b * dt**2), g / (b * dt), 1 / (b * dt), 1 / (2 * b) - 1
    a4, a5 = g / b - 1, dt / 2 * (g / b - 2)
    c = 2 * zeta * omega
    k_eff = omega**2 + a0 + a1 * c
    return (a0 + a1 * c) / k_eff, (a2 + a4 * c) / k_eff, (a3 + a5 * c) / k_eff, 1.0 / k_eff, a0, a2, a3


def simulate_taps(whisker: DiscretizedWhisker, base_displacements: np.ndarray, dt: float,
                  tap_positions: Sequence[float]) -> tuple[tuple[float, ...], np.ndarray]:
    """Batched simulation returning only tap deflections, R x T x n_taps.

    Rayleigh damping makes M, C and K simultaneously diagonal in the full
    mass-normalised modal basis, so the same Newmark scheme is run on the
    decoupled modal equations (no truncation) and mapped back to the taps.
    """
    y = np.atleast_2d(np.asarray(base_displacements, dtype=float))
    _check_excitation(dt, y)
    taps = _sorted_taps(tap_positions)
    cols = [whisker.dof_map(whisker.tap_node(s))[0] for s in taps]

    basis = modal_analysis(whisker, whisker.n_dof)
    omega = basis.angular_frequencies
    zeta = modal_damping_ratios(whisker, basis)
    participation = basis.mode_shapes.T @ whisker.mass @ whisker.influence
    to_taps = basis.mode_shapes[cols, :]
    cq, cv, ca, cu, a0, a2, a3 = (np.asarray(c)[:, None] if np.ndim(c) else c
                                  for c in _modal_newmark_coefficients(omega, zeta, dt))
    forcing = -participation[:, None]
    half_dt = 0.5 * dt

    R, T = y.shape
    acc = base_acceleration(y, dt)
    n = whisker.n_dof
    q = np.zeros((n, R))
    v = np.zeros((n, R))
    a = forcing * acc[:, 0]
    out = np.zeros((R, T, len(cols)))
    for i in range(1, T):
        q_new = cq * q + cv * v + ca * a + (cu * forcing) * acc[:, i]
        a_new = a0 * (q_new - q) - a2 * v - a3 * a
        v = v + half_dt * (a + a_new)
        q, a = q_new, a_new
        out[:, i, :] = (to_taps @ q).T
    if not np.isfinite(out).all():
        bad = np.where(~np.isfinite(out).all(axis=(0, 2)))[0]
        raise DivergenceError(f"non-finite state at step {int(bad[0])}")
    return taps, out


def mechanical_energy(whisker: DiscretizedWhisker, trajectory: ResponseTrajectory) -> np.ndarray:
    """Kinetic plus strain energy of the relative motion at every sample."""
    Q, V = trajectory.node_displacements, trajectory.node_velocities
    kinetic = 0.5 * np.einsum("ti,ij,tj->t", V, whisker.mass, V)
    strain = 0.5 * np.einsum("ti,ij,tj->t", Q, whisker.stiffness, Q)
    return kinetic + strain
