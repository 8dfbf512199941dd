import numpy as np
import pytest
from scipy import signal as sps

from conftest import CANTILEVER_LAMBDA, cantilever_frequency
from whisker_rc.errors import (
    ArgumentError,
    DivergenceError,
    InvalidGeometryError,
    ResolutionError,
)
from whisker_rc.terrain import ExcitationSignal
from whisker_rc.whisker import (
    Material,
    WhiskerGeometry,
    build_whisker,
    mechanical_energy,
    modal_analysis,
    modal_damping_ratios,
    simulate_response,
    simulate_taps,
    tap_signals,
)


def uniform(n_elements=20, **material):
    geom = WhiskerGeometry.tapered(taper_ratio=1.0, n_elements=n_elements)
    return build_whisker(geom, Material(**material))


def tip_amplitude_frf(whisker, freq_hz, amplitude_m):
    """Steady-state relative tip amplitude from modal superposition."""
    basis = modal_analysis(whisker, whisker.n_dof)
    omega_k = basis.angular_frequencies
    zeta = modal_damping_ratios(whisker, basis)
    gamma = basis.mode_shapes.T @ whisker.mass @ whisker.influence
    w = 2 * np.pi * freq_hz
    # y_b = Y sin(wt): forcing -M iota y_b'' = M iota w^2 Y sin(wt)
    eta = gamma * w**2 * amplitude_m / (omega_k**2 - w**2 + 2j * zeta * omega_k * w)
    tip_dof = whisker.dof_map(whisker.n_nodes)[0]
    return abs(basis.mode_shapes[tip_dof] @ eta)


# ---------------------------------------------------------------- assembly

def test_matrices_symmetric_and_positive_definite(default_whisker):
    for A in (default_whisker.mass, default_whisker.stiffness, default_whisker.damping):
        assert np.allclose(A, A.T, rtol=0, atol=1e-12 * np.abs(A).max())
    assert np.linalg.eigvalsh(default_whisker.mass).min() > 0
    assert np.linalg.eigvalsh(default_whisker.stiffness).min() > 0


@pytest.mark.parametrize("kwargs, err", [
    (dict(length_m=-0.1), InvalidGeometryError),
    (dict(base_radius_m=0.0), InvalidGeometryError),
    (dict(tip_radius_m=2e-3), InvalidGeometryError),
    (dict(length_m=float("nan")), InvalidGeometryError),
    (dict(n_elements=3), ResolutionError),
])
def test_invalid_geometry_rejected(kwargs, err):
    with pytest.raises(err):
        WhiskerGeometry(**kwargs)


def test_invalid_material_rejected():
    with pytest.raises(InvalidGeometryError):
        Material(youngs_modulus_pa=-1.0)
    with pytest.raises(InvalidGeometryError):
        Material(rayleigh_alpha=-0.1)


# ------------------------------------------------------------------ modes

def test_uniform_modes_match_closed_form():
    w = uniform(n_elements=100)
    f = modal_analysis(w, 3).natural_frequencies_hz
    for i in range(3):
        exact = cantilever_frequency(i, w.geometry, w.material)
        assert abs(f[i] - exact) / exact < 0.01


def test_frequency_ratio_matches_closed_form():
    f = modal_analysis(uniform(n_elements=60), 2).natural_frequencies_hz
    expected = (CANTILEVER_LAMBDA[1] / CANTILEVER_LAMBDA[0]) ** 2
    assert abs(f[1] / f[0] - expected) / expected < 0.01


def test_mesh_refinement_converges_monotonically():
    exact = cantilever_frequency(0, uniform().geometry, Material())
    errors = [abs(modal_analysis(uniform(n), 1).natural_frequencies_hz[0] - exact)
              for n in (4, 8, 16, 32)]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(errors, errors[1:]))


def test_doubling_density_scales_frequencies():
    a = modal_analysis(uniform(), 3).natural_frequencies_hz
    b = modal_analysis(uniform(density_kg_m3=2 * 7850), 3).natural_frequencies_hz
    assert np.allclose(b / a, 1 / np.sqrt(2), rtol=1e-6)


def test_full_basis_is_mass_orthonormal(default_whisker):
    basis = modal_analysis(default_whisker, default_whisker.n_dof)
    phi = basis.mode_shapes
    assert np.allclose(phi.T @ default_whisker.mass @ phi, np.eye(default_whisker.n_dof), atol=1e-8)
    assert np.all(np.diff(basis.natural_frequencies_hz) > 0)


def test_taper_shifts_first_mode(default_whisker, uniform_whisker):
    f_tap = modal_analysis(default_whisker, 1).natural_frequencies_hz[0]
    f_uni = modal_analysis(uniform_whisker, 1).natural_frequencies_hz[0]
    assert abs(f_tap - f_uni) / f_uni > 0.05


def test_first_mode_damping_a_few_percent(default_whisker):
    zeta = modal_damping_ratios(default_whisker, modal_analysis(default_whisker, 1))
    assert 0.005 < zeta[0] < 0.05


# --------------------------------------------------------------- dynamics

def test_zero_excitation_gives_zero_response(default_whisker):
    traj = simulate_response(default_whisker, ExcitationSignal(2e-4, np.zeros(500)))
    assert np.all(traj.node_displacements == 0)
    assert np.all(traj.node_velocities == 0)


def test_steady_state_matches_modal_frequency_response(default_whisker):
    f1 = modal_analysis(default_whisker, 1).natural_frequencies_hz[0]
    fs, Y = 20000.0, 1e-5
    t = np.arange(int(0.6 * fs)) / fs
    amps = {}
    for f in (f1, 3 * f1):
        traj = simulate_response(default_whisker, ExcitationSignal(1 / fs, Y * np.sin(2 * np.pi * f * t)))
        tip = tap_signals(traj, [1.0]).samples[:, 0]
        steady = tip[t > 0.4]
        amps[f] = np.sqrt(2) * np.sqrt(np.mean((steady - steady.mean()) ** 2))
        expected = tip_amplitude_frf(default_whisker, f, Y)
        assert abs(amps[f] - expected) / expected < 0.03
    assert amps[f1] > 2 * amps[3 * f1]


def _pulse(n, dt, width_s=2e-3, amplitude=1e-4):
    t = np.arange(n) * dt
    y = np.where(t < width_s, amplitude * np.sin(np.pi * t / width_s) ** 2, 0.0)
    return y, int(np.ceil(width_s / dt)) + 2


def test_energy_never_increases_after_excitation_ends(default_whisker):
    dt = 2e-4
    y, end = _pulse(4000, dt)
    traj = simulate_response(default_whisker, ExcitationSignal(dt, y))
    e = mechanical_energy(default_whisker, traj)[end:]
    assert e[0] > 0
    assert np.all(np.diff(e) <= 1e-12 * e[0])
    assert e[-1] < 0.5 * e[0]


def test_undamped_energy_drift_small():
    w = uniform(rayleigh_alpha=0.0, rayleigh_beta=0.0)
    f_max = modal_analysis(w, w.n_dof).natural_frequencies_hz[-1]
    dt = 1 / (20 * f_max)
    y, end = _pulse(10_000 + 200, dt, width_s=100 * dt, amplitude=1e-7)
    traj = simulate_response(w, ExcitationSignal(dt, y))
    e = mechanical_energy(w, traj)[end:]
    assert len(e) >= 10_000
    assert np.max(np.abs(e - e[0])) / e[0] < 0.005


def test_divergence_names_failing_step(default_whisker):
    y = np.zeros(50)
    y[0] = 1e300
    with np.errstate(all="ignore"), pytest.raises(DivergenceError, match="step 1"):
        simulate_response(default_whisker, ExcitationSignal(1e-6, y))


def test_underflowing_timestep_rejected(default_whisker):
    with pytest.raises(ArgumentError):
        simulate_response(default_whisker, ExcitationSignal(1e-300, np.zeros(10)))


def test_non_finite_excitation_rejected(default_whisker):
    with pytest.raises(ArgumentError):
        simulate_response(default_whisker, ExcitationSignal(2e-4, np.array([0.0, np.nan, 0.0])))


def test_simulation_deterministic(default_whisker, rng):
    y = 1e-5 * rng.standard_normal(1000)
    a = simulate_response(default_whisker, ExcitationSignal(2e-4, y))
    b = simulate_response(default_whisker, ExcitationSignal(2e-4, y))
    assert np.array_equal(a.node_displacements, b.node_displacements)


def test_batched_modal_matches_dense(default_whisker, rng):
    taps = (0.25, 0.5, 0.75, 1.0)
    Y = 1e-5 * rng.standard_normal((3, 2000))
    _, batched = simulate_taps(default_whisker, Y, 2e-4, taps)
    for r in range(3):
        dense = tap_signals(simulate_response(default_whisker, ExcitationSignal(2e-4, Y[r])), taps)
        scale = np.abs(dense.samples).max()
        assert np.max(np.abs(batched[r] - dense.samples)) < 1e-8 * scale


# ------------------------------------------------------------------- taps

def test_single_tip_tap_is_tip_deflection(default_whisker, rng):
    traj = simulate_response(default_whisker, ExcitationSignal(2e-4, 1e-5 * rng.standard_normal(300)))
    sig = tap_signals(traj, [1.0])
    tip = default_whisker.dof_map(default_whisker.n_nodes)[0]
    assert np.array_equal(sig.samples[:, 0], traj.node_displacements[:, tip])


def test_tap_order_sorted_and_validated(default_whisker):
    traj = simulate_response(default_whisker, ExcitationSignal(2e-4, np.zeros(20)))
    assert tap_signals(traj, [0.5, 0.25]).tap_positions == (0.25, 0.5)
    with pytest.raises(ArgumentError):
        tap_signals(traj, [])
    with pytest.raises(ArgumentError):
        tap_signals(traj, [0.0])
    with pytest.raises(ArgumentError):
        tap_signals(traj, [1.2])


def test_resonant_drive_gives_distinct_tap_rms(default_whisker):
    f1 = modal_analysis(default_whisker, 1).natural_frequencies_hz[0]
    t = np.arange(4000) * 2e-4
    traj = simulate_response(default_whisker, ExcitationSignal(2e-4, 1e-5 * np.sin(2 * np.pi * f1 * t)))
    rms = np.sqrt(np.mean(tap_signals(traj, [0.25, 0.5, 1.0]).samples[2000:] ** 2, axis=0))
    assert np.all(rms > 0)
    assert len(np.unique(np.round(rms / rms.max(), 6))) == 3


def test_taps_peak_at_different_frequencies(default_whisker):
    """Under broadband drive, the dominant response frequency differs across taps."""
    fs = 5000.0
    y = 1e-5 * np.random.default_rng(3).standard_normal(int(4 * fs))
    taps = (0.25, 0.5, 0.75, 1.0)
    _, out = simulate_taps(default_whisker, y, 1 / fs, taps)
    peaks = []
    for j in range(len(taps)):
        freqs, psd = sps.welch(out[0, int(0.25 * fs):, j], fs=fs, nperseg=2048)
        peaks.append(freqs[np.argmax(psd)])
    assert len(set(peaks)) > 1
