import numpy as np
import pytest
from numpy.testing import assert_allclose

from analysis.cqed_analytics import gaussian_whichpath_amplitudes
from core.dynamics import (CascadeNode, Envelope, IntegratorConfig, OpenSystem, TimeDependentOp, Waveform,
                           cascade, evolve, floor_convergence, input_coupling, io_mode_network, mode_amplitudes,
                           output_coupling)
from core.exceptions import UsageError
from core.qcore import PAULI_X, PAULI_Z, DensityOp, LinOp, PureState, destroy, embed, ket, partial_trace, transition


def empty_cavity(levels: int = 2) -> OpenSystem:
    return OpenSystem(TimeDependentOp.zero((levels,)), (), (levels,))


def jaynes_cummings(g: float) -> OpenSystem:
    dims = (2, 2)
    sigma = embed(transition(2, 0, 1), 0, dims)
    a = embed(destroy(2), 1, dims)
    return OpenSystem(TimeDependentOp(g * (sigma.dag() @ a + sigma @ a.dag())), (), dims)


def test_envelope_interpolates_and_vanishes_outside():
    grid = np.linspace(0.0, 1.0, 201)
    env = Envelope.from_function(lambda t: np.sin(2 * np.pi * t), grid)
    assert env(0.123) == pytest.approx(np.sin(2 * np.pi * 0.123), abs=1e-6)
    assert env(-0.1) == 0
    assert env(1.1) == 0


def test_envelope_does_not_smooth_across_breakpoints():
    grid = np.linspace(0.0, 1.0, 101)
    env = Envelope(grid, np.where(grid < 0.5, 1.0, 3.0), breakpoints=[0.5])
    assert env(0.49) == pytest.approx(1.0)
    assert env(0.51) == pytest.approx(3.0)
    assert env.breakpoints == (0.5,)


def test_envelope_requires_uniform_grid():
    with pytest.raises(UsageError):
        Envelope([0.0, 0.1, 0.3], [1, 1, 1])


def test_waveform_normalization_and_head_tail():
    grid = np.linspace(-5, 5, 1001)
    with pytest.raises(UsageError):
        Waveform(grid, np.exp(-grid ** 2))
    u = Waveform.normalized(grid, np.exp(-grid ** 2))
    assert_allclose(u.head() + u.tail(), 1.0, atol=1e-12)
    assert u.overlap(u) == pytest.approx(1.0)


def test_vacuum_rabi_oscillation_matches_cosine():
    g = 1.0
    system = jaynes_cummings(g)
    times = np.linspace(0.0, 2 * np.pi / g, 200)
    traj = evolve(system, ket((2, 2), (1, 0)).dm(), times)
    sigma = embed(transition(2, 0, 1), 0, (2, 2))
    excited = np.real(traj.expect(sigma.dag() @ sigma))
    assert_allclose(excited, np.cos(g * times) ** 2, atol=1e-6)
    assert len(traj.states) == times.size


def test_cavity_decay_is_exponential():
    kappa = 2.0
    a = LinOp((3,), destroy(3))
    system = OpenSystem(TimeDependentOp.zero((3,)), (TimeDependentOp(a * float(np.sqrt(kappa))),), (3,))
    times = np.linspace(0.0, 2.0, 21)
    traj = evolve(system, ket((3,), (1,)).dm(), times)
    photons = np.real(traj.expect(a.dag() @ a))
    assert_allclose(photons, np.exp(-kappa * times), atol=1e-6)
    assert_allclose([s.trace() for s in traj.states], 1.0, atol=1e-9)


def test_kick_is_applied_exactly_at_its_time():
    system = OpenSystem(TimeDependentOp.zero((2,)), (), (2,))
    times = np.array([0.0, 0.25, 0.5, 1.0])
    flip = LinOp((2,), PAULI_X)
    traj = evolve(system, ket((2,), (0,)).dm(), times, kicks={0.5: flip})
    populations = [np.real(s.entries[1, 1]) for s in traj.states]
    assert_allclose(populations, [0.0, 0.0, 1.0, 1.0], atol=1e-12)


def test_evolve_validates_grid_and_dims():
    system = empty_cavity()
    with pytest.raises(UsageError):
        evolve(system, ket((2,), (0,)).dm(), [0.0, 0.0, 1.0])
    with pytest.raises(UsageError):
        evolve(system, ket((3,), (0,)).dm(), [0.0, 1.0])
    with pytest.raises(UsageError):
        IntegratorConfig(rtol=0.0)


def test_cascade_transfers_photon_downstream():
    kappa = 1.0
    nodes = [CascadeNode(empty_cavity(), 0, kappa), CascadeNode(empty_cavity(), 0, kappa)]
    system = cascade(nodes)
    assert system.dims == (2, 2)
    times = np.linspace(0.0, 4.0, 41)
    traj = evolve(system, ket((2, 2), (1, 0)).dm(), times)
    n1 = np.real(traj.expect(embed(np.diag([0, 1]), 0, (2, 2))))
    n2 = np.real(traj.expect(embed(np.diag([0, 1]), 1, (2, 2))))
    assert_allclose(n1, np.exp(-kappa * times), atol=1e-6)
    assert_allclose(n2, (kappa * times) ** 2 * np.exp(-kappa * times), atol=1e-6)


def test_cascade_requires_nodes():
    with pytest.raises(UsageError):
        cascade([])


def test_couplings_stay_finite_at_the_edges():
    grid = np.linspace(0.0, 10.0, 501)
    u = Waveform.normalized(grid, np.exp(-(grid - 5.0) ** 2))
    lam_u = input_coupling(u)
    lam_v = output_coupling(u)
    assert np.all(np.isfinite(lam_u.samples))
    assert np.all(np.isfinite(lam_v.samples))
    assert lam_u(5.0) == pytest.approx(u.samples[250] / np.sqrt(u.tail()[250]), rel=1e-4)
    assert lam_v(5.0) == pytest.approx(-u.samples[250] / np.sqrt(u.head()[250]), rel=1e-4)


def test_output_couplings_alternate_sign():
    grid = np.linspace(0.0, 10.0, 501)
    v = Waveform.normalized(grid, np.exp(-grid / 2) * np.exp(0.3j * grid))
    first, second = output_coupling(v, index=1), output_coupling(v, index=2)
    for t in (0.0, 1e-3, 2.5, 10.0):
        assert first(t) == pytest.approx(-second(t))
    # la cattura usa v, non il suo coniugato
    assert np.angle(-first(2.5)) == pytest.approx(np.angle(v.envelope()(2.5)), abs=1e-9)


def test_io_network_rejects_bad_inputs():
    grid = np.linspace(0.0, 1.0, 11)
    u = Waveform.normalized(grid, np.ones(11))
    with pytest.raises(UsageError):
        io_mode_network(u, [], 1.0, 0.0, empty_cavity(), 0)
    with pytest.raises(UsageError):
        io_mode_network(u, [u], -1.0, 0.0, empty_cavity(), 0)


def test_io_network_layout():
    kappa = 1.0
    grid = np.linspace(0.0, 12.0, 1201)
    v = Waveform.normalized(grid, np.exp(-kappa * grid / 2))
    u = Waveform.normalized(grid, np.exp(-(grid - 6.0) ** 2))
    system, meta = io_mode_network(u, [v], kappa, 0.0, empty_cavity(), 0)
    assert system.dims == (2, 3, 3)
    assert len(system.collapse) == 1
    assert meta["lambda_floor"] > 0
    two_outputs, _ = io_mode_network(u, [v, v], kappa, 0.5, empty_cavity(), 0, n_levels=2)
    assert two_outputs.dims == (2, 2, 2, 2)
    assert len(two_outputs.collapse) == 2


# --- Rete di modi virtuali: cattura e ampiezze stazionarie ---

KAPPA = 1.0
TAU = 4.0
PULSE_GRID = np.linspace(0.0, 64.0, 1281)
STEP_CFG = IntegratorConfig(max_step=0.5)


def gaussian_input() -> Waveform:
    return Waveform.normalized(PULSE_GRID, np.exp(-(PULSE_GRID - 5 * TAU) ** 2 / (2 * TAU ** 2)))


def whichpath_network(floor: float = 1e-8, core: OpenSystem = None, n_levels: int = 2):
    u = gaussian_input()
    reflected = u
    transmitted = Waveform(u.grid, -u.samples)
    core = core or empty_cavity(n_levels)
    return io_mode_network(u, [reflected, transmitted], KAPPA / 2, KAPPA / 2, core, 0,
                           floor=floor, n_levels=n_levels)


def half_photon_input() -> DensityOp:
    vacuum, one = np.array([1.0, 0.0]), np.array([1.0, 1.0]) / np.sqrt(2)
    amplitudes = np.kron(np.kron(np.kron(vacuum, one), vacuum), vacuum)
    return PureState((2, 2, 2, 2), amplitudes).dm()


@pytest.mark.parametrize("port", [1, 2])
def test_emitted_photon_is_captured_by_matched_output(port):
    grid = np.linspace(0.0, 30.0, 2049)
    v = Waveform.normalized(grid, np.sqrt(KAPPA) * np.exp(-KAPPA * grid / 2))
    u = Waveform.normalized(grid, np.exp(-(grid - 15.0) ** 2))
    kappa1, kappa2 = (KAPPA, 0.0) if port == 1 else (0.0, KAPPA)
    system, meta = io_mode_network(u, [v, v], kappa1, kappa2, empty_cavity(), 0, n_levels=2)
    final = evolve(system, ket(system.dims, (1, 0, 0, 0)).dm(), [0.0, 30.0], STEP_CFG).final
    captured = np.real(final.expect(embed(np.diag([0.0, 1.0]), 1 + port, system.dims)))
    left = np.real(final.expect(embed(np.diag([0.0, 1.0]), 0, system.dims)))
    assert captured > 0.9995
    assert left < 1e-6
    assert meta["capture_signs"] == [1, -1]


def test_transmitting_qubit_sends_pulse_to_second_port():
    system, meta = whichpath_network()
    final = evolve(system, half_photon_input(), [0.0, PULSE_GRID[-1]], STEP_CFG).final
    amp_u, amp_v1, amp_v2 = mode_amplitudes(final, 1)
    alpha10, alpha20 = gaussian_whichpath_amplitudes(0.5, KAPPA, TAU)
    assert amp_v1 == pytest.approx(alpha10, abs=1e-4)
    assert amp_v2 == pytest.approx(alpha20, abs=1e-4)
    assert abs(amp_u) < 1e-4
    assert meta["n_virtual"] == 3


def test_matched_longitudinal_drive_reflects_the_pulse():
    alpha0 = 0.1
    u = gaussian_input()
    a = destroy(3)
    drive = Envelope(u.grid, np.sqrt(KAPPA / 2) * alpha0 * u.samples)
    hamiltonian = TimeDependentOp(LinOp((3,), np.zeros((3, 3))),
                                  ((LinOp((3,), 1j * a.conj().T), drive), (LinOp((3,), -1j * a), drive.conj())))
    core = OpenSystem(hamiltonian, (), (3,))
    system, _ = whichpath_network(core=core, n_levels=3)

    coherent = np.array([1.0, alpha0, alpha0 ** 2 / np.sqrt(2)])
    coherent /= np.linalg.norm(coherent)
    vacuum = np.array([1.0, 0.0, 0.0])
    rho0 = PureState(system.dims, np.kron(np.kron(np.kron(vacuum, coherent), vacuum), vacuum)).dm()
    start = mode_amplitudes(rho0, 1)[0]
    final = evolve(system, rho0, [0.0, PULSE_GRID[-1]], STEP_CFG).final
    amp_u, amp_v1, amp_v2 = mode_amplitudes(final, 1)
    assert amp_v1 == pytest.approx(start, abs=1e-4)
    assert abs(amp_v2) < 1e-4
    assert abs(mode_amplitudes(final, 0)[0]) < 1e-4


def test_vacuum_input_leaves_outputs_empty():
    system, _ = whichpath_network()
    final = evolve(system, ket(system.dims, (0, 0, 0, 0)).dm(), [0.0, PULSE_GRID[-1]], STEP_CFG).final
    assert_allclose(mode_amplitudes(final, 0), 0.0, atol=1e-12)


def test_output_amplitudes_converge_in_the_floor():
    report = floor_convergence(lambda floor: whichpath_network(floor), half_photon_input(),
                               [0.0, PULSE_GRID[-1]], floors=(1e-6, 1e-8), cfg=STEP_CFG)
    assert report["converged"]
    assert report["change"] < 1e-4
    assert len(report["amplitudes"]) == 2


def test_whichpath_closed_form_approaches_its_expansion():
    for kappa_tau in (20.0, 40.0):
        _, alpha20 = gaussian_whichpath_amplitudes(1.0, kappa_tau, 1.0)
        expansion = -(1 - 2 / kappa_tau ** 2 + 12 / kappa_tau ** 4)
        assert alpha20 == pytest.approx(expansion, abs=200 / kappa_tau ** 6)


# --- Cascata: somma diretta e unidirezionalita' ---

TIGHT_CFG = IntegratorConfig(rtol=1e-10, atol=1e-12)


def dephased_qubit() -> OpenSystem:
    return OpenSystem(TimeDependentOp(LinOp((2,), 0.7 * PAULI_X)),
                      (TimeDependentOp(LinOp((2,), np.sqrt(0.1) * PAULI_Z)),), (2,))


def lossy_cavity() -> OpenSystem:
    a = destroy(3)
    return OpenSystem(TimeDependentOp(LinOp((3,), 0.3 * a.conj().T @ a)),
                      (TimeDependentOp(LinOp((3,), np.sqrt(0.2) * a)),), (3,))


def test_cascade_without_coupling_is_a_direct_sum():
    system = cascade([CascadeNode(dephased_qubit(), 0, 0.0), CascadeNode(lossy_cavity(), 0, 0.0)])
    expected = np.kron(0.7 * PAULI_X, np.eye(3)) + np.kron(np.eye(2), 0.3 * np.diag([0.0, 1.0, 2.0]))
    assert_allclose(system.hamiltonian.matrix(0.3), expected, atol=1e-10)
    assert len(system.collapse) == 2

    times = [0.0, 3.0]
    qubit0, cavity0 = ket((2,), (0,)).dm(), ket((3,), (1,)).dm()
    joint = evolve(system, DensityOp((2, 3), np.kron(qubit0.entries, cavity0.entries)), times, TIGHT_CFG).final
    qubit = evolve(dephased_qubit(), qubit0, times, TIGHT_CFG).final
    cavity = evolve(lossy_cavity(), cavity0, times, TIGHT_CFG).final
    assert_allclose(joint.entries, np.kron(qubit.entries, cavity.entries), atol=1e-8)


def test_upstream_ignores_downstream_state():
    nodes = [CascadeNode(empty_cavity(2), 0, 1.0), CascadeNode(empty_cavity(3), 0, 1.0)]
    system = cascade(nodes)
    times = np.linspace(0.0, 3.0, 7)
    upstream = np.array([0.6, 0.8])
    reduced = []
    for downstream in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 1.0]) / np.sqrt(2)):
        psi = PureState((2, 3), np.kron(upstream, downstream))
        traj = evolve(system, psi.dm(), times, TIGHT_CFG)
        reduced.append([partial_trace(s, [0]).entries for s in traj.states])
    assert_allclose(reduced[0], reduced[1], atol=1e-8)


def test_halving_rtol_converges(rng):
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    system = OpenSystem(TimeDependentOp(LinOp((3,), 0.5 * (m + m.conj().T))),
                        (TimeDependentOp(LinOp((3,), np.sqrt(0.3) * np.diag([1.0, -1.0, 0.0]))),
                         TimeDependentOp(LinOp((3,), np.sqrt(0.1) * destroy(3)))), (3,))
    rho0 = ket((3,), (2,)).dm()
    rtol = 1e-7
    coarse = evolve(system, rho0, [0.0, 4.0], IntegratorConfig(rtol=rtol, atol=1e-12)).final
    fine = evolve(system, rho0, [0.0, 4.0], IntegratorConfig(rtol=rtol / 2, atol=1e-12)).final
    assert np.max(np.abs(np.diag(coarse.entries - fine.entries))) < 10 * rtol
