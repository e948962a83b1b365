import numpy as np
import pytest

from hcflab import algebra as al
from hcflab import cones as c
from hcflab import ode


def rng_for(seed):
    return np.random.default_rng(seed)


def test_phi_examples():
    assert np.all(ode.phi_rhs(np.zeros((4, 4))) == 0)
    lam, a = 1.7, 0.3 - 0.4j
    out = ode.phi_rhs(np.array([[lam]]), v=np.array([[2.0j]]), A=[np.array([[a]])])
    assert out[0, 0] == pytest.approx(lam**2 + abs(a) ** 2)


def test_phi_is_sum_of_parts():
    rng = rng_for(0)
    H = al.random_hermitian(3, rng)
    v, A = ode.random_drive(3, rng)
    ref = al.square_spectral(H) + 0.5 * al.sharp(H, H) + al.ad_action(v, H) + al.gram(A)
    assert np.abs(ode.phi_rhs(H, v, A) - ref).max() < 1e-11


def test_phi_dimension_mismatch():
    with pytest.raises(al.DimensionError):
        ode.phi_rhs(np.eye(4), v=np.eye(3))


def test_phi_unitary_equivariance():
    rng = rng_for(1)
    n = 2
    H = al.random_hermitian(n, rng)
    v, A = ode.random_drive(n, rng)
    U = np.linalg.qr(al.random_endo(n, rng))[0]
    lhs = ode.phi_rhs(al.conjugate_operator(H, U), al.conjugate_endo(v, U), [al.conjugate_endo(a, U) for a in A])
    rhs = al.conjugate_operator(ode.phi_rhs(H, v, A), U)
    assert np.abs(lhs - rhs).max() < 1e-11


def test_zero_trajectory():
    traj = ode.integrate(np.zeros((4, 4)), ode.OdeConfig(t_end=0.01, dt=1e-3))
    assert all(np.all(S == 0) for S in traj.states)
    assert np.all(np.diff(traj.times) > 0)


def test_blowup_solution_and_order():
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        traj = ode.integrate(np.array([[1.0]]), ode.OdeConfig(dt=dt, t_end=0.5))
        errs.append(abs(traj.states[-1][0, 0] - 2.0))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 4) < 0.3)
    traj = ode.integrate(np.array([[1.0]]), ode.OdeConfig(dt=1e-4, t_end=0.5))
    assert abs(traj.states[-1][0, 0] - 2.0) < 1e-6


def test_blowup_detected():
    traj = ode.integrate(np.array([[1.0]]), ode.OdeConfig(dt=1e-3, t_end=2.0, blowup_factor=1e3))
    assert traj.blew_up and traj.times[-1] < 1.0


def test_rk45_matches_closed_form():
    traj = ode.integrate(np.array([[1.0]]), ode.OdeConfig(integrator="rk45", t_end=0.5, dt=0.05))
    assert abs(traj.states[-1][0, 0] - 2.0) < 1e-8
    traj = ode.integrate(np.array([[1.0]]), ode.OdeConfig(integrator="rk45", t_end=2.0, dt=0.05))
    assert traj.blew_up


def test_time_dependent_sources():
    v_table = [(0.0, np.zeros((2, 2))), (0.01, np.diag([1.0, -1.0]))]
    cfg = ode.OdeConfig(v=v_table, A=lambda t: [np.eye(2) * t], t_end=0.02, dt=1e-3)
    traj = ode.integrate(al.random_hermitian(2, rng_for(2)), cfg)
    assert len(traj.states) == 21
    assert traj.max_hermitian_drift <= 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        ode.OdeConfig(dt=-1)
    with pytest.raises(ValueError):
        ode.OdeConfig(integrator="euler")
    with pytest.raises(ValueError):
        ode.OdeConfig(rtol=0)


def test_p4_examples():
    rng = rng_for(3)
    H, u = c.boundary_sample(c.DUAL_NAKANO, rng, 2)
    assert ode.p4_check(H, u) >= -1e-8
    u = al.random_endo(2, rng)
    assert ode.p4_check(np.zeros((4, 4)), u, al.random_endo(2, rng)) == 0
    with pytest.raises(ValueError):
        ode.p4_check(np.eye(4), u)


def test_p4_random_drives_on_fixed_pair():
    rng = rng_for(4)
    H, u = c.boundary_sample(c.GRIFFITHS, rng, 2)
    for _ in range(100):
        v, A = ode.random_drive(2, rng)
        terms = ode.p4_terms(H, u, v, A)
        assert terms["total"] >= -1e-8
        assert abs(terms["ad"]) <= 1e-8


def test_identity_pairing_nondecreasing():
    rng = rng_for(5)
    spec = c.second_scalar_bound(0.0)
    H0, _ = c.boundary_sample(spec, rng, 2)
    v, A = ode.random_drive(2, rng)
    traj = ode.integrate(H0, ode.OdeConfig(v=v, A=A, t_end=0.05))
    vals = [al.evaluate(H, np.eye(2)) for H in traj.states]
    assert np.all(np.diff(vals) >= -1e-12)


def test_boundary_contact_forward_difference():
    rng = rng_for(6)
    for spec in (c.DUAL_NAKANO, c.GRIFFITHS):
        H0, _ = c.boundary_sample(spec, rng, 2)
        v, A = ode.random_drive(2, rng)
        traj = ode.integrate(H0, ode.OdeConfig(v=v, A=A, t_end=0.002, dt=1e-4))
        m = [c.margin(H, spec).margin for H in traj.states[:3]]
        assert abs(m[0]) < 1e-8
        assert m[1] - m[0] >= -1e-7 * al.operator_norm(H0) ** 2


def test_invariance_experiment_small(tmp_path):
    rep = ode.invariance_experiment(c.dual_m(2), 2, ode.OdeConfig(t_end=0.01, record_every=5), rng_for(7), n=3)
    assert rep.worst_relative >= -1e-6 and rep.first_violation is None
    path = tmp_path / "traj.csv"
    ode.write_trajectory_csv(path, rep.rows)
    assert path.read_text().splitlines()[0] == "sample_id,t,margin,norm"


def test_zero_initial_margins():
    traj = ode.integrate(np.zeros((4, 4)), ode.OdeConfig(t_end=0.01))
    assert all(c.margin(H, c.GRIFFITHS).margin == 0 for H in traj.states)
