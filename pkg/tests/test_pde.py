import numpy as np
import pytest

from hcflab import algebra as al
from hcflab import cones as cn
from hcflab import geometry as geo
from hcflab import pde

CH16 = geo.TorusChart.uniform(2, 16)
CH32 = geo.TorusChart.uniform(2, 32)


def metric(name, chart=CH32, **kw):
    return geo.make_metric(name, chart, **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        pde.PdeConfig(steps=3, time_integrator="leapfrog")
    with pytest.raises(ValueError):
        pde.PdeConfig()
    with pytest.raises(ValueError):
        pde.PdeConfig(steps=3, monitors=("bogus",))
    with pytest.raises(ValueError):
        pde.PdeConfig(t_end=-1.0)
    m = metric("nonkahler_mixed", CH16)
    with pytest.raises(ValueError):
        pde.evolve(m, pde.PdeConfig(steps=1, dt=10 * pde.stability_cap(m)))


def test_hcf_rhs_flat_and_kahler():
    assert np.abs(pde.hcf_rhs(geo.preset_flat(CH32))).max() == 0
    m = metric("kahler_potential")
    G = geo.Geometry(m)
    assert np.abs(pde.hcf_rhs(m) + G.ricci.S2).max() <= 1e-10


def test_hcf_rhs_recontraction():
    m = metric("nonkahler_mixed")
    G = geo.Geometry(m)
    O, gi, T = G.curvature, G.gi, G.torsion
    S2 = np.einsum("...mnij,...mn->...ij", O, gi)
    Tl = np.einsum("...kmp,...kj->...mpj", T, G.g)
    Q = 0.5 * np.einsum("...mn,...ps,...mpj,...nsi->...ij", gi, gi, Tl, np.conj(Tl))
    out = pde.hcf_rhs(m)
    assert np.abs(out - (-S2 - Q)).max() <= 1e-10
    assert np.abs(out - al.dagger(out)).max() <= 1e-12


def test_flat_is_stationary():
    g0 = geo.preset_flat(CH32, np.array([[1.2, 0.3j], [-0.3j, 0.9]]))
    rec = pde.evolve(g0, pde.PdeConfig(steps=5, dt=1e-3, cones=(cn.GRIFFITHS,)))
    assert all(np.abs(s - g0.g).max() == 0 for s in rec.snapshots)
    assert rec.shat_inf == [0.0] * 6
    assert rec.margins[cn.GRIFFITHS.label] == [0.0] * 6


def test_shat_monotone_short_run():
    rec = pde.evolve(metric("nonkahler_mixed"), pde.PdeConfig(steps=20))
    v = pde.shat_monitor(rec)
    assert v.monotone and v.worst_drop >= -1e-6
    assert len(rec.shat_residual) == 19
    assert np.all(np.diff(rec.times) > 0)
    for g in rec.snapshots:
        assert np.linalg.eigvalsh(g)[..., 0].min() > 0


def test_shat_residual_refines():
    m = metric("nonkahler_mixed")
    dt = pde.stability_cap(m)
    res = []
    for h in (dt, dt / 2):
        rec = pde.evolve(m, pde.PdeConfig(dt=h, t_end=8 * dt))
        res.append(max(rec.shat_residual))
    assert res[0] / res[1] >= 3.0


def test_kahler_shat_equals_sc():
    rec = pde.evolve(metric("kahler_potential"), pde.PdeConfig(steps=4))
    for g in rec.snapshots:
        R = geo.Geometry(geo.MetricField(CH32, g)).ricci
        assert np.abs(R.shat - R.sc).max() < 1e-8
    assert pde.shat_monitor(rec).monotone


@pytest.mark.parametrize("integrator,order", [("euler", 1), ("rk4", 4)])
def test_time_self_convergence(integrator, order):
    m = metric("nonkahler_mixed", CH16)
    dt = pde.stability_cap(m) / 2
    T = 8 * dt
    finals = []
    for h in (dt, dt / 2, dt / 4):
        rec = pde.evolve(m, pde.PdeConfig(dt=h, t_end=T, time_integrator=integrator, monitors=()))
        finals.append(rec.snapshots[-1])
    d1 = np.abs(finals[0] - finals[1]).max()
    d2 = np.abs(finals[1] - finals[2]).max()
    assert d1 / d2 >= 2**order * 0.85


def test_curvature_rhs_terms_oracles():
    m = metric("nonkahler_mixed")
    G = geo.Geometry(m)
    terms = G.curvature_rhs_terms()
    H = G.operator
    assert np.abs(terms["square"] - al.square_spectral(H, G.g)).max() < 1e-10
    assert np.abs(terms["sharp"] - 0.5 * al.sharp(H, H)).max() < 1e-10
    assert np.linalg.eigvalsh(terms["dnablaT"]).min() >= -1e-11
    # every term vanishes on a flat torus
    flat = geo.Geometry(geo.preset_flat(CH32))
    assert all(np.abs(t).max() == 0 for t in flat.curvature_rhs_terms().values())
    total = pde.curvature_rhs_clear(m)
    assert np.abs(total - sum(terms.values())).max() < 1e-12


def test_curvature_rhs_matches_directional_derivative():
    m = metric("nonkahler_mixed", CH32)
    h = pde.hcf_rhs(m)
    op = lambda g: geo.Geometry(geo.MetricField(CH32, g)).operator
    errs = []
    for eps in (1e-4, 5e-5):
        fd = (op(m.g + eps * h) - op(m.g - eps * h)) / (2 * eps)
        errs.append(np.abs(fd - pde.curvature_rhs_clear(m)).max())
    assert errs[0] < 1e-5 and errs[0] / errs[1] >= 3.5


def test_consistency_along_flow():
    m = metric("nonkahler_mixed", CH32)
    dt = pde.stability_cap(m)
    d = [pde.consistency_defect(m, h) for h in (dt, dt / 2, dt / 4)]
    assert d[0] / d[1] >= 3.5 and d[1] / d[2] >= 3.5


def test_rho_check_along_flow():
    rec = pde.evolve(metric("nonkahler_mixed", CH16), pde.PdeConfig(steps=10, monitors=("rho_check",), record_every=5))
    assert len(rec.rho_residual) == 3 and max(rec.rho_residual) <= 1e-7


def test_positivity_and_blowup_guards():
    cfg = pde.PdeConfig(steps=1)
    bad = np.diag([1.0, -1e-3]).reshape(1, 1, 1, 1, 2, 2).astype(complex)
    with pytest.raises(pde.PositivityLoss):
        pde._check(bad, CH16, cfg, 1.0, 0.1)
    with pytest.raises(pde.NumericalBlowup):
        pde._check(bad * np.nan, CH16, cfg, 1.0, 0.1)
    with pytest.raises(geo.MetricError):
        pde.evolve(geo.MetricField(CH16, bad), cfg)


def test_cone_monitor_and_nesting():
    rec = pde.evolve(metric("nonkahler_mixed", CH16), pde.PdeConfig(steps=4, record_every=2, monitors=()))
    out = pde.pointwise_cone_monitor(rec, [cn.GRIFFITHS, cn.DUAL_NAKANO])
    for gr, dn in zip(out[cn.GRIFFITHS.label], out[cn.DUAL_NAKANO.label]):
        assert dn <= gr + 1e-9
    assert len(out[cn.GRIFFITHS.label]) == 3


def test_constructed_start_is_griffiths_nonnegative():
    m = pde.constructed_griffiths_start(CH16, seed=3)
    G = geo.Geometry(m)
    assert abs(m.g[..., 0, 1]).max() > 0
    assert pde.worst_margin(G, cn.GRIFFITHS) >= 0


def test_export(tmp_path):
    rec = pde.evolve(metric("nonkahler_mixed", CH16),
                     pde.PdeConfig(steps=3, monitors=("shat_inf", "rho_check"), cones=(cn.GRIFFITHS,)))
    pde.write_record_csv(tmp_path / "r.csv", rec)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "t,monitor,value"
    kinds = {ln.split(",")[1] for ln in lines[1:]}
    assert {"shat_inf", "shat_residual", "rho_residual", f"margin:{cn.GRIFFITHS.label}"} <= kinds
    pde.write_svg(tmp_path / "p.svg", rec.times, {"shat_inf": rec.shat_inf}, title="inf shat")
    assert (tmp_path / "p.svg").read_text().startswith("<svg")
