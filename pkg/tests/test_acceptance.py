"""End-to-end acceptance checks, one test per criterion."""

import math
import time

import numpy as np

from hcflab import algebra as al
from hcflab import cones as cn
from hcflab import geometry as geo
from hcflab import ode
from hcflab import pde
from oracles import basis_sharp, eig_sharp_oracle, structure_constants

CH32 = geo.TorusChart.uniform(2, 32)


def rel(a, b, scale):
    return float(np.abs(a - b).max()) / max(scale, 1e-300)


def test_c01_algebra_oracles(report):
    rng = np.random.default_rng(101)
    t0 = time.time()
    K = {n: structure_constants(n) for n in range(1, 5)}
    worst_sq = worst_sh = 0.0
    for k in range(500):
        n = 1 + k % 4
        H = al.random_hermitian(n, rng)
        g = al.random_metric(n, rng)
        scale = float(np.abs(H).max()) ** 2
        sq = al.square_coord(H)
        worst_sq = max(worst_sq, rel(sq, al.square_spectral(H), max(np.abs(sq).max(), scale)))
        sqg = al.square_coord(H, g)
        worst_sq = max(worst_sq, rel(sqg, al.square_spectral(H, g), max(np.abs(sqg).max(), scale)))
        sh = al.sharp_square(H)
        ref_e = eig_sharp_oracle(H)
        ref_b = 0.5 * basis_sharp(H, H, K[n])
        s = max(np.abs(ref_b).max(), scale)
        worst_sh = max(worst_sh, rel(sh, ref_e, s), rel(sh, ref_b, s))
    dt = time.time() - t0
    ok = worst_sq <= 1e-10 and worst_sh <= 1e-10 and dt <= 60
    report(1, "algebra oracle equivalence", ok,
           f"square rel err {worst_sq:.1e}, sharp rel err {worst_sh:.1e}, {dt:.1f}s")


def test_c02_psd_laws(report):
    rng = np.random.default_rng(102)
    worst = 0.0
    for k in range(500):
        n = 1 + k % 4
        H = al.random_hermitian(n, rng)
        g = al.random_metric(n, rng)
        scale = float(np.abs(H).max()) ** 2
        worst = min(worst, np.linalg.eigvalsh(al.square_coord(H))[0] / scale)
        # with a metric the square is nonnegative for the induced inner product
        worst = min(worst, np.linalg.eigvalsh(cn.to_unitary_frame(al.square_coord(H, g), g))[0] / scale)
        A = [al.random_endo(n, rng) for _ in range(1 + k % 3)]
        gs = sum(np.vdot(a, a).real for a in A)
        worst = min(worst, np.linalg.eigvalsh(al.gram(A, n))[0] / gs)
    report(2, "PSD laws for squares and Grams", worst >= -1e-10, f"min scaled eigenvalue {worst:.1e}")


def test_c03_ode_exactness(report):
    H0 = np.array([[1.0]])
    err = abs(ode.integrate(H0, ode.OdeConfig(dt=1e-4, t_end=0.5)).states[-1][0, 0] - 2.0)
    errs = [abs(ode.integrate(H0, ode.OdeConfig(dt=h, t_end=0.5)).states[-1][0, 0] - 2.0)
            for h in (1e-2, 5e-3, 2.5e-3)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = err <= 1e-6 and np.all(np.abs(orders - 4.0) <= 0.3)
    report(3, "RK4 blow-up solution 1/(1-t)", ok,
           f"error {err:.1e} at dt=1e-4, observed orders {np.round(orders, 2).tolist()}")


def test_c04_ode_invariance(report):
    t0 = time.time()
    worst, lines = math.inf, []
    for spec in cn.standard_cones():
        rep = ode.invariance_experiment(spec, 50, ode.OdeConfig(t_end=0.05, record_every=10),
                                        np.random.default_rng(104), n=2)
        worst = min(worst, rep.worst_relative)
        lines.append(f"{spec.label}:{rep.worst_relative:.1e}")
    dt = time.time() - t0
    ok = worst >= -1e-6 and dt <= 300
    report(4, "ODE invariance for five cones", ok,
           f"worst relative margin {worst:.1e} ({', '.join(lines)}), {dt:.0f}s")


def test_c05_p4_inequality(report):
    rng = np.random.default_rng(105)
    specs = cn.standard_cones()
    worst_total, worst_ad = math.inf, 0.0
    for k in range(200):
        spec = specs[k % len(specs)]
        H, u = cn.boundary_sample(spec, rng, 2)
        v, A = ode.random_drive(2, rng)
        total = ode.p4_check(H, u, v, A, f=spec.f)
        ad = ode.p4_terms(H, u, v, A)["ad"]
        worst_total = min(worst_total, total)
        worst_ad = max(worst_ad, abs(ad))
    ok = worst_total >= -1e-8 and worst_ad <= 1e-8
    report(5, "boundary inequality for the ODE right-hand side", ok,
           f"min pairing {worst_total:.2e}, max |ad term| {worst_ad:.1e}")


def test_c06_geometry_identities(report):
    t0 = time.time()
    G = geo.Geometry(geo.make_metric("nonkahler_mixed", CH32))
    bianchi = max(G.bianchi_residuals())
    R = G.ricci
    tr = lambda S: np.einsum("...ij,...ij->...", G.gi, S)
    trace = max(np.abs(tr(R.S1) - tr(R.S2)).max(), np.abs(tr(R.S3) - tr(R.S4)).max())
    K = geo.Geometry(geo.make_metric("kahler_potential", CH32))
    RK = K.ricci
    collapse = max(np.abs(RK.S1 - S).max() for S in (RK.S2, RK.S3, RK.S4))
    torsion = float(np.abs(K.torsion).max())
    dt = time.time() - t0
    ok = bianchi <= 1e-7 and collapse <= 1e-8 and torsion <= 1e-10 and trace <= 1e-10 and dt <= 120
    report(6, "Bianchi, Kahler collapse and trace identities", ok,
           f"Bianchi {bianchi:.1e}, collapse {collapse:.1e} (|T| {torsion:.1e}), traces {trace:.1e}, {dt:.1f}s")


def test_c07_cohomology_lemma(report):
    m = geo.make_metric("nonkahler_mixed", CH32)
    static = geo.Geometry(m).lee_rho_check()[3]
    rec = pde.evolve(m, pde.PdeConfig(steps=50, monitors=("rho_check",), record_every=1))
    along = max(rec.rho_residual)
    ok = static <= 1e-7 and along <= 1e-7 and len(rec.rho_residual) == 51
    report(7, "rho - rhoT = d alpha", ok, f"initial {static:.1e}, max over 50 steps {along:.1e}")


def test_c08_shat_monotone(report):
    t0 = time.time()
    m = geo.make_metric("nonkahler_mixed", CH32)
    dt = pde.stability_cap(m)
    rec = pde.evolve(m, pde.PdeConfig(dt=dt, steps=200))
    v = pde.shat_monitor(rec, tol=1e-6)
    half = pde.evolve(m, pde.PdeConfig(dt=dt / 2, steps=400))
    r1, r2 = v.max_residual, pde.shat_monitor(half).max_residual
    elapsed = time.time() - t0
    ok = v.worst_drop >= -1e-6 and r1 / r2 >= 3.0 and elapsed <= 600
    report(8, "inf shat nondecreasing and its evolution equation", ok,
           f"worst step change {v.worst_drop:.1e} (inf shat {v.series[0]:.4f} -> {v.series[-1]:.4f}), "
           f"residual {r1:.1e} -> {r2:.1e} (x{r1 / r2:.2f}) at dt/2, {elapsed:.0f}s")


def test_c09_evolution_consistency(report):
    m = geo.make_metric("nonkahler_mixed", CH32)
    dt = pde.stability_cap(m)
    d = [pde.consistency_defect(m, h) for h in (dt, dt / 2)]
    ratio = d[0] / d[1]
    report(9, "centred dOmega/dt against the clean evolution equation", ratio >= 3.5,
           f"defects {d[0]:.2e}, {d[1]:.2e}, ratio {ratio:.2f}")


def test_c10_pde_cone_preservation(report):
    g0 = pde.constructed_griffiths_start(CH32, seed=110)
    cones = (cn.GRIFFITHS, cn.DUAL_NAKANO)
    rec = pde.evolve(g0, pde.PdeConfig(dt=1e-3, steps=100, cones=cones, monitors=()))
    gr, dn = rec.margins[cn.GRIFFITHS.label], rec.margins[cn.DUAL_NAKANO.label]
    initial = gr[0]
    worst = min(gr)
    nested = all(d <= g + 1e-9 for g, d in zip(gr, dn))
    # nesting on a run with curvature of both signs
    ch16 = geo.TorusChart.uniform(2, 16)
    rec2 = pde.evolve(geo.make_metric("nonkahler_mixed", ch16),
                      pde.PdeConfig(steps=100, cones=cones, monitors=(), record_every=10))
    gr2, dn2 = rec2.margins[cn.GRIFFITHS.label], rec2.margins[cn.DUAL_NAKANO.label]
    nested2 = all(d <= g + 1e-9 for g, d in zip(gr2, dn2))
    ok = initial >= 0 and worst >= -1e-5 and nested and nested2 and len(gr) == 101
    report(10, "Griffiths preservation along the flow", ok,
           f"constructed start (constant metric, see notes) worst margin {worst:.1e}; "
           f"nesting held at {len(gr) + len(gr2)} samples, non-flat run Griffiths {gr2[0]:.3f} -> {gr2[-1]:.3f}")
