"""Full-scale acceptance runs on the 400x400 fine mesh (about 15 minutes on one core).

Each criterion records one PASS/FAIL line, printed in the terminal summary.
"""
import numpy as np
import pytest

from signcem import coeff
from signcem.auxspace import build_aux_space, element_matrices, solve_local_eigen
from signcem.cem import decay_study
from signcem.experiments import (ExperimentConfig, Problem, load_or_build_aux, qfem_baseline,
                                 run, run_point, strip_timing)
from signcem.grid import build_hierarchy

pytestmark = pytest.mark.acceptance

FINE = 400
COARSE = [10, 20, 40, 80]
SQUARE10_REF = {(40, 3): 1.753e-03, (40, 4): 1.376e-04, (80, 3): 3.855e-03, (80, 4): 1.941e-04}
SQUARE20_REF_80_4 = 2.862e-04

# energy differences phi^m - phi^8 for the marked element (ex, ey) = (1, 1),
# frozen from the first derivation run
DECAY_FROZEN = {
    0: [3.830638e-02, 1.741517e-03, 9.208588e-05, 5.032722e-06, 3.663541e-07, 3.027944e-08, 2.762696e-09],
    1: [3.748431e-02, 2.352138e-03, 1.759797e-04, 1.437887e-05, 1.238936e-06, 1.100456e-07, 9.847194e-09],
    2: [3.821563e-02, 2.645259e-03, 2.170871e-04, 1.882718e-05, 1.699078e-06, 1.552656e-07, 1.422816e-08],
}

GALERKIN = []  # (label, ratio) from every multiscale point computed here
AUX = {}  # (label, coarse_n) -> AuxSpace


def _cfg(tmp, name, **kw):
    d = dict(fine_n=FINE, coarse_n=COARSE, layers=[3, 4], eigs=3, dump_fields=False,
             out=str(tmp / name))
    d.update(kw)
    return ExperimentConfig.from_dict(d)


def _points(label, cfg, points):
    prob = Problem(cfg)
    out = {}
    for nc, m in points:
        g = build_hierarchy(FINE, nc)
        aux = load_or_build_aux(cfg, g, prob.field, cfg.eigs, n_eig=4)
        AUX[(label, nc)] = aux
        res = run_point(prob, g, aux, m, check_galerkin=True)
        GALERKIN.append((f"{label} H=1/{nc} m={m}", res.galerkin_ratio))
        out[(nc, m)] = res
        del res.u
    return prob, out


@pytest.fixture(scope="module")
def tmp(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def square10(tmp):
    cfg = _cfg(tmp, "square10", model="square", n_cells=10, sigma_minus=0.1, layers=[1, 2, 3, 4])
    status = run(cfg)
    # warm cache: bases are read back, Galerkin ratios are recomputed
    _, pts = _points("square10", cfg, sorted(SQUARE10_REF))
    return cfg, status, pts


@pytest.fixture(scope="module")
def square20(tmp):
    cfg = _cfg(tmp, "square20", model="square", n_cells=20, sigma_minus=0.1, coarse_n=[80])
    return _points("square20", cfg, [(80, 4)])[1]


@pytest.fixture(scope="module")
def flat2(tmp):
    cfg = _cfg(tmp, "flat2", model="flat", gamma=0.49, sigma_plus=1.0, sigma_minus=1.01,
               source={"kind": "exact"})
    prob, pts = _points("flat-II", cfg, [(80, 3), (80, 4)])
    return pts, qfem_baseline(cfg, prob)


@pytest.fixture(scope="module")
def cross(tmp):
    cfg = _cfg(tmp, "cross", model="cross", n_cells=10, sigma_plus=1.0, sigma_minus=1e3)
    prob, pts = _points("cross", cfg, [(40, 3), (80, 3)])
    return pts, qfem_baseline(cfg, prob)


def _fields():
    g = build_hierarchy(FINE, 10)
    return {
        "square10": coeff.periodic_square(g, 10, 1.0, 0.1),
        "square20": coeff.periodic_square(g, 20, 1.0, 0.1),
        "cross": coeff.periodic_cross(g, 10, 1.0, 1e3),
        "flat-I": coeff.flat_interface(g, 0.5, 1.01, 1.0)[0],
        "flat-II": coeff.flat_interface(g, 0.49, 1.0, 1.01)[0],
        "random": coeff.random_inclusions(g, 1, 60, (8, 24), 1.0, 1e-3),
    }


def test_criterion_1_square10(square10, criterion):
    cfg, status, pts = square10
    rows = strip_timing(f"{cfg.out}/errors.csv")
    got = {k: pts[k].rel_energy for k in SQUARE10_REF}
    ratios = {k: got[k] / SQUARE10_REF[k] for k in SQUARE10_REF}
    ok = status == 0 and len(rows) == 17 and all(1 / 3 <= r <= 3 for r in ratios.values())
    detail = " ".join(f"(1/{nc},m={m}) {got[(nc, m)]:.3e}/{SQUARE10_REF[(nc, m)]:.3e}" for nc, m in sorted(SQUARE10_REF))
    criterion("1 square 10x10 sweep within factor 3", ok, detail)
    assert ok


def test_criterion_2_square20(square20, criterion):
    e = square20[(80, 4)].rel_energy
    ok = 1 / 3 <= e / SQUARE20_REF_80_4 <= 3
    criterion("2 square 20x20 (1/80, m=4)", ok, f"{e:.3e} vs {SQUARE20_REF_80_4:.3e}")
    assert ok


def test_criterion_3_flat_case_two(flat2, criterion):
    pts, base = flat2
    e3, e4 = pts[(80, 3)].rel_energy, pts[(80, 4)].rel_energy
    b = {float(r["H"]): float(r["rel_energy"]) for r in base}
    stall = b[1 / 80] / b[1 / 10]
    ok = e3 <= 0.03 and e4 <= 0.005 and 0.5 <= stall <= 2.0
    criterion("3 flat Case II", ok,
              f"m=3 {e3:.3e}, m=4 {e4:.3e}, baseline 1/80 vs 1/10 ratio {stall:.3f}")
    assert ok


def test_criterion_4_flat_case_one_baseline(tmp, criterion):
    slopes = []
    for sp_, sm in ((1.01, 1.0), (1.0, 1.01)):
        cfg = _cfg(tmp, f"flat1-{sp_}", model="flat", gamma=0.5, sigma_plus=sp_, sigma_minus=sm,
                   source={"kind": "exact"})
        rows = qfem_baseline(cfg)
        H = np.array([float(r["H"]) for r in rows])
        e = np.array([float(r["rel_energy"]) for r in rows])
        slopes.append(np.polyfit(np.log(H), np.log(e), 1)[0])
    ok = all(0.7 <= s <= 1.3 for s in slopes)
    criterion("4 flat Case I baseline slope", ok, " ".join(f"{s:.3f}" for s in slopes))
    assert ok


def test_criterion_5_cross(cross, criterion):
    pts, base = cross
    e40, e80 = pts[(40, 3)].rel_energy, pts[(80, 3)].rel_energy
    b = [float(r["rel_energy"]) for r in base]
    ok = e40 <= 0.03 and e80 <= 0.03 and min(b) >= 0.30
    criterion("5 cross robustness", ok,
              f"m=3: 1/40 {e40:.3e}, 1/80 {e80:.3e}; baseline min {min(b):.3f}")
    assert ok


def test_criterion_6_spectral(square10, square20, flat2, cross, criterion):
    worst_l1, worst_spread, worst_scale = 0.0, 0.0, 0.0
    for aux in AUX.values():
        worst_l1 = max(worst_l1, float(np.abs(aux.eigvals[:, 0]).max()))
        v = aux.vectors[:, :, 0]
        v = v / np.abs(v).max(axis=1, keepdims=True)
        worst_spread = max(worst_spread, float((v.max(axis=1) - v.min(axis=1)).max()))
    g = build_hierarchy(FINE, 10)
    for name, fld in _fields().items():
        if name == "random":
            continue
        a = build_aux_space(g, fld, 3)
        b = build_aux_space(g, fld.scaled(7.3), 3)
        mask = a.eigvals > 0
        worst_scale = max(worst_scale, float(np.max(np.abs(b.eigvals[mask] / a.eigvals[mask] - 1))))
        worst_scale = max(worst_scale, float(np.abs(b.eigvals[~mask]).max(initial=0.0)))
    gh = build_hierarchy(40, 1)
    lam2 = solve_local_eigen(gh, coeff.constant_field(gh), 0, 3).eigvals[1]
    dev = abs(lam2 / (np.pi ** 2 / 24) - 1)
    ok = worst_l1 <= 1e-10 and worst_spread <= 1e-8 and worst_scale <= 1e-10 and dev <= 0.02
    criterion("6 spectral invariants", ok,
              f"max|l1| {worst_l1:.1e}, spread {worst_spread:.1e}, scale {worst_scale:.1e}, "
              f"l2 vs pi^2/24 {dev:.2%} ({len(AUX)} aux spaces)")
    assert ok


def test_criterion_7_projection_inequalities(criterion):
    g = build_hierarchy(FINE, 10)
    rng = np.random.default_rng(2024)
    worst = 0.0
    checked = 0
    for name, fld in _fields().items():
        for i in rng.choice(g.n_elem, size=10, replace=False):
            e = solve_local_eigen(g, fld, int(i), 3)
            A, B, _ = element_matrices(g, fld, int(i))
            lam = e.gap
            for _ in range(50):
                v = rng.standard_normal(A.shape[0])
                pv = e.vectors @ (e.proj_rows @ v)
                r = v - pv
                a_sq = v @ A @ v
                worst = max(worst, np.sqrt(r @ B @ r) / np.sqrt(a_sq / lam),
                            (v @ B @ v) / (pv @ B @ pv + a_sq / lam))
                checked += 1
    # both ratios are <= 1 in exact arithmetic; allow roundoff only
    ok = worst <= 1 + 1e-10
    criterion("7 local projection inequalities", ok, f"{checked} vectors, worst ratio {worst:.12f}")
    assert ok


def test_criterion_8_decay(square10, criterion):
    cfg = square10[0]
    g = build_hierarchy(FINE, 10)
    prob_field = cfg.build_field(g)[0]
    aux = load_or_build_aux(cfg, g, prob_field, 3, n_eig=4)
    i = 1 * 10 + 1
    ok, details = True, []
    for j, frozen in DECAY_FROZEN.items():
        e = np.array([r[1] for r in decay_study(g, prob_field, aux, i, j, range(1, 8), 8)])
        drop = e[0] / e[-1]
        ok &= bool(np.all(np.diff(e) < 0)) and drop >= 1e2
        ok &= bool(np.allclose(e, frozen, rtol=1e-3))
        details.append(f"j={j} drop {drop:.2e}")
    criterion("8 basis decay", ok, ", ".join(details))
    assert ok


def test_criterion_9_galerkin(square10, square20, flat2, cross, criterion):
    worst = max(GALERKIN, key=lambda t: t[1])
    ok = all(r <= 1e-8 for _, r in GALERKIN)
    criterion("9 Galerkin orthogonality", ok, f"{len(GALERKIN)} runs, worst {worst[1]:.2e} ({worst[0]})")
    assert ok


def test_criterion_10_determinism(tmp, square10, criterion):
    cfg, _, _ = square10
    first = strip_timing(f"{cfg.out}/errors.csv")
    assert run(cfg) == 0  # warm cache
    warm_same = strip_timing(f"{cfg.out}/errors.csv") == first
    a = _cfg(tmp, "det-a", model="square", n_cells=10, sigma_minus=0.1, coarse_n=[10, 20], layers=[1, 2])
    b = _cfg(tmp, "det-b", model="square", n_cells=10, sigma_minus=0.1, coarse_n=[10, 20], layers=[1, 2])
    assert run(a) == 0 and run(b) == 0
    same_csv = all(strip_timing(f"{a.out}/{n}") == strip_timing(f"{b.out}/{n}")
                   for n in ("errors.csv", "spectra.csv"))
    files = sorted((tmp / "det-a" / "cache").glob("basis-*.bin"))
    same_bin = bool(files) and all(f.read_bytes() == (tmp / "det-b" / "cache" / f.name).read_bytes()
                                   for f in files)
    ok = warm_same and same_csv and same_bin
    criterion("10 determinism", ok,
              f"warm rerun identical={warm_same}, cold reruns identical csv={same_csv}, "
              f"{len(files)} basis caches identical={same_bin}")
    assert ok
