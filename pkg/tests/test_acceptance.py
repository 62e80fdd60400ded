"""Acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line (``pytest -s``) and the
lines are repeated in the terminal summary.
"""

import json
from pathlib import Path

import numpy as np

from conftest import random_symmetric, report_criterion
from sncg.config import SncgConfig
from sncg.driver import CONVERGED, SG, sgd_baseline, sncg1, sncg2
from sncg.estimator import BatchPolicy, grad_batch_size, hess_batch_size
from sncg.harness.cli import main
from sncg.harness.runner import TIMING_FIELDS
from sncg.ncgs import ncgs_step, sufficient_decrease_bound
from sncg.negcurv import min_eigvec
from sncg.estimator import MatrixOperator
from sncg.problems import PCAFiniteSum, SaddleQuadratic, SeparableQuartic
from sncg.verify import check_stationarity, dense_min_eig

ROOT = Path(__file__).resolve().parents[1]


def test_criterion_1_batch_sizes():
    s1 = grad_batch_size(1, 0.1, 0.1)
    s2 = hess_batch_size(1, 0.1, 0.1, 10)
    ok = s1 == 6763 and s2 == 8478
    assert report_criterion(1, "batch-size formulas", ok, f"|S1|={s1}, |S2|={s2}")


def test_criterion_2_negative_curvature_contract():
    rng = np.random.default_rng(2024)
    eps, delta, trials = 0.05, 0.1, 500
    violations = 0
    for _ in range(trials):
        d = int(rng.integers(2, 51))
        H, _ = random_symmetric(rng, d)
        est = min_eigvec(MatrixOperator(H), 1.0, eps, delta, rng)
        violations += dense_min_eig(H)[0] < est.rayleigh - eps
    rate = violations / trials
    assert report_criterion(2, "negative-curvature contract", rate <= 0.15,
                            f"violation rate {rate:.3f} over {trials} matrices, bar 0.15")


def _decrease_draws(problem, sample_x, policy, draws, rng):
    worst = np.inf
    for _ in range(draws):
        x = sample_x()
        eps1 = float(rng.uniform(0.02, 0.9))
        cfg = SncgConfig(eps1=eps1, alpha=float(rng.uniform(0.2, 1.0)),
                         constants=problem.constants, delta=0.1, policy=policy)
        if rng.uniform() < 0.5:
            tol = cfg.eps2 / 2
        else:
            def tol(gn, e2=cfg.eps2, a=cfg.alpha):
                return max(e2, gn**a) / 2
        out = ncgs_step(problem, x, tol, cfg.delta_prime, cfg.eps1, cfg.eps2, cfg,
                        np.random.default_rng(int(rng.integers(1 << 31))))
        fx = problem.value(x)
        margin = fx - problem.value(out.x_next) - max(out.delta1, out.delta2)
        worst = min(worst, margin / max(1.0, abs(fx)))
    return worst


def test_criterion_3_sufficient_decrease():
    rng = np.random.default_rng(3)
    worst = []
    for d in (5, 20):
        quartic = SeparableQuartic(d, box_radius=1.5)
        worst.append(_decrease_draws(
            quartic, lambda: rng.uniform(-1.5, 1.5, quartic.dim),
            BatchPolicy(), 100, rng))
        pca = PCAFiniteSum(d, n_samples=40, box_radius=1.5, seed=d)

        def ball(p=pca):
            z = rng.standard_normal(p.dim)
            return z / np.linalg.norm(z) * p.radius * rng.uniform() ** (1 / p.dim)

        worst.append(_decrease_draws(pca, ball, BatchPolicy("full"), 100, rng))
    ok = min(worst) >= -1e-8
    assert report_criterion(3, "per-step sufficient decrease", ok,
                            f"400 steps, worst relative margin {min(worst):.3e}")


def test_criterion_4_boundary_constants():
    worst = 0.0
    for e1, e2, L1, L2 in [(0.1, 0.1, 1, 1), (0.2, 0.447, 5.75, 9), (0.05, 0.3, 2.5, 0.7)]:
        b1 = sufficient_decrease_bound(-e2 / 2, 0.0, e1, e2, L1, L2).delta1
        b2 = sufficient_decrease_bound(0.0, e1, e1, e2, L1, L2).delta2
        worst = max(worst, abs(b1 / (e2**3 / (48 * L2**2)) - 1), abs(b2 / (e1**2 / (8 * L1)) - 1))
    assert report_criterion(4, "boundary constants", worst <= 1e-12,
                            f"max relative error {worst:.1e}")


def _terminal_problems():
    a = SaddleQuadratic(np.linspace(-0.1, 1.0, 10), noise_scale=0.05, n_samples=500,
                        box_radius=2.0, x0=np.ones(10), seed=3)
    b = SeparableQuartic(10, n_samples=200, weight_spread=0.1, box_radius=1.2, seed=3)
    return {"a": a, "b": b}


def test_criterion_5_terminal_stationarity():
    details, ok = [], True
    for name, p in _terminal_problems().items():
        cfg = SncgConfig(eps1=0.2, alpha=0.5, delta=0.2, constants=p.constants)
        for label, algo in (("sncg1", sncg1), ("sncg2", sncg2)):
            good = 0
            for seed in range(25):
                res = algo(p, p.x0, cfg, rng=seed)
                if res.status != CONVERGED:
                    continue
                if label == "sncg1":
                    ok &= res.iters <= cfg.sncg1_cap
                else:
                    ok &= res.sg_steps <= cfg.sg_cap and res.ncgs_steps <= cfg.ncgs_cap
                good += check_stationarity(p, res.x_final, cfg.eps1, cfg.eps2).passed
            ok &= good >= 0.6 * 25
            details.append(f"({name}) {label} {good}/25")
    assert report_criterion(5, "terminal stationarity", ok, ", ".join(details))


def test_criterion_6_saddle_escape():
    p = SeparableQuartic(10, box_radius=1.5)
    cfg = SncgConfig(eps1=0.1, alpha=1.0, delta=0.1, constants=p.constants)
    origin = np.zeros(10)
    counts = {"sgd_fails": 0, "sncg1": 0, "sncg2": 0}
    for seed in range(10):
        base = sgd_baseline(p, origin, cfg, rng=seed)
        rep = check_stationarity(p, base.x_final, 0.1, 0.1)
        counts["sgd_fails"] += (base.status == CONVERGED and rep.lambda_min == -1
                                and not rep.pass_second_order)
        for label, algo in (("sncg1", sncg1), ("sncg2", sncg2)):
            res = algo(p, origin, cfg, rng=seed)
            counts[label] += check_stationarity(p, res.x_final, 0.1, 0.1).passed
    ok = all(v == 10 for v in counts.values())
    assert report_criterion(6, "saddle escape", ok,
                            ", ".join(f"{k} {v}/10" for k, v in counts.items()))


def test_criterion_7_oracle_separation():
    p = SeparableQuartic(10, n_samples=200, weight_spread=0.1, box_radius=1.2, x0="corner",
                         seed=3)
    cfg = SncgConfig(eps1=0.2, alpha=0.5, delta=0.2, constants=p.constants)
    res = sncg2(p, p.x0, cfg, rng=0)
    large = [r for r in res.trace if r.grad_norm >= cfg.eps1]
    ok = (len(large) > 0 and all(r.iso_step == 0 and r.branch == SG for r in large)
          and res.sg_steps <= cfg.sg_cap)
    assert report_criterion(7, "SNCG-2 oracle separation", ok,
                            f"{len(large)} iterations with |g| >= eps1, all ISO-free; "
                            f"sg_steps {res.sg_steps} <= cap {cfg.sg_cap}; status {res.status}")


def _snapshot(run_dir):
    files = {}
    for path in sorted((run_dir / "traces").iterdir()):
        files[path.name] = [
            {k: v for k, v in json.loads(line).items() if k not in TIMING_FIELDS}
            for line in path.read_text().splitlines()]
    rows = (run_dir / "summary.csv").read_text().splitlines()
    header = rows[0].split(",")
    keep = [i for i, h in enumerate(header) if h not in TIMING_FIELDS]
    files["summary.csv"] = [[r.split(",")[i] for i in keep] for r in rows]
    return files


def test_criterion_8_determinism_and_accounting(tmp_path, monkeypatch):
    ok, details = True, []
    for cfg in sorted((ROOT / "configs").glob("*.yaml")):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        monkeypatch.setenv("SNCG_OUTPUT_DIR", str(out_a))
        ok &= main(["run", str(cfg)]) == 0
        monkeypatch.setenv("SNCG_OUTPUT_DIR", str(out_b))
        ok &= main(["run", str(cfg)]) == 0
        (run_a,) = out_a.iterdir()
        (run_b,) = out_b.iterdir()
        same = _snapshot(run_a) == _snapshot(run_b)
        verified = main(["verify", str(run_a)]) == 0 and main(["verify", str(run_b)]) == 0
        ok &= same and verified
        details.append(f"{cfg.name}: reproducible={same}, verify={'0' if verified else '3'}")
        for d in (out_a, out_b):
            for f in sorted(d.rglob("*"), reverse=True):
                f.unlink() if f.is_file() else f.rmdir()
    assert report_criterion(8, "determinism and accounting", ok, "; ".join(details))
