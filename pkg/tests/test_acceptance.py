"""Acceptance suite: the ten numbered criteria at their stated tolerances.

Each criterion prints one ``CRITERION n PASS|FAIL`` line.  The Monte Carlo
criteria run the shipped acceptance configs (one experiment per config,
shared between the criteria that read it).  Run alone with

    pytest tests/test_acceptance.py -v

or ``python3 tests/test_acceptance.py``.
"""

import math
import os
import sys

import numpy as np
import pytest

from loewnerlab import lab
from loewnerlab.bessel import besq_exact_sample
from loewnerlab.driver import DriverPath, synthetic_path
from loewnerlab.loewner import backward_elementary, build_chain, evolve_backward, forward_elementary, trace

pytestmark = pytest.mark.slow

WORKERS = os.cpu_count() or 1
_reports = {}
_lines = {}


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")

    def get(kind):
        if kind not in _reports:
            cfg = lab.load_config(lab.shipped_config_dir() / f"{kind}.json")
            cfg = lab.with_overrides(cfg, out=out / kind, workers=WORKERS)
            _reports[kind] = lab.run_experiment(cfg)
        return _reports[kind]

    return get


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    if tr is not None and _lines:
        tr.write_line("")
        tr.write_line("acceptance summary")
        for n in sorted(_lines):
            tr.write_line(_lines[n])


def report(request, n, passed, detail):
    line = f"CRITERION {n} {'PASS' if passed else 'FAIL'}: {detail}"
    _lines[n] = line
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    if tr is not None:
        tr.write_line("")
        tr.write_line(line)
    else:  # pragma: no cover
        print(line)
    assert passed, line


def gates(rep, prefix):
    found = [g for g in rep.gates if g.name.startswith(prefix)]
    assert found, f"no gate starting with {prefix!r} in {rep.kind}"
    return found


def verdict(gs):
    return all(g.passed for g in gs), "; ".join(f"{g.name}: {g.detail}" for g in gs)


def test_criterion_1_phase_transition(run, request):
    rep = run("phase_scan")
    ok, detail = verdict(gates(rep, "phase_scan"))
    kappas = {round(r["kappa"], 6) for r in rep.rows}
    assert {2.0, round(8 / 3, 6), 3.0, 6.0, 8.0} <= kappas
    assert all(r["n"] == 200 for r in rep.rows)
    report(request, 1, ok, detail)


def test_criterion_2_boundary_classification(run, request):
    rep = run("boundary_class")
    ok, detail = verdict(gates(rep, "boundary kappa="))
    assert all(r["n"] == 500 for r in rep.rows if "verdict" in r)
    report(request, 2, ok, detail)


def test_criterion_3_two_solutions(run, request):
    rep = run("mirror")
    ok, detail = verdict(gates(rep, "mirror kappa=8 sign/spread"))
    report(request, 3, ok, detail)


def test_criterion_4_exact_besq_sampler(request):
    n, x, delta, dt = 100000, 1.0, 0.5, 0.1
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([20240604, 4])))
    s = besq_exact_sample(x, delta, dt, n, rng)
    mean, var = x + delta * dt, 4 * x * dt + 2 * delta * dt ** 2
    se_mean = s.std(ddof=1) / math.sqrt(n)
    se_var = math.sqrt((np.mean((s - s.mean()) ** 4) - s.var() ** 2) / n)
    ok = abs(s.mean() - mean) <= 3 * se_mean and abs(s.var(ddof=1) - var) <= 3 * se_var
    detail = (f"mean {s.mean():.5f} vs {mean:g} (3 SE {3 * se_mean:.5f}); "
              f"variance {s.var(ddof=1):.5f} vs {var:g} (3 SE {3 * se_var:.5f})")
    report(request, 4, ok, detail)


def test_criterion_5_lambda_inequality(run, request):
    rep = run("lambda")
    gs = gates(rep, "lambda kappa=8 nonincreasing") + gates(rep, "lambda kappa=8 p(t=0.3) <= p(t=0.1)^2")
    ok, detail = verdict(gs)
    report(request, 5, ok, detail)


def test_criterion_6_excursion_hull(run, request):
    rep = run("excursion_hull")
    ok, detail = verdict(gates(rep, "excursion_hull kappa=6"))
    report(request, 6, ok, detail)


def test_criterion_7_mirror_base(run, request):
    rep = run("mirror")
    ok, detail = verdict(gates(rep, "mirror kappa=8 mean relative base error"))
    report(request, 7, ok, detail)


def test_criterion_8_exact_oracles(request):
    n = 10000
    chain0 = build_chain(DriverPath(0.0, synthetic_path(np.zeros(n + 1), 1.0)))
    poly = trace(chain0)
    e_trace = float(np.max(np.abs(poly.points - 2j * np.sqrt(poly.times))))
    exact = {2j: 2 * math.sqrt(2) * 1j, 1 + 1j: complex(np.sqrt((1 + 1j) ** 2 - 4)), 3 + 0j: math.sqrt(5)}
    e_map = max(abs(evolve_backward(chain0, z) - w) for z, w in exact.items())
    rng = np.random.default_rng(8)
    e_rt = 0.0
    for _ in range(10000):
        z = complex(rng.uniform(-5, 5), rng.uniform(1e-3, 5))
        u, dt = rng.uniform(-2, 2), 10 ** rng.uniform(-8, 0)
        e_rt = max(e_rt, abs(forward_elementary(backward_elementary(z, u, dt), u, dt)[0] - z))
    ok = e_trace <= 1e-8 and e_map <= 1e-9 and e_rt <= 1e-12
    report(request, 8, ok, f"trace {e_trace:.2e} (<= 1e-8), backward map {e_map:.2e} (<= 1e-9), "
                           f"round trip {e_rt:.2e} (<= 1e-12)")


def test_criterion_9_distributional_identity(run, request):
    rep = run("distribution_test")
    ok, detail = verdict(gates(rep, "dist kappa="))
    assert all(r["n"] == 2000 for r in rep.rows)
    report(request, 9, ok, detail)


def test_criterion_10_long_excursions(run, request):
    rep = run("lambda")
    ok, detail = verdict(gates(rep, "lambda kappa=8 long-excursion"))
    report(request, 10, ok, detail)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
