"""Acceptance suite.

Each test checks one numbered criterion at its stated tolerance and time
budget; ``conftest.py`` prints a PASS/FAIL line per criterion at the end of
the session.  Run on its own with ``python3 tests/test_acceptance.py``.
"""

if __name__ == "__main__":
    import sys

    import pytest

    sys.exit(pytest.main([__file__, "-q", "-s"]))

import math
import time

import numpy as np
import pytest

from fieldsim.cli import cli_main
from fieldsim.config import load_config, parse_config
from fieldsim.deps import DepGraph
from fieldsim.dsl import parse
from fieldsim.errors import UnitMismatch
from fieldsim.integrate import IntegratorConfig, integrate
from fieldsim.kernels import (
    Monomial,
    benchmark_backends,
    bind,
    expand,
    fill_random,
    run_compiled,
    run_interpreted,
)
from fieldsim.llg import DMDT_SOURCE, MaterialParams
from fieldsim.mesh import FieldSet, Mesh, read_snapshot
from fieldsim.quantities import SI
from fieldsim.runner import read_observables, run_simulation
from fieldsim.stencil import LaplacianOp, laplacian_apply

import macrospin
from equations import CONSTANTS, SCALARS, VECTORS, random_equation
from sample_configs import CONFIG_DIR, wrong_unit_configs
from test_deps import eager_values, random_dag, reachable_down, reachable_up, summing_rule
from test_quantities import (
    test_add_commutative_associative as add_laws,
    test_add_rejects_mismatch as add_rejects,
    test_dimension_algebra as mul_div_laws,
    test_format_round_trip as round_trip,
    test_pow_scales_exponents as pow_law,
)


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f} s, budget {self.seconds} s"


@pytest.fixture(scope="module")
def macrospin_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("criterion4")
    with Budget(10):
        assert cli_main(["run", str(CONFIG_DIR / "macrospin.toml"), "--output-dir", str(out)]) == 0
    return out / "observables.csv"


@pytest.mark.criterion(1, "compiled dmdt kernel >= 2x interpreted throughput on 1e5 sites")
def test_criterion_01_backend_speedup():
    with Budget(30):
        fields = FieldSet(Mesh(100_000))
        fields.new("m", 1)
        fields.new("H", 1, "A/m")
        fields.new("dmdt", 1, "1/s")
        fill_random(fields, ["m", "H"], seed=0)
        coeffs = MaterialParams(Ms=SI(8e5, "A/m"), alpha=0.1).coefficients()
        res = benchmark_backends(DMDT_SOURCE, {"c1": coeffs.c1, "c2": coeffs.c2}, fields, repetitions=5)
    print(f"speedup {res.speedup:.2f}")
    assert res.speedup >= 2.0


@pytest.mark.criterion(2, "200 random equations: compiled == interpreted within 1e-12 relative")
def test_criterion_02_expansion_oracle():
    with Budget(60):
        for seed in range(200):
            rng = np.random.default_rng(10_000 + seed)
            eq = parse(random_equation(rng))
            fs = FieldSet(Mesh(32))
            for name in VECTORS + ("out",):
                fs.new(name, 1)
            for name in SCALARS + ("s",):
                fs.new(name, 0)
            fill_random(fs, VECTORS + SCALARS, seed)
            run_interpreted(eq, CONSTANTS, fs)
            ref = fs[eq.target.name].data.copy()
            run_compiled(bind(expand(eq), CONSTANTS, fs), fs)
            got = fs[eq.target.name].data
            assert np.all(np.abs(got - ref) <= 1e-12 * np.maximum(1.0, np.abs(ref))), eq


@pytest.mark.criterion(3, "epsilon contraction identities exact at IR level")
def test_criterion_03_epsilon_identities():
    assert expand("a <- eps(i,j,k) * eps(i,j,k)").components == ((Monomial(6.0, (), ()),),)
    ir = expand("v(p) <- eps(i,j,p) * eps(i,j,q) * w(q)")
    assert ir.components == tuple((Monomial(2.0, (), (("w", c),)),) for c in range(3))
    a = expand("out(i) <- eps(i,j,k) * u(j) * w(k)")
    b = expand("out(i) <- eps(j,i,k) * u(j) * w(k)")
    for ca, cb in zip(a.components, b.components):
        assert [(m.operands, -m.coefficient) for m in ca] == [(m.operands, m.coefficient) for m in cb]


@pytest.mark.criterion(4, "macrospin m_z within 1e-6 and phase within 1e-5 rad of closed form")
def test_criterion_04_macrospin(macrospin_run):
    data = read_observables(macrospin_run)
    t = data[:, 0]
    assert t[-1] == 2e-9
    gp = macrospin.GAMMA_P
    mz_exact = np.tanh(0.1 * gp * 1e5 * t)
    err_mz = np.abs(data[:, 3] - mz_exact).max()
    # with c1 = -gamma' the magnetization turns from +x towards +y
    phase = np.unwrap(np.arctan2(data[:, 2], data[:, 1]))
    err_phase = np.abs(phase - gp * 1e5 * t).max()
    print(f"max m_z error {err_mz:.2e}, max phase error {err_phase:.2e} rad")
    assert err_mz < 1e-6
    assert err_phase < 1e-5


@pytest.mark.criterion(5, "macrospin |m| drift below 1e-8 without renormalization")
def test_criterion_05_norm_conservation(macrospin_run):
    cfg = load_config(CONFIG_DIR / "macrospin.toml")
    assert cfg.integrator.renormalize_every == 0
    data = read_observables(macrospin_run)
    drift = np.abs(np.linalg.norm(data[:, 1:4], axis=1) - 1.0).max()
    print(f"max norm deviation {drift:.2e}")
    assert drift < 1e-8


@pytest.mark.criterion(6, "relaxed Bloch wall matches tanh profile, RMS < 2% of full scale")
def test_criterion_06_bloch_wall(tmp_path):
    with Budget(120):
        cfg = load_config(CONFIG_DIR / "bloch_wall.toml")
        assert (cfg.mesh.nx, cfg.mesh.ny, cfg.mesh.nz, cfg.mesh.dx) == (200, 1, 1, 0.5e-9)
        run_simulation(cfg, output_dir=str(tmp_path))
    rows = read_observables(tmp_path / "observables.csv")
    assert rows[-1, 4] < cfg.integrator.torque_threshold, "relaxation did not converge"
    m = read_snapshot(tmp_path / "m_final.txt")
    x = m.mesh.centers()[:, 0]
    delta = math.sqrt(1.3e-11 / 5e5)
    assert abs(delta - 5.10e-9) < 0.01e-9

    def rms(x0):
        # the wall runs from +z on the left to -z on the right
        return float(np.sqrt(np.mean((m.data[:, 2] + np.tanh((x - x0) / delta)) ** 2)))

    grid = np.linspace(x[0], x[-1], 4001)
    x0 = grid[np.argmin([rms(g) for g in grid])]
    fine = np.linspace(x0 - 0.05e-9, x0 + 0.05e-9, 201)
    best = min(rms(g) for g in fine)
    print(f"wall centre {x0 * 1e9:.3f} nm, RMS error {best:.2e}")
    # full scale of m_z is taken as 1, the stricter of the two readings
    assert best < 0.02


@pytest.mark.criterion(7, "Laplacian convergence order 2.0 +- 0.15")
def test_criterion_07_laplacian_order():
    errors = []
    for n in (16, 32, 64):
        mesh = Mesh(n, dx=1.0 / n)
        fs = FieldSet(mesh)
        u = fs.new("u", 0)
        u.set_from_function(lambda x, y, z: np.cos(np.pi * x))
        out = fs.new("lap", 0)
        laplacian_apply(LaplacianOp(mesh), u, out)
        errors.append(np.abs(out.data[:, 0] + np.pi ** 2 * u.data[:, 0]).max())
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    print(f"observed orders {orders}")
    assert np.all(np.abs(orders - 2.0) <= 0.15)


@pytest.mark.criterion(8, "integrator order 5 +- 0.3; 100x tighter rtol gives >= 10x smaller error")
def test_criterion_08_integrator():
    def decay(t, y):
        return -y

    errors = []
    for h in (0.1, 0.05, 0.025):
        y = np.array([1.0])
        integrate(decay, y, IntegratorConfig(t_end=1.0, dt_initial=h, dt_max=h, adaptive=False))
        errors.append(abs(y[0] - math.exp(-1.0)))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    print(f"observed orders {orders}")
    assert np.all(np.abs(orders - 5.0) <= 0.3)

    def final_error(rtol):
        t, m, _ = macrospin.run(t_end=1e-9, rtol=rtol, dt_max=1e-10)
        mz, phase = macrospin.closed_form(t[-1])
        rho = math.sqrt(1 - mz ** 2)
        return np.abs(m[-1] - [rho * math.cos(phase), rho * math.sin(phase), mz]).max()

    loose, tight = final_error(1e-6), final_error(1e-8)
    print(f"error at rtol 1e-6: {loose:.2e}, at 1e-8: {tight:.2e}")
    assert tight * 10 <= loose


@pytest.mark.criterion(9, "lazy engine: diamond counts exact; 50 random DAGs bit-identical to eager oracle")
def test_criterion_09_lazy_minimality():
    fs = FieldSet(Mesh(2))
    for name in "abcd":
        fs.new(name, 0)
    g = DepGraph(fs)
    g.add_rule(summing_rule("b", ["a"], "b"))
    g.add_rule(summing_rule("c", ["a"], "c"))
    g.add_rule(summing_rule("d", ["b", "c"], "d"))
    g.write("a")
    g.request("d")
    assert g.compute_counts() == {"b": 1, "c": 1, "d": 1}
    g.request("d")
    assert g.compute_counts() == {"b": 1, "c": 1, "d": 1}
    g.write("a")
    g.request("b")
    assert g.compute_counts() == {"b": 2, "c": 1, "d": 1}
    g.request("d")
    assert g.compute_counts() == {"b": 2, "c": 2, "d": 2}
    assert g.request("a") == 0

    for seed in range(50):
        rng = np.random.default_rng(500 + seed)
        names, sources, rules = random_dag(rng, int(rng.integers(2, 11)))
        assert len(names) <= 10
        fs = FieldSet(Mesh(3))
        for name in names:
            fs.new(name, 0)
        g = DepGraph(fs)
        for ins, out, w in rules:
            g.add_rule(summing_rule(out, ins, out, w))
        values = {s: rng.normal(size=(3, 1)) for s in sources}
        for s in sources:
            fs[s].data[:] = values[s]
        dirty = {o for _, o, _ in rules}
        for _ in range(20):
            if rng.random() < 0.4:
                s = sources[int(rng.integers(len(sources)))]
                values[s] = rng.normal(size=(3, 1))
                fs[s].data[:] = values[s]
                g.write(s)
                dirty |= reachable_down(rules, s)
            else:
                target = names[int(rng.integers(len(names)))]
                before = g.compute_counts()
                g.request(target)
                after = g.compute_counts()
                ran = {r for r in after if after[r] != before[r]}
                assert ran == dirty & reachable_up(rules, target)
                dirty -= ran
                expect = eager_values(names, sources, rules, values)
                for n in reachable_up(rules, target):
                    assert np.array_equal(fs[n].data, expect[n])


@pytest.mark.criterion(10, "dimension algebra properties hold; all 7 wrong-unit configs rejected")
def test_criterion_10_units():
    for prop in (add_laws, add_rejects, mul_div_laws, round_trip, pow_law):
        prop()
    configs = wrong_unit_configs()
    assert len(configs) == 7
    rejected = 0
    for text in configs:
        with pytest.raises(UnitMismatch):
            parse_config(text)
        rejected += 1
    assert rejected == 7


@pytest.mark.criterion(11, "repeated run of the macrospin config gives a byte-identical CSV")
def test_criterion_11_reproducibility(tmp_path, macrospin_run):
    assert cli_main(["run", str(CONFIG_DIR / "macrospin.toml"), "--output-dir", str(tmp_path)]) == 0
    assert (tmp_path / "observables.csv").read_bytes() == macrospin_run.read_bytes()
