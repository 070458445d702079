import numpy as np
import pytest
import scipy.io

from wgporo import bench, cli
from wgporo.assembly import State
from wgporo.bench import ConfigError, ExperimentConfig
from wgporo.mmio import export_matrix_market, read_matrix_market
from wgporo.precond import SolveReport
from wgporo.problems import make_problem


def _report(**kw):
    base = dict(precond="p3", dim=2, n=8, lam=1.4286, mu=0.35714, eps=0.2, c0=1.0, dt=1e-3,
                kappa=1.0, iterations=17, converged=True, relres=3.1e-7, wall_ms=12.5)
    base.update(kw)
    return SolveReport(**base)


# --------------------------------------------------------------------------- #
# configuration
# --------------------------------------------------------------------------- #
def test_empty_precond_list_is_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig("poro2", precond=())


@pytest.mark.parametrize("kw", [dict(kind="stokes"), dict(kind="poro2", precond=("p2e",)),
                                dict(kind="poro3", precond=("p2",)), dict(kind="poro2", n=()),
                                dict(kind="poro2", format="xml"), dict(kind="poro2", jobs=0),
                                dict(kind="poro2", precond=("amg",))])
def test_invalid_configs(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_grid_order_and_profiles():
    cfg = ExperimentConfig("poro2", n=(8, 16), lam=(1.0, 2.0), c0=(1.0,), dt=(1e-3,),
                           precond=("p2", "p3"))
    g = cfg.grid()
    assert [p[0] for p in g] == [8, 8, 8, 8, 16, 16, 16, 16]
    assert [p[5] for p in g[:2]] == ["p2", "p3"]
    assert cfg.solver_config().tol == 1e-6 and cfg.solver_config().restart == 30
    three = ExperimentConfig("poro3")
    assert three.solver_config().tol == 1e-3 and three.solver_config().residual == "preconditioned_rhs"
    assert three.solver_config().restart == 28
    assert ExperimentConfig("elasticity", c0=(0.0, 1.0)).grid() == \
        ExperimentConfig("elasticity", c0=(5.0,)).grid()
    tight = ExperimentConfig("poro2", tol=1e-8).solver_config()
    assert tight.tol == 1e-8 and tight.true_cap == pytest.approx(1e-7)


# --------------------------------------------------------------------------- #
# tables
# --------------------------------------------------------------------------- #
def test_single_report_gives_two_csv_lines():
    text = bench.format_csv([_report()])
    lines = text.strip().split("\n")
    assert len(lines) == 2
    assert lines[0] == ",".join(bench.CSV_FIELDS)


def test_csv_round_trip():
    reps = [_report(), _report(precond="p2", converged=False, relres=0.25, iterations=3000,
                               lam=1.6667e6, eps=2e-7, dt=1e-6, c0=0.0)]
    rows = bench.parse_csv(bench.format_csv(reps))
    assert rows == [bench.report_row(r) for r in reps]


def test_markdown_layout_for_poro_grid():
    reps = [_report(n=n, lam=lam, c0=c0, dt=dt, precond=t)
            for n in (8, 16, 32, 64, 128, 256) for lam in (1.4286, 1.6667e3, 1.6667e6)
            for c0 in (1.0, 0.0) for t in ("p2", "p2dlu") for dt in (1e-3, 1e-6)]
    md = bench.format_markdown(reps).strip().split("\n")
    body = md[2:]
    assert len(body) == 18
    assert sum(1 for r in body if r.split("|")[1].strip()) == 6
    assert md[0].count("c0=") == 8


def test_markdown_elasticity_and_nonconverged_marker():
    reps = [_report(precond="p2e", n=n, lam=lam, iterations=n, converged=n != 16)
            for lam in (1.4286, 1.6667e6) for n in (8, 16)]
    md = bench.format_markdown(reps).strip().split("\n")
    assert len(md) == 4
    assert "16*" in md[2] and "| 8 |" in md[2]


def test_emit_table_writes_file(tmp_path):
    p = tmp_path / "t.csv"
    text = bench.emit_table([_report()], "csv", str(p))
    assert p.read_text() == text
    with pytest.raises(OSError):
        bench.emit_table([_report()], "csv", str(tmp_path / "missing" / "t.csv"))


def test_all_converged():
    assert bench.all_converged([_report()])
    assert not bench.all_converged([_report(), _report(converged=False)])
    assert not bench.all_converged([_report(relres=float("nan"))])


# --------------------------------------------------------------------------- #
# time stepping
# --------------------------------------------------------------------------- #
def test_zero_data_preserves_zero_state(blocks2d):
    from dataclasses import replace
    b = blocks2d(4, c0=1.0)
    pr = make_problem("poro2d", b.params)
    zero = replace(pr, force=lambda *a: np.zeros((2,) + np.shape(a[0])),
                   source=lambda *a: np.zeros(np.shape(a[0])),
                   u_dirichlet=lambda *a: np.zeros((2,) + np.shape(a[0])))
    for tag in ("p2", "p3"):
        st, rep = bench.step_implicit_euler(State.zero(b.dofs), b, zero, t=1e-3, precond=tag)
        assert not st.u.any() and not st.p_interior.any()


def test_two_steps_remain_bounded(blocks2d):
    b = blocks2d(8, c0=1.0, dt=1e-3)
    pr = make_problem("poro2d", b.params)
    st = State.zero(b.dofs)
    norms = []
    for k in (1, 2):
        st, rep = bench.step_implicit_euler(st, b, pr, t=k * 1e-3, precond="p3")
        assert rep.converged and rep.relres <= 1e-5
        norms.append(np.linalg.norm(st.u))
    assert np.all(np.isfinite(norms)) and norms[1] < 10 * norms[0]


def test_single_step_matches_run_point():
    rep_a, u_a = bench.run_point("poro2", 4, 1.4286, 1.0, 1e-3, 1.0, "p3",
                                 ExperimentConfig("poro2").solver_config())
    rep_b = bench.run_experiment(ExperimentConfig("poro2", n=(4,), lam=(1.4286,), c0=(1.0,),
                                                  dt=(1e-3,), precond=("p3",)))[0]
    assert rep_a.iterations == rep_b.iterations and rep_a.relres == rep_b.relres


# --------------------------------------------------------------------------- #
# MatrixMarket
# --------------------------------------------------------------------------- #
def test_export_pressure_mass(tmp_path, blocks2d):
    p = tmp_path / "mp.mtx"
    export_matrix_market(blocks2d(8), "Mp", p)
    M = read_matrix_market(p)
    assert M.shape == (64, 64) and M.nnz == 64
    np.testing.assert_array_equal(M.to_scipy().diagonal(), 0.015625)
    assert scipy.io.mminfo(str(p))[5] == "symmetric"


@pytest.mark.parametrize("tag", ["A1", "Dtt", "Bc"])
def test_export_round_trip_is_exact(tmp_path, blocks2d, tag):
    b = blocks2d(8, lam=1.6667e3, c0=1.0, dt=1e-3)
    p = tmp_path / f"{tag}.mtx"
    export_matrix_market(b, tag, p)
    diff = read_matrix_market(p).to_scipy() - b.get(tag).to_scipy()
    assert diff.count_nonzero() == 0


def test_export_b_facet_rows_empty(tmp_path, blocks2d):
    b = blocks2d(8)
    p = tmp_path / "B.mtx"
    export_matrix_market(b, "B", p)
    deg = read_matrix_market(p).row_degree()
    assert np.all(deg[b.n_pi:] == 0) and np.all(deg[: b.n_pi] > 0)


def test_export_unknown_tag(tmp_path, blocks2d):
    with pytest.raises(KeyError):
        export_matrix_market(blocks2d(4), "Q", tmp_path / "q.mtx")


# --------------------------------------------------------------------------- #
# command line
# --------------------------------------------------------------------------- #
def test_cli_sweep_csv(tmp_path):
    out = tmp_path / "e.csv"
    rc = cli.main(["elasticity", "--n", "4", "--lambda", "1.4286", "--out", str(out)])
    assert rc == 0
    rows = bench.parse_csv(out.read_text())
    assert len(rows) == 1 and rows[0]["precond"] == "p2e" and rows[0]["converged"]


def test_cli_config_file_with_flag_override(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("# three-field corner\nn = 8, 16\nlambda = 1.6667e6\nc0 = 1\ndt = 1e-3\n"
                       "precond = p3\nformat = csv\n")
    out = tmp_path / "o.csv"
    rc = cli.main(["poro2", "--config", str(cfgfile), "--n", "4", "--out", str(out)])
    assert rc == 0
    rows = bench.parse_csv(out.read_text())
    assert [(r["n"], r["precond"], r["lambda"]) for r in rows] == [(4, "p3", 1.6667e6)]


def test_cli_nonconvergence_exit_code(tmp_path):
    out = tmp_path / "o.csv"
    rc = cli.main(["poro2", "--n", "4", "--lambda", "1.4286", "--c0", "1", "--dt", "1e-3",
                   "--precond", "p3", "--restart", "1", "--tol", "1e-30", "--out", str(out)])
    assert rc == 1
    assert bench.parse_csv(out.read_text())[0]["converged"] is False


def test_cli_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["poro2", "--precond", "p2e"])
    assert e.value.code == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(SystemExit):
        cli.main(["poro2", "--config", str(bad)])
    rc = cli.main(["elasticity", "--n", "4", "--lambda", "1",
                   "--out", str(tmp_path / "no" / "x.csv")])
    assert rc == 3


def test_cli_export(tmp_path):
    out = tmp_path / "a1.mtx"
    assert cli.main(["export", "--block", "A1", "--n", "4", "--out", str(out)]) == 0
    assert read_matrix_market(out).shape[0] > 0


def test_cli_a1_pcg_table(tmp_path):
    out = tmp_path / "t2.csv"
    assert cli.main(["elasticity", "--a1-pcg", "--n", "4,8", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n,with_ic,without" and len(lines) == 3
    n, with_ic, without = map(int, lines[2].split(","))
    assert n == 8 and with_ic < without


def test_cli_spectrum(tmp_path):
    out = tmp_path / "s.csv"
    rc = cli.main(["spectrum", "--n", "4", "--lambda", "1.6667e3", "--c0", "1", "--dt", "1e-3",
                   "--out", str(out)])
    assert rc == 0
    text = out.read_text()
    assert "min_is_eps" in text and "upper_minus_S3_psd" in text and "multiset" in text
    with pytest.raises(SystemExit):
        cli.main(["spectrum", "--n", "32"])


def test_csv_is_deterministic_apart_from_timing():
    cfg = ExperimentConfig("poro2", n=(4,), lam=(1.4286, 1.6667e6), c0=(0.0,), dt=(1e-6,),
                           precond=("p2dlu", "p3"))
    strip = lambda text: [line.rsplit(",", 1)[0] for line in text.splitlines()]
    a = strip(bench.format_csv(bench.run_experiment(cfg)))
    b = strip(bench.format_csv(bench.run_experiment(cfg)))
    assert a == b
