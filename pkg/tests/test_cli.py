import csv
import json

import numpy as np
import pytest

from pdro_itr.cli import ExperimentConfig, main, run_experiment
from pdro_itr.errors import ParameterError
from pdro_itr.simplex import SimplexVector

RHO = "0.2,0.3,0.5"
FAST_RUN = [
    "run-experiment",
    "--scenario", "1",
    "--n-total", "400",
    "--delta-true", "0.75",
    "--rho-true", RHO,
    "--reps", "1",
    "--n-draws", "10",
    "--delta-grid", "0,0.5,1.0",
]


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_single_rep_naive_emits_one_row(tmp_path):
    out = str(tmp_path / "r.csv")
    code = main(FAST_RUN + ["--methods", "naive", "--output", out])
    assert code == 0
    rows = read_rows(out)
    assert rows[0] == list(
        ("scenario", "method", "n", "delta_true", "rep", "policy_value", "worst_case_value", "seed")
    )
    assert len(rows) == 2
    assert rows[1][1] == "naive" and rows[1][4] == "0"


def test_rerun_is_byte_identical(tmp_path):
    out_a = str(tmp_path / "a.csv")
    out_b = str(tmp_path / "b.csv")
    args = FAST_RUN + ["--methods", "naive,dro", "--output"]
    assert main(args + [out_a]) == 0
    assert main(args + [out_b]) == 0
    assert open(out_a, "rb").read() == open(out_b, "rb").read()


def test_meta_sidecar_records_config(tmp_path):
    out = str(tmp_path / "r.csv")
    assert main(FAST_RUN + ["--methods", "naive", "--output", out]) == 0
    meta = json.load(open(out + ".meta.json"))
    assert meta["scenario"] == 1
    assert meta["n_total"] == 400
    assert meta["rho_true"] == pytest.approx([0.2, 0.3, 0.5])
    assert meta["n_draws"] == 10
    assert meta["methods"] == ["naive"]


def test_config_file_with_flag_override(tmp_path):
    conf = tmp_path / "conf.json"
    out = str(tmp_path / "r.csv")
    conf.write_text(
        json.dumps(
            {
                "scenario": 1,
                "n_total": 400,
                "reps": 2,
                "methods": ["naive"],
                "rho_true": [0.2, 0.3, 0.5],
                "n_draws": 5,
            }
        )
    )
    assert main(["run-experiment", "--config", str(conf), "--reps", "1", "--output", out]) == 0
    assert len(read_rows(out)) == 2  # header + 1 row: the flag overrides reps=2


def test_indivisible_n_total_exits_2(tmp_path, capsys):
    code = main(["run-experiment", "--n-total", "1001", "--reps", "1", "--output", str(tmp_path / "x.csv")])
    assert code == 2
    assert "n_total" in capsys.readouterr().err


def test_unknown_method_exits_2(tmp_path):
    code = main(FAST_RUN + ["--methods", "pdro,bogus", "--output", str(tmp_path / "x.csv")])
    assert code == 2


def test_experiment_config_validation():
    with pytest.raises(ParameterError):
        ExperimentConfig(n_total=402)
    with pytest.raises(ParameterError):
        ExperimentConfig(rho_true="uniformish")
    with pytest.raises(ParameterError):
        ExperimentConfig(delta_grid=())
    with pytest.raises(ParameterError):
        ExperimentConfig(methods=("pdro", "pdqo"))
    cfg = ExperimentConfig(rho_true=SimplexVector([0.5, 0.25, 0.25]), n_total=400)
    assert cfg.per_domain == 100


def test_jobs_flag_matches_serial(tmp_path):
    out_a = str(tmp_path / "serial.csv")
    out_b = str(tmp_path / "par.csv")
    args = FAST_RUN[:]
    args[args.index("--reps") + 1] = "2"
    args += ["--methods", "naive"]
    assert main(args + ["--output", out_a]) == 0
    assert main(args + ["--output", out_b, "--jobs", "2"]) == 0
    assert open(out_a, "rb").read() == open(out_b, "rb").read()


def simulate_files(tmp_path, seed=3):
    src = str(tmp_path / "src.csv")
    pool = str(tmp_path / "pool.csv")
    calib = str(tmp_path / "calib.csv")
    code = main(
        [
            "simulate",
            "--scenario", "1",
            "--n-total", "400",
            "--delta-true", "0.75",
            "--rho-true", RHO,
            "--seed", str(seed),
            "--out-sources", src,
            "--out-pool", pool,
            "--out-calibration", calib,
        ]
    )
    assert code == 0
    return src, pool, calib


def test_simulate_row_counts_and_headers(tmp_path):
    src, pool, calib = simulate_files(tmp_path)
    src_rows = read_rows(src)
    assert src_rows[0] == ["x1", "x2", "x3", "x4", "x5", "a", "y", "s"]
    assert len(src_rows) == 301  # 3 sources x 100
    assert read_rows(pool)[0] == ["x1", "x2", "x3", "x4", "x5"]
    assert len(read_rows(pool)) == 101
    assert len(read_rows(calib)) == 26


def fit_policy(tmp_path, extra=()):
    src, pool, calib = simulate_files(tmp_path)
    policy_path = str(tmp_path / "policy.json")
    code = main(
        [
            "fit",
            "--train", src,
            "--pool", pool,
            "--calibration", calib,
            "--opt-steps", "150",
            "--out", policy_path,
            *extra,
        ]
    )
    assert code == 0
    return src, pool, calib, policy_path


def test_fit_then_score_round_trip(tmp_path):
    src, pool, calib, policy_path = fit_policy(tmp_path)
    out = str(tmp_path / "dec.csv")
    assert main(["score", "--policy", policy_path, "--input", pool, "--out", out]) == 0
    rows = read_rows(out)
    assert rows[0] == ["decision", "score"]
    assert len(rows) == 101
    for decision, score in rows[1:]:
        assert decision in ("0", "1")
        assert (decision == "1") == (float(score) > 0.0)


def test_score_empty_input_writes_header_only(tmp_path):
    _, pool, _, policy_path = fit_policy(tmp_path)
    empty = tmp_path / "empty.csv"
    empty.write_text("x1,x2,x3,x4,x5\n")
    out = str(tmp_path / "dec.csv")
    assert main(["score", "--policy", policy_path, "--input", str(empty), "--out", out]) == 0
    assert open(out).read() == "decision,score\n"


def test_score_is_rowwise_pure(tmp_path):
    _, pool, _, policy_path = fit_policy(tmp_path)
    out = str(tmp_path / "dec.csv")
    assert main(["score", "--policy", policy_path, "--input", pool, "--out", out]) == 0
    base = read_rows(out)[1:]

    pool_rows = read_rows(pool)
    order = np.random.default_rng(7).permutation(len(pool_rows) - 1)
    shuffled = tmp_path / "shuffled.csv"
    with open(shuffled, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(pool_rows[0])
        writer.writerows([pool_rows[1 + i] for i in order])
    out2 = str(tmp_path / "dec2.csv")
    assert main(["score", "--policy", policy_path, "--input", str(shuffled), "--out", out2]) == 0
    assert read_rows(out2)[1:] == [base[i] for i in order]


def test_score_dimension_mismatch_exits_3(tmp_path, capsys):
    _, _, _, policy_path = fit_policy(tmp_path)
    narrow = tmp_path / "narrow.csv"
    narrow.write_text("x1,x2\n0.1,0.2\n")
    assert main(["score", "--policy", policy_path, "--input", str(narrow), "--out", str(tmp_path / "o.csv")]) == 3
    assert "dimension" in capsys.readouterr().err


def test_fit_missing_y_column_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,x2,a,s\n0.1,0.2,1,1\n")
    assert main(["fit", "--train", str(bad), "--out", str(tmp_path / "p.json")]) == 3
    err = capsys.readouterr().err
    assert "line 1" in err


def test_fit_single_source_collapses_to_cate_sign(tmp_path):
    # one source: the policy must reduce to the sign of that source's CATE
    rng = np.random.default_rng(11)
    n = 300
    X = rng.normal(size=(n, 2))
    a = rng.integers(0, 2, size=n)
    y = (2.0 * X[:, 0]) * (2 * a - 1) + 0.1 * rng.normal(size=n)
    train = tmp_path / "train.csv"
    with open(train, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x1", "x2", "a", "y", "s"])
        for i in range(n):
            writer.writerow([repr(float(X[i, 0])), repr(float(X[i, 1])), int(a[i]), repr(float(y[i])), 1])
    policy_path = str(tmp_path / "p.json")
    assert main(["fit", "--train", str(train), "--out", policy_path]) == 0
    doc = json.load(open(policy_path))
    assert doc["rho"] == [1.0]

    probe = tmp_path / "probe.csv"
    probe.write_text("x1,x2\n1.5,0.0\n-1.5,0.0\n")
    out = str(tmp_path / "dec.csv")
    assert main(["score", "--policy", policy_path, "--input", str(probe), "--out", out]) == 0
    decisions = [row[0] for row in read_rows(out)[1:]]
    assert decisions == ["1", "0"]


def test_dr_eval_constant_mode(tmp_path, capsys):
    src, pool, calib, policy_path = fit_policy(tmp_path)
    capsys.readouterr()  # drop the simulate/fit chatter
    assert main(["dr-eval", "--policy", policy_path, "--data", calib, "--propensity", "constant:0.5"]) == 0
    out = capsys.readouterr().out
    lines = dict(line.split("=", 1) for line in out.strip().splitlines())
    assert float(lines["dr_value"]) == pytest.approx(float(lines["dr_value"]))
    assert lines["n"] == "25"
    assert "clip_fraction" not in lines


def test_dr_eval_logistic_mode_reports_clip_fraction(tmp_path, capsys):
    src, pool, calib, policy_path = fit_policy(tmp_path)
    capsys.readouterr()
    assert main(["dr-eval", "--policy", policy_path, "--data", calib, "--propensity", "logistic"]) == 0
    lines = dict(line.split("=", 1) for line in capsys.readouterr().out.strip().splitlines())
    assert 0.0 <= float(lines["clip_fraction"]) <= 1.0


def test_dr_eval_missing_a_column_exits_3(tmp_path):
    _, pool, _, policy_path = fit_policy(tmp_path)
    assert main(["dr-eval", "--policy", policy_path, "--data", pool]) == 3


def test_dr_eval_bad_propensity_mode_exits_2(tmp_path):
    _, _, calib, policy_path = fit_policy(tmp_path)
    assert main(["dr-eval", "--policy", policy_path, "--data", calib, "--propensity", "oracle"]) == 2


def test_run_experiment_returns_summaries(tmp_path):
    config = ExperimentConfig(
        scenario=1,
        n_total=400,
        delta_true=0.75,
        rho_true=SimplexVector([0.2, 0.3, 0.5]),
        reps=1,
        methods=("naive",),
        output_path=str(tmp_path / "r.csv"),
        n_draws=10,
    )
    import io

    sink = io.StringIO()
    summaries = run_experiment(config, out=sink)
    assert len(summaries) == 1
    assert summaries[0]["method"] == "naive"
    assert summaries[0]["worst_case_sd"] == 0.0
    assert "worst_case_mean" in sink.getvalue()
