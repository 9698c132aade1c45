import json
import subprocess
import sys

import numpy as np
import pytest

from kdisc import DDesign, KernelSpec, PairedMMDCore, generic_statistic, hsic_v, ksd_v, median_bandwidth, mmd_u_paired, mmd_v
from kdisc.cli import DataError, load_csv, main, parse_stat
from kdisc.cores import DiagonalGaussian

REQUIRED = {
    "command": str,
    "statistic_kind": str,
    "design": dict,
    "kernels": list,
    "raw_values": list,
    "sigmas": (list, type(None)),
    "value": float,
    "seed": int,
    "n": int,
    "m": (int, type(None)),
    "d": int,
    "clamped": bool,
}


def check_schema(report):
    for key, kind in REQUIRED.items():
        assert key in report, key
        assert isinstance(report[key], kind), (key, report[key])
    assert "pooled_value" in report
    assert len(report["raw_values"]) == len(report["kernels"])
    if report["sigmas"] is not None:
        assert len(report["sigmas"]) == len(report["kernels"])
    assert "variant" in report["design"]


def write_csv(path, A, header=None):
    lines = [] if header is None else [header]
    lines += [",".join(repr(float(v)) for v in row) for row in np.atleast_2d(A)]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def samples(tmp_path):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 2))
    Y = rng.normal(size=(30, 2)) + 0.5
    return X, Y, write_csv(tmp_path / "a.csv", X), write_csv(tmp_path / "b.csv", Y)


def run_cli(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# -- load_csv ---------------------------------------------------------------------------


def test_load_csv_single_column(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("0\n1\n2\n")
    A = load_csv(str(p))
    assert A.shape == (3, 1)
    assert A[:, 0].tolist() == [0.0, 1.0, 2.0]


def test_load_csv_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("x,y\n1,2\n3,4\n")
    assert load_csv(str(p), has_header=True).tolist() == [[1.0, 2.0], [3.0, 4.0]]


def test_load_csv_accepts_bom_exponents_and_blank_lines(tmp_path):
    p = tmp_path / "x.csv"
    p.write_bytes("﻿1e-3, -2.5\n\n.5,+4\n".encode("utf-8"))
    assert load_csv(str(p)).tolist() == [[1e-3, -2.5], [0.5, 4.0]]


@pytest.mark.parametrize(
    "text, match",
    [
        ("1,2\n3\n", "line 2"),
        ("1,2\n3,abc\n", "line 2, column 2"),
        ("1,2\n3,4,5\n", "ragged"),
        ("1;5\n", "column 1"),
        ("1,5\n2,nan\n", "not a number"),
        ("", "no data"),
        ("\n\n", "no data"),
        ("1e400\n", "infinity"),
    ],
)
def test_load_csv_errors(tmp_path, text, match):
    p = tmp_path / "x.csv"
    p.write_text(text)
    with pytest.raises(DataError, match=match):
        load_csv(str(p))


def test_load_csv_rejects_comma_decimals(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text('"1,5"\n')
    with pytest.raises(DataError):
        load_csv(str(p))


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        load_csv(str(tmp_path / "missing.csv"))


# -- example invocations ------------------------------------------------------------------


def test_median_kernel_v_statistic(samples, capsys):
    X, Y, a, b = samples
    code, out, _ = run_cli(capsys, ["mmd", a, b, "--kernel", "gaussian:median", "--stat", "v"])
    assert code == 0
    report = json.loads(out)
    check_schema(report)
    bw = median_bandwidth(X, Y)
    assert report["kernels"] == [KernelSpec("gaussian", bw).to_dict()]
    assert report["value"] == mmd_v(KernelSpec("gaussian", bw), X, Y)
    assert report["sigmas"] is None and report["pooled_value"] is None
    assert (report["n"], report["m"], report["d"]) == (30, 30, 2)


def test_fused_normalised_collection(samples, capsys):
    X, Y, a, b = samples
    argv = ["mmd", a, b, "--kernel", "collection", "--stat", "paired-u", "--pool", "fuse", "--normalize"]
    code, out, _ = run_cli(capsys, argv)
    assert code == 0
    report = json.loads(out)
    check_schema(report)
    assert len(report["kernels"]) == 20
    assert len(report["sigmas"]) == 20
    assert report["pool"]["method"] == "fuse"
    assert report["pool"]["nu"] == 29.0
    assert report["pooled_value"] == report["value"]
    assert report["normalized"] is True
    first = KernelSpec.from_dict(report["kernels"][0])
    assert report["raw_values"][0] == mmd_u_paired(first, X, Y)


def test_ksd_verify(tmp_path, capsys):
    X = np.random.default_rng(4).normal(size=(6, 2))
    path = write_csv(tmp_path / "x.csv", X)
    argv = ["ksd", path, "--score", "gaussian:0:1", "--kernel", "gaussian:1.0", "--stat", "v", "--verify"]
    code, out, _ = run_cli(capsys, argv)
    assert code == 0
    report = json.loads(out)
    check_schema(report)
    assert report["value"] == ksd_v(KernelSpec("gaussian", 1.0), DiagonalGaussian([0, 0], [1, 1]), X)
    assert report["abs_diff"] <= 1e-8
    assert report["score"] == {"model": "gaussian", "mean": [0.0, 0.0], "variance": [1.0, 1.0]}


@pytest.mark.parametrize(
    "argv",
    [
        ["mmd", "A", "B", "--kernel", "gaussian:median", "--stat", "v"],
        ["mmd", "A", "B", "--kernel", "collection", "--stat", "paired-u", "--pool", "fuse", "--normalize"],
        ["mmd", "A", "B", "--kernel", "collection", "--stat", "r:200", "--normalize", "--seed", "7"],
    ],
)
def test_reports_are_byte_identical_across_runs(samples, capsys, argv):
    _, _, a, b = samples
    argv = [a if t == "A" else b if t == "B" else t for t in argv]
    first = run_cli(capsys, argv)
    second = run_cli(capsys, argv)
    assert first[0] == 0
    assert first[1] == second[1]


def test_output_file(samples, tmp_path, capsys):
    _, _, a, b = samples
    target = tmp_path / "out.json"
    code, out, _ = run_cli(capsys, ["mmd", a, b, "-o", str(target)])
    assert code == 0 and out == ""
    check_schema(json.loads(target.read_text()))


def test_report_reproduces_run(samples, capsys):
    X, Y, a, b = samples
    code, out, _ = run_cli(capsys, ["mmd", a, b, "--kernel", "laplace:0.7", "--stat", "d:3"])
    report = json.loads(out)
    assert report["design"] == {"variant": "D", "r": 3}
    k = KernelSpec.from_dict(report["kernels"][0])
    again = generic_statistic(PairedMMDCore(k, X, Y), DDesign(report["design"]["r"])).value
    assert report["value"] == again


# -- verify ----------------------------------------------------------------------------


@pytest.mark.parametrize(
    "argv",
    [
        ["mmd", "A", "B", "--stat", "u", "--kernel", "matern2.5:1.0", "--r", "3"],
        ["mmd", "A", "B", "--stat", "paired-u", "--kernel", "collection", "--normalize", "--pool", "max"],
        ["mmd", "A", "B", "--stat", "l", "--kernel", "imq:0.8"],
        ["hsic", "A", "B", "--stat", "u", "--kernel", "laplace:median"],
        ["hsic", "A", "B", "--stat", "second-order-v", "--kernel", "collection", "--max-kernels", "8"],
        ["ksd", "A", "--stat", "u", "--score", "gaussian:0.5:2", "--kernel", "collection"],
    ],
)
def test_verify_passes_on_small_inputs(tmp_path, capsys, argv):
    rng = np.random.default_rng(9)
    a = write_csv(tmp_path / "a.csv", rng.normal(size=(6, 2)))
    b = write_csv(tmp_path / "b.csv", rng.normal(size=(6, 2)) + 0.3)
    argv = [a if t == "A" else b if t == "B" else t for t in argv] + ["--verify"]
    code, out, _ = run_cli(capsys, argv)
    report = json.loads(out)
    assert code == 0, report
    assert report["abs_diff"] <= 1e-8


def test_verify_skipped_above_cap(samples, capsys):
    _, _, a, b = samples
    code, out, err = run_cli(capsys, ["mmd", a, b, "--verify"])
    assert code == 0
    assert "oracle_value" not in json.loads(out)
    assert "skipped" in err


def test_verify_mismatch_exits_5(tmp_path, capsys, monkeypatch):
    import kdisc.cli

    a = write_csv(tmp_path / "a.csv", np.arange(5.0))
    b = write_csv(tmp_path / "b.csv", np.arange(5.0) + 0.5)
    monkeypatch.setattr(kdisc.cli, "_verify", lambda *args: 123.0)
    code, out, _ = run_cli(capsys, ["mmd", a, b, "--verify"])
    assert code == 5
    assert json.loads(out)["abs_diff"] > 1e-8


# -- hsic and ksd options ---------------------------------------------------------------


def test_hsic_split_matches_two_files(tmp_path, capsys):
    rng = np.random.default_rng(2)
    Z = rng.normal(size=(12, 3))
    one = write_csv(tmp_path / "z.csv", Z)
    x = write_csv(tmp_path / "x.csv", Z[:, :2])
    y = write_csv(tmp_path / "y.csv", Z[:, 2:])
    _, split, _ = run_cli(capsys, ["hsic", one, "--split", "2", "--kernel", "gaussian:1.0"])
    _, files, _ = run_cli(capsys, ["hsic", x, y, "--kernel", "gaussian:1.0"])
    assert split == files
    report = json.loads(split)
    assert report["d"] == 2 and report["d_y"] == 1
    assert report["value"] == hsic_v(KernelSpec("gaussian", 1.0), KernelSpec("gaussian", 1.0), Z[:, :2], Z[:, 2:])


def test_hsic_kernel_y(tmp_path, capsys):
    rng = np.random.default_rng(2)
    X, Y = rng.normal(size=(10, 1)), rng.normal(size=(10, 1))
    x, y = write_csv(tmp_path / "x.csv", X), write_csv(tmp_path / "y.csv", Y)
    _, out, _ = run_cli(capsys, ["hsic", x, y, "--kernel", "gaussian:1.0", "--kernel-y", "laplace:2.0"])
    report = json.loads(out)
    assert report["kernels"][0]["y"]["family"] == "laplace"
    assert report["value"] == hsic_v(KernelSpec("gaussian", 1.0), KernelSpec("laplace", 2.0), X, Y)


def test_hsic_collection_cap(tmp_path, capsys):
    rng = np.random.default_rng(2)
    x = write_csv(tmp_path / "x.csv", rng.normal(size=(10, 1)))
    y = write_csv(tmp_path / "y.csv", rng.normal(size=(10, 1)))
    _, out, _ = run_cli(capsys, ["hsic", x, y, "--kernel", "collection"])
    assert len(json.loads(out)["kernels"]) == 200
    _, out, _ = run_cli(capsys, ["hsic", x, y, "--kernel", "collection", "--max-kernels", "50"])
    assert len(json.loads(out)["kernels"]) == 2 * 5 * 5


def test_ksd_collection_uses_smooth_families(tmp_path, capsys):
    x = write_csv(tmp_path / "x.csv", np.random.default_rng(1).normal(size=(15, 1)))
    _, out, _ = run_cli(capsys, ["ksd", x, "--score", "gaussian:0:1", "--kernel", "collection"])
    fams = {k["family"] for k in json.loads(out)["kernels"]}
    assert fams == {"gaussian", "imq"}


# -- exit codes ------------------------------------------------------------------------


@pytest.mark.parametrize(
    "argv",
    [
        ["mmd", "A", "B", "--kernel", "cauchy:1"],
        ["mmd", "A", "B", "--kernel", "gaussian:-1"],
        ["mmd", "A", "B", "--stat", "z"],
        ["mmd", "A", "B", "--stat", "d:0"],
        ["mmd", "A", "B", "--pool", "max:3"],
        ["mmd", "A", "B", "--pool", "fuse:0"],
        ["mmd", "A", "B", "--score", "gaussian:0:1"],
        ["mmd", "A"],
        ["mmd", "A", "C", "--stat", "paired-u"],
        ["ksd", "A"],
        ["ksd", "A", "--score", "gaussian:0:-1"],
        ["ksd", "A", "--score", "gaussian:0,0,0:1"],
        ["ksd", "A", "--score", "gaussian:0:1", "--kernel", "laplace:1"],
        ["ksd", "A", "B", "--score", "gaussian:0:1"],
        ["hsic", "A"],
        ["hsic", "A", "--split", "5"],
        ["hsic", "A", "--split", "1", "--kernel", "collection", "--kernel-y", "gaussian:1"],
        ["mmd", "A", "B", "--workers", "0"],
        ["mmd", "A", "B", "--kernel", "collection", "--max-kernels", "1"],
        ["mmd", "A", "B", "--seed", "-1"],
        ["mmd", "A", "B", "--stat", "v", "--normalize", "--no-such-flag"],
        ["frobnicate", "A"],
    ],
)
def test_configuration_errors_exit_2(tmp_path, capsys, argv):
    rng = np.random.default_rng(0)
    paths = {
        "A": write_csv(tmp_path / "a.csv", rng.normal(size=(6, 2))),
        "B": write_csv(tmp_path / "b.csv", rng.normal(size=(6, 2))),
        "C": write_csv(tmp_path / "c.csv", rng.normal(size=(5, 2))),
    }
    argv = [paths.get(t, t) for t in argv]
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 2
    assert capsys.readouterr().err


def test_data_errors_exit_3(tmp_path, capsys):
    good = write_csv(tmp_path / "a.csv", np.zeros((4, 2)) + np.arange(4)[:, None])
    ragged = tmp_path / "r.csv"
    ragged.write_text("1,2\n3\n")
    other_dim = write_csv(tmp_path / "c.csv", np.arange(4.0))
    assert main(["mmd", good, str(ragged)]) == 3
    assert main(["mmd", good, other_dim]) == 3
    assert main(["mmd", good, str(tmp_path / "missing.csv")]) == 3
    same = write_csv(tmp_path / "s.csv", np.ones((4, 2)))
    assert main(["mmd", same, same, "--kernel", "gaussian:median"]) == 3
    assert "line 2" in capsys.readouterr().err


def test_degenerate_normaliser_exits_4(samples, capsys):
    _, _, a, _ = samples
    code, out, err = run_cli(capsys, ["mmd", a, a, "--stat", "paired-u", "--normalize"])
    assert code == 4
    assert out == ""
    assert "kernel 0" in err


def test_parse_stat_designs():
    assert parse_stat("x", 10, 0)[1].n1 == 5
    assert parse_stat("b:3", 10, 0)[1].block_sizes == (3, 3, 3)
    design = parse_stat("r:50:with-replacement", 10, 42)[1]
    assert design.with_replacement and design.seed == 42 and design.size == 50


def test_module_entry_point(samples):
    _, _, a, b = samples
    proc = subprocess.run(
        [sys.executable, "-m", "kdisc", "mmd", a, b, "--stat", "u"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["statistic_kind"] == "u"
