import json

import pytest

from sketchnewton.cli import main

MANIFEST = {
    "problems": [
        {
            "id": "qp-unit",
            "kind": "qp",
            "Q": [[1.0, 0.0], [0.0, 1.0]],
            "g": [0.0, 0.0],
            "A": [[1.0, 1.0]],
            "b": [1.0],
        }
    ],
    "methods": ["adasketch-gv", "byrd"],
    "seeds": [0, 1],
}


@pytest.fixture
def manifest_path(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(MANIFEST))
    return str(path)


def test_run_csv(manifest_path, tmp_path):
    out = tmp_path / "records.csv"
    assert main(["run", manifest_path, "--out", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0].startswith("problem_id,method_id,seed,status")
    assert len(lines) == 1 + 3  # two seeds of the randomized method + one byrd

def test_run_json_then_profile_and_trace(manifest_path, tmp_path):
    records = tmp_path / "records.json"
    main(["run", manifest_path, "--format", "json", "--out", str(records)])
    payload = json.loads(records.read_text())
    assert len(payload) == 3

    profile_out = tmp_path / "profile.csv"
    main(["profile", str(records), "--out", str(profile_out)])
    assert profile_out.read_text().startswith("method,tau,rho")

    trace_out = tmp_path / "trace.csv"
    main(["trace", str(records), "--out", str(trace_out)])
    header, *rows = trace_out.read_text().strip().split("\n")
    assert header == "problem_id,method_id,seed,k,kkt_norm,log_err"
    assert rows


def test_seed_list_override(manifest_path, tmp_path):
    out = tmp_path / "records.csv"
    main(["run", manifest_path, "--seed-list", "5", "--out", str(out)])
    lines = out.read_text().strip().split("\n")
    assert len(lines) == 1 + 2  # one seed + byrd


def test_kkt_tol_override_changes_status(manifest_path, tmp_path):
    out = tmp_path / "records.csv"
    main(["run", manifest_path, "--kkt-tol", "1e-12", "--max-outer", "0", "--out", str(out)])
    body = out.read_text()
    assert "max_iter" in body


def test_byte_identical_reruns(manifest_path, tmp_path):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["run", manifest_path, "--out", str(out1)])
    main(["run", manifest_path, "--out", str(out2)])
    assert out1.read_bytes() == out2.read_bytes()


def test_profile_json_format(manifest_path, tmp_path):
    records = tmp_path / "records.json"
    main(["run", manifest_path, "--format", "json", "--out", str(records)])
    out = tmp_path / "profile.json"
    main(["profile", str(records), "--format", "json", "--out", str(out)])
    payload = json.loads(out.read_text())
    assert {entry["method"] for entry in payload} == {"adasketch-gv", "byrd"}
    for entry in payload:
        rhos = [rho for _, rho in entry["points"]]
        assert all(a <= b for a, b in zip(rhos, rhos[1:]))


def test_sweep_csv(manifest_path, tmp_path):
    out = tmp_path / "sweep.csv"
    main(["sweep", manifest_path, "--out", str(out)])
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "param,value,mean_obj_cons,all_converged"
    assert len(lines) == 1 + 12


def test_stdout_default(manifest_path, capsys):
    main(["run", manifest_path])
    captured = capsys.readouterr()
    assert captured.out.startswith("problem_id,")
