import json
import subprocess
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import pytest

from partialmatch.cli import main
from partialmatch.grid import QuantileGrid

DEMO = Path(__file__).resolve().parents[1] / "demo" / "survey.csv"
SCHEMAS = json.loads(resources.files("partialmatch").joinpath("data/schemas.json").read_text())


def write_csv(tmp_path, rows, name="in.csv"):
    p = tmp_path / name
    p.write_text("id,phase,value\n" + "\n".join(rows) + "\n")
    return p


def fully_matched(tmp_path, n=8):
    rows = []
    for k in range(n):
        rows += [f"r{k},pre,{k * 1.3 % 5}", f"r{k},post,{(k * 1.3 % 5) + 0.2 * (k % 3)}"]
    return write_csv(tmp_path, rows)


def run_json(capsys, argv):
    assert main(argv + ["--format", "json"]) == 0
    return json.loads(capsys.readouterr().out)


class TestTestCommand:
    def test_demo_default(self, capsys):
        out = run_json(capsys, ["test", str(DEMO)])
        jsonschema.validate(out, SCHEMAS["test"])
        assert out["method"] == "quantile" and out["q_source"] == "grid"
        assert out["q"] == 0.2 and out["m"] == 18 and out["n"] == 40
        assert out["match_report"]["n_blank_ids"] == 20
        assert out["match_report"]["n_matches_from_normalization"] == 4

    def test_text_output(self, capsys):
        assert main(["test", str(DEMO)]) == 0
        text = capsys.readouterr().out
        assert "statistic" in text and "n / m         40 / 18" in text

    def test_csv_output(self, capsys):
        assert main(["test", str(DEMO), "--format", "csv", "--method", "paired"]) == 0
        header, row = capsys.readouterr().out.strip().splitlines()
        assert "match_m_matched" in header.split(",")
        assert row.split(",")[header.split(",").index("method")] == "paired"

    def test_paired_vs_quantile_df(self, tmp_path, capsys):
        p = fully_matched(tmp_path)
        paired = run_json(capsys, ["test", str(p), "--method", "paired"])
        quant = run_json(capsys, ["test", str(p), "--method", "quantile", "--q", "0.5"])
        assert paired["df"] == 7 and quant["df"] == 14
        assert quant["q_source"] == "explicit"

    def test_known_rho(self, capsys):
        out = run_json(capsys, ["test", str(DEMO), "--method", "known-rho", "--rho", "0.5"])
        assert out["rho_used"] == 0.5

    def test_out_suffix_sets_format(self, tmp_path):
        dest = tmp_path / "res.json"
        assert main(["test", str(DEMO), "--out", str(dest)]) == 0
        jsonschema.validate(json.loads(dest.read_text()), SCHEMAS["test"])

    def test_three_matched_pairs(self, tmp_path):
        rows = ["a,pre,1", "a,post,2", "b,pre,2", "b,post,1", "c,pre,3", "c,post,5",
                ",pre,4", ",post,4", ",pre,7", ",post,1"]
        p = write_csv(tmp_path, rows)
        assert main(["test", str(p), "--method", "quantile", "--q", "0.3"]) == 4
        assert main(["test", str(p), "--method", "pearson"]) == 0

    def test_unequal_arms(self, tmp_path):
        p = write_csv(tmp_path, ["a,pre,1", "b,pre,2", "c,pre,3", "a,post,1", "b,post,2"])
        assert main(["test", str(p), "--method", "two-sample"]) == 6

    def test_parse_error(self, tmp_path, capsys):
        p = write_csv(tmp_path, ["a,pre,1", "a,post,oops"])
        assert main(["test", str(p)]) == 3
        assert "line 3" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["test", str(tmp_path / "nope.csv")]) == 3

    def test_degenerate(self, tmp_path):
        p = write_csv(tmp_path, ["a,pre,1", "a,post,1", "b,pre,1", "b,post,1"])
        assert main(["test", str(p), "--method", "two-sample"]) == 5

    def test_insufficient_data(self, tmp_path):
        p = write_csv(tmp_path, ["a,pre,1", "a,post,1"])
        assert main(["test", str(p)]) == 9

    def test_missing_grid_entry(self, tmp_path):
        rows = []
        for k in range(10):
            rows += [f"{'x' if k else 'a'}{k},pre,{k}", f"{'y' if k else 'a'}{k},post,{k % 4}"]
        p = write_csv(tmp_path, rows)
        # n=10 lies below the smallest bundled n (20)
        assert main(["test", str(p)]) == 7

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["test"])
        assert exc.value.code == 2


class TestSimulationCommands:
    def test_calibrate_round_trip(self, tmp_path, capsys):
        grid_path = tmp_path / "grid.csv"
        assert main(["calibrate", "--ns", "20,50", "--props", "0.25,0.5", "--rhos", "0.1,0.9",
                     "--runs", "100", "--out", str(grid_path)]) == 0
        grid = QuantileGrid.load(grid_path)
        assert grid.ns == [20, 50] and grid.rhos() == [0.1, 0.9]
        assert grid_path.read_text().splitlines()[0] == "n,prop,rho,q_star"
        out = run_json(capsys, ["test", str(DEMO), "--grid", str(grid_path)])
        assert out["q"] == grid.lookup(40, 0.45)

    def test_calibrate_range_rho(self, capsys):
        obj = run_json(capsys, ["calibrate", "--ns", "20", "--props", "0.1,0.5",
                                "--rhos", "0.1:0.9", "--runs", "50"])
        jsonschema.validate(obj, SCHEMAS["calibrate"])
        assert {e["rho"] for e in obj["entries"]} == {"0.1:0.9"}

    def test_table2_markers(self, capsys):
        obj = run_json(capsys, ["table2", "--ns", "20", "--runs", "100"])
        jsonschema.validate(obj, SCHEMAS["table2"])
        cells = {(r["prop"], r["delta"], r["method"]): r for r in obj["rows"]}
        assert not cells[(0.1, 0.0, "quantile")]["calculable"]
        assert not cells[(0.1, 0.0, "pearson")]["calculable"]
        two = [cells[(p, 0.0, "two_sample")]["rejection_rate"] for p in (0.1, 0.5, 0.9)]
        assert two[0] == two[1] == two[2]

    def test_table2_csv_marker(self, capsys):
        assert main(["table2", "--ns", "20", "--props", "0.1", "--deltas", "0",
                     "--runs", "50", "--format", "csv"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "n,prop,delta,method,q,rejection_rate,mc_se,n_effective,n_rejected"
        assert "20,0.1,0.0,quantile,-,-,-,-,-" in lines

    def test_curve(self, capsys):
        obj = run_json(capsys, ["curve", "--n", "20", "--prop", "0.5", "--runs", "500"])
        jsonschema.validate(obj, SCHEMAS["curve"])
        assert {c["method"] for c in obj["curves"]} == {"quantile", "pearson", "two_sample"}
        assert all(0 < c["rate"] < 1 for c in obj["curves"])

    def test_curve_without_grid_cell(self):
        # the bundled n=20, prop=0.1 cell is not calculable
        assert main(["curve", "--n", "20", "--prop", "0.1", "--runs", "20"]) == 7

    def test_powergap(self, capsys):
        obj = run_json(capsys, ["powergap", "--n", "20", "--props", "0.5,1.0", "--runs", "100"])
        jsonschema.validate(obj, SCHEMAS["powergap"])

    @pytest.mark.parametrize("fmt", ["text", "csv", "json"])
    def test_all_formats(self, fmt, capsys):
        for argv in (["table2", "--ns", "20", "--props", "0.5", "--deltas", "0"],
                     ["powergap", "--n", "20", "--props", "1.0"],
                     ["calibrate", "--ns", "20", "--props", "0.5", "--rhos", "0.5"]):
            assert main(argv + ["--runs", "30", "--format", fmt]) == 0
            assert capsys.readouterr().out.strip()

    def test_bad_runs(self):
        with pytest.raises(SystemExit):
            main(["powergap", "--runs", "0"])


SUBCOMMANDS = [
    ["calibrate", "--ns", "20", "--props", "0.25,0.5", "--rhos", "0.1,0.9"],
    ["table2", "--ns", "20", "--deltas", "0,0.5"],
    ["curve", "--n", "20", "--prop", "0.5"],
    ["powergap", "--n", "20", "--props", "0.5,1.0"],
]


@pytest.mark.parametrize("argv", SUBCOMMANDS, ids=lambda a: a[0])
def test_threads_byte_identical(argv, tmp_path):
    outputs = []
    for threads in (1, 2, 8):
        dest = tmp_path / f"{argv[0]}-{threads}.csv"
        assert main(argv + ["--runs", "1100", "--seed", "7", "--threads", str(threads),
                            "--out", str(dest)]) == 0
        outputs.append(dest.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "partialmatch", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
