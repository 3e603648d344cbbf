import json
import math
import subprocess
import sys

import pytest

from sem_model import cli
from sem_model.cli import ConfigError, load_config, main, parse_tables_csv


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2) if not isinstance(doc, str) else doc)
    return str(path)


BASE = {"x": [1, 1], "y": [1, 1], "flavor": "poisson", "Pi": [[4, 5], [5, 6]], "seed": 7}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def as_floats(rows):
    return [[float(v) if v not in ("", "True", "False") else v for v in row] for row in rows]


class TestConfig:
    def test_unequal_totals(self, tmp_path, capsys):
        path = write(tmp_path, {**BASE, "y": [1, 2]})
        code, _, err = run(capsys, "exact", "--config", path)
        assert code == 2
        assert "sum(x)" in err and "sum(y)" in err
        # the message points at the line of the offending field
        line = open(path).read().split("\n").index('  "y": [') + 1
        assert f"{path}:{line}: y:" in err

    def test_unknown_field(self, tmp_path):
        path = write(tmp_path, {**BASE, "pi": [[1, 1], [1, 1]]})
        with pytest.raises(ConfigError, match=r"cfg.json:\d+: pi: unknown field"):
            load_config(path)

    def test_bad_json_line(self, tmp_path):
        path = write(tmp_path, '{\n  "x": [1, 1],\n  "y": [1, 1]\n  "flavor": "poisson"\n}')
        with pytest.raises(ConfigError, match=r"cfg.json:4: invalid JSON"):
            load_config(path)

    @pytest.mark.parametrize("patch,field", [
        ({"Pi": [[1, 1], [1, -1]]}, "Pi"),
        ({"Pi": [[1, 1, 1], [1, 1, 1], [1, 1, 1]]}, "Pi"),
        ({"flavor": "gamma"}, "flavor"),
        ({"runs": 0}, "runs"),
        ({"seed": -1}, "seed"),
        ({"t": [-1]}, "t"),
        ({"alpha": [1, 1], "beta": [1, 1]}, "alpha"),
        ({"k": 3}, "k"),
    ])
    def test_field_errors(self, tmp_path, patch, field):
        path = write(tmp_path, {**BASE, **patch})
        with pytest.raises(ConfigError, match=rf":\d+: {field}:"):
            load_config(path)

    def test_bernoulli_time_must_be_integer(self, tmp_path):
        path = write(tmp_path, {**BASE, "flavor": "bernoulli", "Pi": [[0.5, 0.5], [0.5, 0.5]], "t": [1.5]})
        with pytest.raises(ConfigError, match="t: Bernoulli times must be integers"):
            load_config(path)

    def test_schedule_file(self, tmp_path):
        (tmp_path / "s.txt").write_text("# horizon: 4\nF1 1 2\nF2 0.5\nM1 3\n")
        path = write(tmp_path, {"x": [1, 1], "y": [1, 1], "P": [[1, 1], [1, 1]], "schedule": "s.txt"})
        cfg = load_config(path)
        assert cfg.schedule is not None and cfg.law is None

    def test_bad_schedule_file(self, tmp_path):
        (tmp_path / "s.txt").write_text("F1 2 1\n")
        path = write(tmp_path, {"x": [1, 1], "y": [1, 1], "P": [[1, 1], [1, 1]], "schedule": "s.txt"})
        with pytest.raises(ConfigError, match="schedule:.*line 1"):
            load_config(path)


class TestCommands:
    def test_exact_rows(self, tmp_path, capsys):
        code, out, _ = run(capsys, "exact", "--config", write(tmp_path, BASE), "--t", "1")
        assert code == 0
        tables = parse_tables_csv(out)
        header, rows = tables["qt_pmf"]
        assert header == ["t", "q_11", "q_12", "q_21", "q_22", "probability"]
        zero = [r for r in as_floats(rows) if r[1:5] == [0, 0, 0, 0]]
        assert zero[0][5] == pytest.approx(math.exp(-10), rel=1e-12)

    def test_exact_refuses_unbalanced(self, tmp_path, capsys):
        code, _, err = run(capsys, "exact", "--config", write(tmp_path, {**BASE, "Pi": [[1, 1], [1, 2]]}))
        assert code == 3 and "NotFineBalanced" in err

    def test_dynamics(self, tmp_path, capsys):
        doc = {**BASE, "Pi": [[1, 1], [1, 2]]}
        code, out, _ = run(capsys, "dynamics", "--config", write(tmp_path, doc), "--dump")
        assert code == 0
        tables = parse_tables_csv(out)
        assert float(tables["terminal_expectation"][1][0][0]) == pytest.approx(0.6)
        gen = as_floats(tables["generator"][1])
        to_11 = [r for r in gen if r[:4] == [0, 0, 0, 0] and r[4:8] == [1, 0, 0, 0]]
        assert to_11[0][8] == pytest.approx(0.5)

    def test_classify(self, tmp_path, capsys):
        doc = {**BASE, "flavor": "bernoulli", "Pi": [[0.2, 0.5], [0.5, 0.2]]}
        code, out, _ = run(capsys, "classify", "--config", write(tmp_path, doc))
        tables = parse_tables_csv(out)
        assert code == 0
        verdict, disc = tables["trichotomy"][1][0]
        assert verdict == "Heterogamous" and float(disc) == pytest.approx(-0.39)
        assert tables["fine_balance"][1][0][0] == "False"
        assert "decomposition" not in tables

    def test_simulate_single_run(self, tmp_path, capsys):
        code, out, _ = run(capsys, "simulate", "--config", write(tmp_path, BASE))
        assert code == 0
        header, rows = parse_tables_csv(out)["runs"]
        assert len(rows) == 1 and header[:3] == ["run", "seed", "T"]

    def test_simulate_empirical(self, tmp_path, capsys):
        code, out, _ = run(capsys, "simulate", "--config", write(tmp_path, BASE), "--runs", "2000", "--empirical-pmf")
        assert code == 0
        _, rows = parse_tables_csv(out)["empirical_pmf"]
        assert sum(int(r[4]) for r in rows) == 2000

    @pytest.mark.parametrize("command", ["exact", "dynamics", "classify", "simulate"])
    def test_csv_json_equivalent(self, tmp_path, capsys, command):
        path = write(tmp_path, {**BASE, "t": [0.5], "runs": 3})
        _, csv_out, _ = run(capsys, command, "--config", path)
        _, json_out, _ = run(capsys, command, "--config", path, "--format", "json")
        csv_tables = parse_tables_csv(csv_out)
        doc = json.loads(json_out)
        assert doc["command"] == command
        assert list(csv_tables) == list(doc["tables"])
        for name, body in doc["tables"].items():
            header, rows = csv_tables[name]
            assert header == body["columns"]
            assert len(rows) == len(body["rows"])
            for crow, jrow in zip(rows, body["rows"]):
                for c, j in zip(crow, jrow):
                    if isinstance(j, bool):
                        assert c == str(j)
                    elif isinstance(j, int):
                        assert int(c) == j
                    elif isinstance(j, float):
                        assert float(c) == j
                    elif j is None:
                        assert c == ""
                    else:
                        assert c == j

    def test_deterministic(self, tmp_path, capsys):
        path = write(tmp_path, {**BASE, "runs": 20})
        first = run(capsys, "simulate", "--config", path)[1]
        assert run(capsys, "simulate", "--config", path)[1] == first
        assert run(capsys, "simulate", "--config", path, "--seed", "8")[1] != first

    def test_out_file(self, tmp_path, capsys):
        target = tmp_path / "o.json"
        code, out, _ = run(capsys, "classify", "--config", write(tmp_path, BASE), "--out", str(target), "--format", "json")
        assert code == 0 and out == ""
        assert json.loads(target.read_text())["command"] == "classify"

    def test_missing_subcommand(self, capsys):
        assert main([]) == 2


class TestVerify:
    def test_passes(self, tmp_path, capsys):
        doc = {**BASE, "Pi": [[1, 2], [0.5, 1]], "runs": 20000}
        code, out, err = run(capsys, "verify", "--config", write(tmp_path, doc))
        assert code == 0
        assert err.count("PASS") >= 3 and "FAIL" not in err

    def test_fails_with_exit_one(self, tmp_path, capsys, monkeypatch):
        real = cli.empirical_terminal_pmf

        def skewed(*args, **kwargs):
            pmf, counts = real(*args, **kwargs)
            key = max(counts, key=counts.get)
            counts[key] += sum(counts.values())
            return pmf, counts

        monkeypatch.setattr(cli, "empirical_terminal_pmf", skewed)
        doc = {**BASE, "runs": 5000}
        code, _, err = run(capsys, "verify", "--config", write(tmp_path, doc))
        assert code == 1 and "FAIL engine_vs_absorbing" in err

    def test_schedule_pairlist(self, tmp_path, capsys):
        (tmp_path / "s.txt").write_text("F1 1 4\nF2 2.5\nF3 0.3 7\nM2 1.5\n# horizon: 7\n")
        doc = {"x": [2, 1], "y": [1, 2], "P": [[1, 1], [1, 1]], "schedule": "s.txt", "runs": 30000}
        code, _, err = run(capsys, "verify", "--config", write(tmp_path, doc))
        assert code == 0 and "PASS pairlist_uniform" in err


def test_module_entry_point(tmp_path):
    path = write(tmp_path, BASE)
    proc = subprocess.run([sys.executable, "-m", "sem_model", "classify", "--config", path],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "# table: trichotomy" in proc.stdout
