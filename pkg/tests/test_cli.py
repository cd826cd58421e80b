import json

import pytest

from rrdps_lab.cli import main, parse_config, run
from rrdps_lab.errors import ParameterError, UsageError
from rrdps_lab.reporting import ResultEnvelope, canonical_json, emit, samples_csv


def payload_bytes(path):
    """Envelope bytes with the non-deterministic fields stripped."""
    data = json.loads(path.read_text())
    data.pop("duration_seconds")
    data.pop("threads")
    return canonical_json(data)


class TestParseConfig:
    def test_valid_attack1(self):
        cfg = parse_config(["attack1", "--n", "1001", "--rounds", "10000",
                            "--seed", "7"])
        assert cfg.command == "attack1"
        assert cfg.params["n"] == 1001
        assert cfg.seed == 7

    def test_rejects_even_n_at_parse_time(self, capsys):
        assert main(["attack1", "--n", "1000"]) == 2
        assert "odd" in capsys.readouterr().err

    def test_scan_requires_seed(self, capsys):
        assert main(["coverage-scan", "--m", "10", "--n", "50"]) == 2
        assert "--seed" in capsys.readouterr().err

    def test_session_seed_defaults_to_zero(self):
        cfg = parse_config(["honest", "--L", "3", "--rounds", "5"])
        assert cfg.seed == 0

    def test_flags_override_config_file(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("# scan setup\ntrials = 100\nm = 17\nseed = 3\n")
        cfg = parse_config(["coverage-scan", "--config", str(config),
                            "--trials", "1000", "--n", "50"])
        assert cfg.params["trials"] == 1000   # flag wins
        assert cfg.params["m"] == 17          # file value survives
        assert cfg.seed == 3

    def test_unknown_config_key_rejected(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("bogus = 1\n")
        with pytest.raises(UsageError, match="bogus"):
            parse_config(["honest", "--config", str(config)])

    def test_malformed_config_value_names_key(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("rounds = ten\n")
        with pytest.raises(UsageError, match="rounds"):
            parse_config(["honest", "--config", str(config)])

    def test_graph_scan_needs_one_model(self, capsys):
        assert main(["graph-scan", "--n", "100", "--seed", "1"]) == 2
        assert main(["graph-scan", "--n", "100", "--p", "0.1", "--M", "5",
                     "--seed", "1"]) == 2

    def test_mix_prob_range(self, capsys):
        assert main(["attack2", "--mix-prob", "1.5"]) == 2

    def test_negative_seed_rejected(self):
        assert main(["honest", "--seed", "-1"]) == 2


class TestRun:
    def test_honest_payload(self):
        cfg = parse_config(["honest", "--L", "4", "--rounds", "200", "--seed", "5"])
        env = run(cfg)
        assert env.payload["qber"] == 0.0
        assert env.payload["announced"] + env.payload["losses"] == 200
        assert len(env.samples) == 200
        assert env.all_claims_pass

    def test_identical_config_identical_payload(self, tmp_path):
        argv = ["attack2", "--L", "4", "--rounds", "500", "--seed", "9",
                "--threads", "1"]
        a = run(parse_config(argv))
        b = run(parse_config(argv + ["--threads", "4"]))
        assert canonical_json(a.payload) == canonical_json(b.payload)
        assert canonical_json(a.samples) == canonical_json(b.samples)

    def test_scaling_fit_payload(self):
        cfg = parse_config(["graph-scan", "--n", "300,1000", "--critical",
                            "--trials", "50", "--seed", "2"])
        env = run(cfg)
        assert env.payload["ns"] == [300, 1000]
        assert "exponent" in env.payload

    def test_runtime_error_wrapped_as_usage(self):
        cfg = parse_config(["honest", "--L", "4", "--rounds", "10"])
        cfg.params["L"] = 1  # bypass validation to hit the module error
        with pytest.raises(UsageError, match="honest"):
            run(cfg)


class TestEmit:
    def _envelope(self):
        return ResultEnvelope("honest", {"L": 3}, 1, 2, 0.5,
                              {"qber": 0.0, "rounds": 2},
                              [{"round": 0, "r": 1}, {"round": 1, "r": 2}],
                              [{"claim": "x", "pass": True}])

    def test_json_roundtrip(self, tmp_path):
        env = self._envelope()
        path = emit(env, "json", tmp_path / "out.json")
        data = json.loads(path.read_text())
        assert data["payload"]["qber"] == 0.0
        assert canonical_json(data) == canonical_json(env.to_dict())

    def test_emitted_twice_identical_bytes(self, tmp_path):
        env = self._envelope()
        a = emit(env, "json", tmp_path / "a.json").read_bytes()
        b = emit(env, "json", tmp_path / "b.json").read_bytes()
        assert a == b

    def test_csv_has_header_plus_rows(self, tmp_path):
        env = self._envelope()
        path = emit(env, "csv", tmp_path / "out.csv")
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "r,round"
        assert len(lines) == 3

    def test_csv_quotes_special_cells(self):
        text = samples_csv([{"a": 'x,"y'}])
        assert text.splitlines()[1] == '"x,""y"'

    def test_float_serialisation_roundtrips(self):
        for value in (0.5, 1 / 3, 1e-300, 2.0 ** 52 + 0.5, 0.31606027941427883):
            assert json.loads(canonical_json(value)) == value

    def test_keys_sorted(self):
        assert canonical_json({"b": 1, "a": 2}) == '{"a": 2, "b": 1}'

    def test_rejects_non_finite(self):
        with pytest.raises(ParameterError):
            canonical_json(float("nan"))

    def test_no_partial_file_on_unwritable_path(self, tmp_path):
        target = tmp_path / "missing" / "deep"
        # parent is created by emit; a file in the way makes it fail
        blocker = tmp_path / "blocked"
        blocker.write_text("")
        with pytest.raises(OSError):
            emit(self._envelope(), "json", blocker / "x.json")


class TestMainEndToEnd:
    def test_scan_csv_line_count(self, tmp_path, capsys):
        out = tmp_path / "scan.csv"
        code = main(["coverage-scan", "--m", "20", "--n", "100", "--trials",
                     "50", "--seed", "3", "--out", str(out), "--format", "csv"])
        assert code == 0
        assert len(out.read_text().strip().split("\n")) == 51

    def test_byte_identical_across_thread_counts(self, tmp_path):
        outs = []
        for threads in ("1", "3"):
            out = tmp_path / f"scan_{threads}.json"
            code = main(["graph-scan", "--n", "200", "--M", "100", "--trials",
                         "30", "--seed", "11", "--threads", threads,
                         "--out", str(out)])
            assert code == 0
            outs.append(out)
        assert payload_bytes(outs[0]) == payload_bytes(outs[1])

    def test_claim_failure_exits_one(self, tmp_path):
        # a threshold no critical graph reaches: every trial fails the claim
        code = main(["graph-scan", "--n", "100", "--M", "5", "--threshold",
                     "90", "--trials", "20", "--seed", "1"])
        assert code == 1

    def test_verdict_lines_printed(self, capsys):
        code = main(["phase-error", "--n", "11"])
        out = capsys.readouterr().out
        assert code == 0
        assert "claim:" in out and "PASS" in out

    def test_plot_files_written(self, tmp_path):
        plots = tmp_path / "figs"
        code = main(["honest", "--L", "3", "--rounds", "50", "--seed", "2",
                     "--plot-dir", str(plots)])
        assert code == 0
        assert list(plots.glob("*.png"))
