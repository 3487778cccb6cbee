import argparse
import shutil
from pathlib import Path

import pytest

from tendermint_sim.cli import (
    EXIT_FAIL, EXIT_OK, EXIT_USAGE, OUT_DIR_ENV, main, parse_checkers, parse_seeds,
)
from tendermint_sim.scenario import load_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path))
    return tmp_path


class TestParsing:
    @pytest.mark.parametrize("text,seeds", [
        ("3", [0, 1, 2]), ("5:8", [5, 6, 7]), ("4, 9", [4, 9]),
    ])
    def test_seeds(self, text, seeds):
        assert parse_seeds(text) == seeds

    @pytest.mark.parametrize("text", ["x", "0", "3:3", "1,a"])
    def test_bad_seeds(self, text):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_seeds(text)

    def test_checkers(self):
        assert parse_checkers("agreement, validity") == ["agreement", "validity"]
        with pytest.raises(argparse.ArgumentTypeError):
            parse_checkers("agreement,liveliness")


class TestRun:
    def test_run_writes_trace(self, out, capsys):
        code = main(["run", "--scenario", str(SCENARIOS / "happy.ini"), "--check"])
        assert code == EXIT_OK
        trace = out / "happy-seed0.jsonl"
        assert trace.exists()
        text = capsys.readouterr().out
        assert "status: complete" in text and "agreement: pass" in text

    def test_seed_override_and_out(self, out):
        path = out / "sub" / "t.jsonl"
        code = main(["run", "--scenario", str(SCENARIOS / "conflicting-voter.ini"),
                     "--seed", "11", "--heights", "1", "--out", str(path)])
        assert code == EXIT_OK and '"seed":11' in path.read_text().splitlines()[0]

    def test_liveness_failure_exits_one(self, out, tmp_path):
        ini = tmp_path / "stuck.ini"
        text = (SCENARIOS / "happy.ini").read_text()
        ini.write_text(text.replace("gst = 0", "gst = never\nasync_delay = 1000000")
                       .replace("heights = 3", "heights = 1\nmax_rounds = 1"))
        assert load_scenario(ini).gst is None
        assert main(["run", "--scenario", str(ini)]) == EXIT_FAIL


class TestCheckReplay:
    def _trace(self, out):
        main(["run", "--scenario", str(SCENARIOS / "weighted-silent.ini")])
        return out / "weighted-silent-seed1.jsonl"

    def test_check(self, out, capsys):
        trace = self._trace(out)
        code = main(["check", "--scenario", str(SCENARIOS / "weighted-silent.ini"),
                     "--trace", str(trace), "--checkers", "agreement,termination"])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[-2].startswith("agreement: pass") and lines[-1].startswith("termination: pass")

    def test_check_detects_tampering(self, out):
        trace = self._trace(out)
        lines = trace.read_text().splitlines()
        # change the value id of the last decision so two processes disagree
        i = max(i for i, line in enumerate(lines) if '"k":"decide"' in line)
        lines[i] = lines[i].replace('"id":"', '"id":"00', 1)
        trace.write_text("\n".join(lines) + "\n")
        code = main(["check", "--scenario", str(SCENARIOS / "weighted-silent.ini"),
                     "--trace", str(trace), "--checkers", "agreement"])
        assert code == EXIT_FAIL

    def test_replay_pass_and_fail(self, out, capsys):
        trace = self._trace(out)
        ini = str(SCENARIOS / "weighted-silent.ini")
        assert main(["replay", "--scenario", ini, "--trace", str(trace)]) == EXIT_OK
        assert main(["replay", "--scenario", ini, "--trace", str(trace), "--seed", "2"]) == EXIT_FAIL
        lines = trace.read_text().splitlines()
        lines[5] = lines[5].replace('"t":', '"t":1', 1)
        trace.write_text("\n".join(lines) + "\n")
        assert main(["replay", "--scenario", ini, "--trace", str(trace)]) == EXIT_FAIL
        assert "record 5 differs" in capsys.readouterr().out

    def test_replay_copied_trace_default_seed(self, out, tmp_path):
        trace = self._trace(out)
        copy = tmp_path / "copy.jsonl"
        shutil.copy(trace, copy)
        assert main(["replay", "--scenario", str(SCENARIOS / "weighted-silent.ini"),
                     "--trace", str(copy)]) == EXIT_OK


class TestFuzz:
    def test_fuzz(self, out, capsys):
        code = main(["fuzz", "--scenario", str(SCENARIOS / "conflicting-voter.ini"),
                     "--seeds", "0:5", "--heights", "1", "--keep-all"])
        assert code == EXIT_OK
        assert len(list((out / "fuzz-conflicting-voter").iterdir())) == 5
        assert capsys.readouterr().out.startswith("seeds: 5  runs: complete=5")


class TestErrors:
    def test_missing_file(self, out, capsys):
        assert main(["run", "--scenario", str(out / "nope.ini")]) == EXIT_USAGE
        assert capsys.readouterr().err.startswith("tmsim: error:")

    def test_bad_scenario(self, out, tmp_path):
        ini = tmp_path / "bad.ini"
        ini.write_text("[validators]\npowers = 1,1\n")
        assert main(["run", "--scenario", str(ini)]) == EXIT_USAGE

    def test_argparse_usage(self):
        with pytest.raises(SystemExit) as exc:
            main(["fuzz", "--scenario", "x.ini", "--seeds", "zz"])
        assert exc.value.code == EXIT_USAGE
