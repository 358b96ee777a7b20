"""Challenge generation/grading, determinism and sealing, demos, CLI."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from vlab.core import Rng, load_iq, save_iq
from vlab.trainer import (
    ChallengeKind,
    ChallengeScenario,
    Difficulty,
    generate_challenge,
    grade_submission,
    run_module_demo,
    solve_challenge,
)


def gen(kind, difficulty, trainee, seed, out):
    scenario = ChallengeScenario(kind=kind, difficulty=difficulty,
                                 trainee_id=trainee, seed=seed)
    visible, truth = generate_challenge(scenario, out)
    stem = f"{kind.value}_{trainee}_{seed}"
    return visible, truth, out / f"{stem}.iq"


class TestDeterminismAndSealing:
    def test_same_scenario_bit_identical(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            gen(ChallengeKind.HIDDEN_MESSAGE, Difficulty.MEDIUM, "alice", 42, out)
        name = "hidden-message_alice_42.iq"
        assert (a / name).read_bytes() == (b / name).read_bytes()
        assert (a / name).with_suffix(".meta.json").read_text() == \
            (b / name).with_suffix(".meta.json").read_text()

    def test_individualization(self, tmp_path):
        _, truth_a, _ = gen(ChallengeKind.HIDDEN_MESSAGE, Difficulty.EASY,
                            "alice", 7, tmp_path / "a")
        _, truth_b, _ = gen(ChallengeKind.HIDDEN_MESSAGE, Difficulty.EASY,
                            "bob", 7, tmp_path / "b")
        assert truth_a["message"] != truth_b["message"]
        assert truth_a["snr_db"] == truth_b["snr_db"]

    def test_sealed_truth_not_in_visible_artifacts(self, tmp_path):
        visible, truth, iq_path = gen(ChallengeKind.HIDDEN_MESSAGE,
                                      Difficulty.EASY, "carol", 3, tmp_path)
        secret = truth["message"].encode()
        assert secret not in iq_path.read_bytes()
        scenario_file = iq_path.with_name("hidden-message_carol_3.scenario.json")
        assert secret not in scenario_file.read_bytes()
        meta = iq_path.with_suffix(".meta.json")
        assert secret not in meta.read_bytes()
        # the truth file is a separate artifact
        assert (tmp_path / "hidden-message_carol_3.truth.json").exists()


class TestGradingRules:
    def _scenario(self, kind):
        return {"kind": kind.value, "difficulty": "easy", "trainee_id": "t",
                "seed": 0, "params": {"candidates": ["bpsk", "qpsk"]}}

    def test_exact_message_full_score(self):
        report = grade_submission(self._scenario(ChallengeKind.HIDDEN_MESSAGE),
                                  {"message": "ABCD"}, {"message": "ABCD"})
        assert report.score == 1.0

    def test_half_characters_half_score(self):
        report = grade_submission(self._scenario(ChallengeKind.HIDDEN_MESSAGE),
                                  {"message": "ABCD"}, {"message": "ABXY"})
        assert report.score == 0.5

    def test_filter_param_tolerance(self):
        truth = {"kind": "rrc", "value": 0.35}
        ok = grade_submission(self._scenario(ChallengeKind.FILTER_PARAMS),
                              truth, {"kind": "rrc", "value": 0.30})
        bad = grade_submission(self._scenario(ChallengeKind.FILTER_PARAMS),
                               truth, {"kind": "rrc", "value": 0.50})
        assert ok.score == 1.0
        assert bad.score == 0.0

    def test_cfo_two_percent_rule(self):
        truth = {"cfo_hz": 100.0, "ambiguity_hz": 992.0}
        ok = grade_submission(self._scenario(ChallengeKind.CFO_HUNT), truth,
                              {"cfo_hz": 100.0 + 0.019 * 992.0})
        bad = grade_submission(self._scenario(ChallengeKind.CFO_HUNT), truth,
                               {"cfo_hz": 100.0 + 0.021 * 992.0})
        assert ok.score == 1.0
        assert bad.score == 0.0

    def test_slot_overlap_ratio(self):
        truth = {"start": 1000, "stop": 2000}
        exact = grade_submission(self._scenario(ChallengeKind.SLOT_LOCATION),
                                 truth, {"start": 1000, "stop": 2000})
        half = grade_submission(self._scenario(ChallengeKind.SLOT_LOCATION),
                                truth, {"start": 1500, "stop": 2500})
        assert exact.score == 1.0
        assert half.score == pytest.approx(1.0 / 3.0)

    def test_kind_mismatch_rejected(self):
        with pytest.raises(ValueError):
            grade_submission({"kind": "no-such-kind", "params": {}}, {}, {})


class TestSolvers:
    @pytest.mark.parametrize("kind", list(ChallengeKind))
    def test_easy_solvable(self, kind, tmp_path):
        visible, truth, iq_path = gen(kind, Difficulty.EASY, "dave", 11, tmp_path)
        signal = load_iq(iq_path)
        answer = solve_challenge(visible, signal)
        report = grade_submission(visible, truth, answer)
        assert report.score >= 0.9


class TestDemos:
    @pytest.mark.parametrize("module_id", range(1, 10))
    def test_demo_produces_artifacts(self, module_id, tmp_path):
        out = tmp_path / f"m{module_id}"
        summary = run_module_demo(module_id, out, seed=1)
        assert (out / "summary.json").exists()
        assert "observations" in summary
        produced = list(out.iterdir())
        assert len(produced) >= 2  # summary plus at least one data file

    def test_module6_evm_monotone(self, tmp_path):
        summary = run_module_demo(6, tmp_path, seed=2)
        evms = summary["observations"]["evm_by_bits"]
        ordered = [evms[k] for k in sorted(evms, key=int)]
        assert ordered == sorted(ordered, reverse=True)

    def test_module5_cdma_ccdf_ordering(self, tmp_path):
        summary = run_module_demo(5, tmp_path, seed=3)
        papr = summary["observations"]["papr_by_codes"]
        ordered = [papr[k] for k in sorted(papr, key=int)]
        assert ordered[-1] > ordered[0]

    def test_module9_cp_step(self, tmp_path):
        summary = run_module_demo(9, tmp_path, seed=4)
        ber = summary["observations"]["ber_by_cp"]
        assert ber["8"] > 1e-2
        assert ber["32"] < 1e-4

    def test_invalid_module_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            run_module_demo(10, tmp_path)


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "vlab.cli", *args],
        capture_output=True, text=True, timeout=300,
    )


class TestCli:
    def test_demo_command(self, tmp_path):
        proc = run_cli("demo", "6", "--out", str(tmp_path), "--seed", "5")
        assert proc.returncode == 0
        assert (tmp_path / "summary.json").exists()

    def test_challenge_gen_and_grade_roundtrip(self, tmp_path):
        proc = run_cli("challenge", "gen", "--kind", "cfo-hunt", "--difficulty",
                       "easy", "--trainee", "eve", "--seed", "9", "--out",
                       str(tmp_path))
        assert proc.returncode == 0
        stem = "cfo-hunt_eve_9"
        scenario_file = tmp_path / f"{stem}.scenario.json"
        truth_file = tmp_path / f"{stem}.truth.json"
        assert scenario_file.exists() and truth_file.exists()

        visible = json.loads(scenario_file.read_text())
        signal = load_iq(tmp_path / f"{stem}.iq")
        answer = solve_challenge(visible, signal)
        answer_file = tmp_path / "answer.json"
        answer_file.write_text(json.dumps(answer))

        graded = run_cli("challenge", "grade", "--scenario", str(scenario_file),
                         "--truth", str(truth_file), "--answer", str(answer_file))
        assert graded.returncode == 0
        assert json.loads(graded.stdout)["score"] == 1.0

    def test_analyze_outputs(self, tmp_path):
        from vlab.core import IqSignal

        rng = Rng(1)
        sig = IqSignal(rng.complex_normal(8192), 1e6)
        save_iq(sig, tmp_path / "cap.iq")
        proc = run_cli("analyze", str(tmp_path / "cap.iq"), "--psd", "--ccdf",
                       "--eye", "8", "--spectrogram", "--out", str(tmp_path))
        assert proc.returncode == 0
        produced = json.loads(proc.stdout)["produced"]
        assert len(produced) == 4
        for path in produced:
            assert Path(path).exists()

    def test_validation_error_exit_code_2(self, tmp_path):
        proc = run_cli("analyze", str(tmp_path / "missing.iq"), "--psd")
        assert proc.returncode == 2

    def test_bad_flag_exit_code_2(self):
        proc = run_cli("challenge", "gen", "--kind", "bogus", "--difficulty",
                       "easy", "--trainee", "x", "--seed", "1", "--out", "/tmp")
        assert proc.returncode == 2
