import json
import subprocess
import sys

import numpy as np
import pytest

from voicemask import cli, synth
from voicemask.audio import AudioClip, read_wav, write_wav
from voicemask.keywords import SafewordBank, read_substitution_log, save_safeword_bank


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("ws")
    rng = np.random.default_rng(3)
    kw = synth.render_word(synth.random_word(rng, n_phones=(5, 5)))
    filler = synth.render_word(synth.random_word(rng, n_phones=(4, 4)), f0_hz=140)
    (d / "clips").mkdir()
    write_wav(AudioClip(kw), d / "clips" / "therapy.wav")
    (d / "keywords.json").write_text(json.dumps(
        [{"label": "group therapy", "category": "singular-noun", "clip": "clips/therapy.wav"}]))
    bank = SafewordBank({"singular-noun": [("meeting", AudioClip(synth.vowel(160, 0.3)))]})
    save_safeword_bank(bank, d / "bank")
    gap = np.zeros(3200)
    x = np.concatenate([gap, filler, gap, kw, gap, filler, gap])
    write_wav(AudioClip(x), d / "in.wav")
    (d / "transcript.txt").write_text("I have to attend a meeting tomorrow")
    return d


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def sanitize(capsys, ws, tag, *extra):
    return run(capsys, "sanitize", "--input", ws / "in.wav", "--output", ws / f"{tag}.wav",
               "--log", ws / f"{tag}.jsonl", "--keywords", ws / "keywords.json",
               "--safewords", ws / "bank", "--seed", 7, *extra)


def test_sanitize_then_restore(capsys, workspace):
    code, out, _ = sanitize(capsys, workspace, "a")
    assert code == 0
    summary = json.loads(out)
    assert [d["keyword"] for d in summary["detections"]] == ["group therapy"]
    recs = read_substitution_log(workspace / "a.jsonl")
    assert [(r.keyword, r.safeword) for r in recs] == [("group therapy", "meeting")]
    out_clip = read_wav(workspace / "a.wav")
    assert out_clip.sample_rate_hz == 16000 and len(out_clip) > 0
    code, out, err = run(capsys, "restore", "--input", workspace / "transcript.txt",
                         "--log", workspace / "a.jsonl")
    assert code == 0 and err == ""
    assert out == "I have to attend a group therapy tomorrow"


def test_sanitize_is_deterministic(capsys, workspace):
    sanitize(capsys, workspace, "b")
    sanitize(capsys, workspace, "c")
    assert (workspace / "b.wav").read_bytes() == (workspace / "c.wav").read_bytes()
    assert (workspace / "b.jsonl").read_text() == (workspace / "c.jsonl").read_text()


def test_sanitize_bench_block(capsys, workspace):
    code, out, _ = sanitize(capsys, workspace, "d", "--bench")
    bench = json.loads(out)["bench"]
    assert code == 0
    assert set(bench["cpu_time_s"]) == {"pitch_marking", "voice_conversion",
                                        "keyword_spotting", "substitution", "total"}
    assert bench["realtime_coefficient"]["total"] > 0


def test_sanitize_segmented(capsys, workspace):
    code, out, _ = sanitize(capsys, workspace, "e", "--segmented")
    assert code == 0 and len(json.loads(out)["segments"]) >= 2


def test_sanitize_without_bank_fails(capsys, workspace):
    code, out, err = run(capsys, "sanitize", "--input", workspace / "in.wav",
                         "--output", workspace / "x.wav", "--log", workspace / "x.jsonl",
                         "--keywords", workspace / "keywords.json")
    assert code != 0 and out == ""
    assert err.startswith("voicemask: safewords:")
    assert not (workspace / "x.wav").exists()


def test_sanitize_rejects_clashing_paths(capsys, workspace):
    code, _, err = run(capsys, "sanitize", "--input", workspace / "in.wav",
                       "--output", workspace / "in.wav", "--log", workspace / "y.jsonl")
    assert code == 2 and "distinct" in err


def test_missing_input_is_reported(capsys, workspace):
    code, _, err = run(capsys, "convert", "--input", workspace / "nope.wav",
                       "--output", workspace / "o.wav")
    assert code == 2 and err.startswith("voicemask:")


def test_restore_warns_on_missing_safeword(capsys, workspace, tmp_path):
    (tmp_path / "t.txt").write_text("nothing to see")
    sanitize(capsys, workspace, "f")
    code, out, err = run(capsys, "restore", "--input", tmp_path / "t.txt",
                         "--log", workspace / "f.jsonl")
    assert code == 0 and out == "nothing to see" and "warning" in err


def test_convert(capsys, workspace):
    code, out, _ = run(capsys, "convert", "--input", workspace / "in.wav",
                       "--output", workspace / "conv.wav", "--seed", 1)
    assert code == 0
    assert len(read_wav(workspace / "conv.wav")) == len(read_wav(workspace / "in.wav"))
    assert json.loads(out)["config"]["seed"] == 1


def test_enroll_and_spot(capsys, workspace):
    code, out, _ = run(capsys, "enroll", "--keywords", workspace / "keywords.json",
                       "--templates", workspace / "t.npz")
    assert code == 0 and json.loads(out)["keywords"][0]["hit_count"] == 0
    code, out, _ = run(capsys, "spot", "--input", workspace / "in.wav",
                       "--templates", workspace / "t.npz")
    dets = json.loads(out)["detections"]
    assert code == 0 and len(dets) == 1 and dets[0]["keyword"] == "group therapy"


def test_bench_command(capsys, workspace):
    code, out, _ = run(capsys, "bench", "--input", workspace / "in.wav", "--repeats", 2,
                       "--keywords", workspace / "keywords.json", "--safewords", workspace / "bank")
    rep = json.loads(out)
    assert code == 0 and rep["audio_duration_s"] == pytest.approx(len(
        read_wav(workspace / "in.wav")) / 16000)
    assert rep["cpu_time_s"]["keyword_spotting"] > 0


def test_attack_demo_reverse(capsys):
    code, out, _ = run(capsys, "attack-demo", "--mode", "reverse")
    r = json.loads(out)
    assert code == 0
    assert r["distance_reversed_db"] < r["distance_converted_db"]
    assert r["distance_wrong_alpha_db"] > r["distance_reversed_db"]


def test_attack_demo_reduce(capsys):
    code, out, _ = run(capsys, "attack-demo", "--mode", "reduce")
    r = json.loads(out)
    assert code == 0
    assert r["bilinear"]["residual_bilinear_family"] < 1e-9
    assert r["compound"]["residual_bilinear_family"] > 1e-3


@pytest.fixture()
def vocab(tmp_path):
    (tmp_path / "vocab.txt").write_text("loan\ntherapy\nweather\n")
    (tmp_path / "model.json").write_text(json.dumps({"loan": 0.3, "therapy": 0.1}))
    return tmp_path


def test_praka_simulate_within_band(capsys, vocab):
    code, out, _ = run(capsys, "praka-simulate", "--vocab", vocab / "vocab.txt",
                       "--users", 10000, "--model", vocab / "model.json", "--p", 0.5,
                       "--seed", 4)
    r = json.loads(out)
    assert code == 0 and r["epsilon"] == pytest.approx(2 * np.log(3))
    rows = {w["word"]: w for w in r["words"]}
    assert rows["loan"]["true_count"] == 3000 and rows["therapy"]["true_count"] == 1000
    # sd of the estimate is sqrt(N p/2 (1 - p/2)) / (1 - p), about 86.6 users
    assert abs(rows["loan"]["n_hat"] - 3000) < 2.576 * 86.61
    assert rows["weather"]["true_count"] == 0


def test_praka_simulate_small_p_is_nearly_exact(capsys, vocab):
    code, out, _ = run(capsys, "praka-simulate", "--vocab", vocab / "vocab.txt",
                       "--users", 2000, "--model", vocab / "model.json", "--p", 1e-6)
    rows = {w["word"]: w for w in json.loads(out)["words"]}
    assert abs(rows["therapy"]["n_hat"] - 200) < 1.0


def test_praka_simulate_reproducible_and_aggregate(capsys, vocab):
    args = ["praka-simulate", "--vocab", vocab / "vocab.txt", "--users", 500,
            "--model", vocab / "model.json", "--seed", 9]
    run(capsys, *args, "--reports", vocab / "r1.jsonl")
    run(capsys, *args, "--reports", vocab / "r2.jsonl")
    assert (vocab / "r1.jsonl").read_bytes() == (vocab / "r2.jsonl").read_bytes()
    code, out, _ = run(capsys, "praka-aggregate", "--input", vocab / "r1.jsonl", "--p", 0.5)
    assert code == 0 and [e["N"] for e in json.loads(out)] == [500, 500, 500]


def test_praka_simulate_rejects_bad_p(capsys, vocab):
    code, _, err = run(capsys, "praka-simulate", "--vocab", vocab / "vocab.txt", "--p", 1.0)
    assert code == 2 and err.startswith("voicemask: config:")


def test_entry_point_help():
    r = subprocess.run([sys.executable, "-m", "voicemask.cli", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and "sanitize" in r.stdout
