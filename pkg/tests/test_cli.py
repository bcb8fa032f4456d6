import json

import numpy as np
import pytest

from phonoscribe import cli, corpus, dsp
from phonoscribe.cli import main
from phonoscribe.training import Checkpoint, TrainConfig
from phonoscribe.nn import ModelConfig, TranscriptionModel

BONJOUR_AUDIO = "LL-Q150 (fra)-LoquaxFR-bonjour.wav"


def write_manifest(path, rows):
    lines = ["word,language,ipa_list,audio_list"] + rows
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run(args):
    return main([str(a) for a in args])


class TestFilterCommand:
    def test_bonjour_kept(self, tmp_path, capsys):
        manifest = tmp_path / "m.csv"
        write_manifest(manifest, [f'bonjour,fra,bɔ̃ʒuʁ,"{BONJOUR_AUDIO}"'])
        out = tmp_path / "kept.csv"
        stats = tmp_path / "stats.json"
        code = run(["filter", "--manifest", manifest, "--out", out,
                    "--stats", stats])
        assert code == 0
        kept = corpus.read_samples_csv(out)
        assert kept[0].word == "bonjour"
        payload = json.loads(capsys.readouterr().out)
        assert payload["kept_count"] == 1
        assert json.loads(stats.read_text())["kept_count"] == 1

    def test_empty_manifest_exits_zero(self, tmp_path):
        manifest = tmp_path / "m.csv"
        write_manifest(manifest, [])
        out = tmp_path / "kept.csv"
        assert run(["filter", "--manifest", manifest, "--out", out]) == 0
        assert corpus.read_samples_csv(out) == []

    def test_rejections_still_exit_zero(self, tmp_path, capsys):
        manifest = tmp_path / "m.csv"
        write_manifest(manifest, ["hello,eng,ku,LL-x (eng)-A-hello.wav"])
        out = tmp_path / "kept.csv"
        assert run(["filter", "--manifest", manifest, "--out", out]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["rejected_by_rule"]["language"] == 1

    def test_parse_failure_exits_two(self, tmp_path):
        manifest = tmp_path / "m.csv"
        write_manifest(manifest, ["only,two"])
        assert run(["filter", "--manifest", manifest,
                    "--out", tmp_path / "kept.csv"]) == 2

    def test_ten_record_fixture_stats(self, tmp_path, capsys):
        rows = [
            "clean1,fra,wi,LL-Q150 (fra)-A-c1.wav",
            "english,eng,wi,LL-Q150 (eng)-A-e.wav",
            "clean2,fra,ku,LL-Q150 (fra)-B-c2.wav",
            "twoipa,fra,ku|kut,LL-Q150 (fra)-A-t.wav",
            "clean3,fra,ato,LL-Q150 (fra)-C-c3.wav",
            "badsymbol,fra,bra,LL-Q150 (fra)-A-b.wav",
            "clean4,fra,bɔ̃ʒuʁ,LL-Q150 (fra)-D-c4.wav",
            "toolong,fra,abababababababababab,LL-Q150 (fra)-A-l.wav",
            "clean5,fra,sa,LL-Q150 (fra)-E-c5.wav",
            "notll,fra,wi,notll.wav",
        ]
        manifest = tmp_path / "m.csv"
        write_manifest(manifest, rows)
        code = run(["filter", "--manifest", manifest,
                    "--out", tmp_path / "kept.csv"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["input_count"] == 10
        assert payload["kept_count"] == 5
        assert payload["rejected_by_rule"] == {
            "language": 1, "single_ipa": 1, "inventory": 1,
            "length": 1, "ll_audio": 1,
        }


def sample_csv(tmp_path, filenames):
    rows = [corpus.SampleRecord(f"w{i}", name, corpus.tokenize_ipa("wi"), "A")
            for i, name in enumerate(filenames)]
    path = tmp_path / "samples.csv"
    corpus.write_samples_csv(path, rows)
    return path


class TestFetchCommand:
    def test_all_cached_downloads_nothing(self, tmp_path, capsys, monkeypatch):
        def explode(url, timeout=30.0):
            raise AssertionError("network touched")

        monkeypatch.setattr(corpus, "_urllib_transport", explode)
        cache = tmp_path / "cache"
        cache.mkdir()
        (cache / "a.wav").write_bytes(b"x")
        samples = sample_csv(tmp_path, ["a.wav"])
        assert run(["fetch", "--samples", samples, "--cache", cache]) == 0
        assert capsys.readouterr().out == "CACHED\ta.wav\n"

    def test_404_listed_in_failures(self, tmp_path, capsys, monkeypatch):
        def not_found(url, timeout=30.0):
            raise corpus.HttpError(404, url)

        monkeypatch.setattr(corpus, "_urllib_transport", not_found)
        cache = tmp_path / "cache"
        samples = sample_csv(tmp_path, ["missing.wav"])
        code = run(["fetch", "--samples", samples, "--cache", cache])
        assert code == 1
        assert "FAIL\tmissing.wav" in capsys.readouterr().out
        failures = json.loads((cache / "failures.json").read_text())
        assert failures[0]["filename"] == "missing.wav"

    def test_download_written_under_verbatim_name(self, tmp_path, capsys,
                                                  monkeypatch):
        monkeypatch.setattr(corpus, "_urllib_transport",
                            lambda url, timeout=30.0: b"RIFFdata")
        cache = tmp_path / "cache"
        samples = sample_csv(tmp_path, [BONJOUR_AUDIO])
        assert run(["fetch", "--samples", samples, "--cache", cache]) == 0
        assert (cache / BONJOUR_AUDIO).read_bytes() == b"RIFFdata"
        assert f"OK\t{BONJOUR_AUDIO}" in capsys.readouterr().out


def make_wav(path, seconds=2.0, rate=16000, freq=440.0):
    t = np.arange(round(seconds * rate)) / rate
    clip = dsp.AudioClip(rate, 0.5 * np.sin(2 * np.pi * freq * t))
    path.write_bytes(dsp.encode_wav(clip))


class TestFeaturizeCommand:
    def test_writes_features_and_computed_norm(self, tmp_path, capsys):
        cache = tmp_path / "cache"
        cache.mkdir()
        make_wav(cache / "a.wav")
        make_wav(cache / "b.wav", freq=880.0)
        samples = sample_csv(tmp_path, ["a.wav", "b.wav"])
        out = tmp_path / "features"
        code = run(["featurize", "--samples", samples, "--cache", cache,
                    "--out", out, "--norm", "compute"])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert "a.wav\t198x40" in lines
        features = dsp.load_features(out / "a.wav.phfm")
        assert features.shape == (198, 40)
        norm = json.loads((out / "norm.json").read_text())
        matrices = [dsp.load_features(out / f"{n}.wav.phfm") for n in "ab"]
        want = dsp.compute_norm(matrices)
        assert norm["mean"] == pytest.approx(want.mean, rel=1e-5)
        assert norm["std"] == pytest.approx(want.std, rel=1e-5)

    def test_norm_use_echoes_shipped_constants(self, tmp_path):
        cache = tmp_path / "cache"
        cache.mkdir()
        make_wav(cache / "a.wav")
        samples = sample_csv(tmp_path, ["a.wav"])
        out = tmp_path / "features"
        assert run(["featurize", "--samples", samples, "--cache", cache,
                    "--out", out, "--norm", "use"]) == 0
        norm = json.loads((out / "norm.json").read_text())
        assert norm == {"mean": -11.48, "std": 80.30}

    def test_non_16k_input_resampled(self, tmp_path):
        cache = tmp_path / "cache"
        cache.mkdir()
        make_wav(cache / "a.wav", rate=48000)
        samples = sample_csv(tmp_path, ["a.wav"])
        out = tmp_path / "features"
        assert run(["featurize", "--samples", samples, "--cache", cache,
                    "--out", out]) == 0
        assert dsp.load_features(out / "a.wav.phfm").shape == (198, 40)


def featurized_fixture(tmp_path, words=("wi", "ku", "sa", "ato")):
    """Samples CSV + feature dir with random features for tiny models."""
    rows = []
    features_dir = tmp_path / "features"
    features_dir.mkdir(exist_ok=True)
    rng = np.random.default_rng(0)
    for i, text in enumerate(words):
        name = f"w{i}.wav"
        rows.append(corpus.SampleRecord(f"w{i}", name,
                                        corpus.tokenize_ipa(text), "A"))
        dsp.save_features(features_dir / f"{name}.phfm",
                          rng.normal(size=(12, 8)).astype(np.float32))
    path = tmp_path / "samples.csv"
    corpus.write_samples_csv(path, rows)
    (features_dir / "norm.json").write_text('{"mean": 0.0, "std": 1.0}')
    return path, features_dir


def tiny_config_file(tmp_path):
    config = {
        "train": {"batch_size": 2, "epochs": 1, "eval_batches": 1, "seed": 5,
                  "lr": 1e-3},
        "model": {"mfcc_coefficients": 8, "conv_units": 8, "lstm_units": 8,
                  "lstm_dropout": 0.0},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


class TestTrainCommand:
    def test_zero_epochs_emits_init_checkpoint(self, tmp_path):
        samples, features = featurized_fixture(tmp_path)
        run_dir = tmp_path / "run"
        code = run(["train", "--features", features, "--samples", samples,
                    "--run-dir", run_dir, "--config", tiny_config_file(tmp_path),
                    "--epochs", 0])
        assert code == 0
        assert (run_dir / "epoch_0.phck").exists()

    def test_prints_metrics_lines_and_is_reproducible(self, tmp_path, capsys):
        samples, features = featurized_fixture(tmp_path)
        config = tiny_config_file(tmp_path)
        first = tmp_path / "run1"
        second = tmp_path / "run2"
        assert run(["train", "--features", features, "--samples", samples,
                    "--run-dir", first, "--config", config]) == 0
        out = capsys.readouterr().out
        entry = json.loads(out.splitlines()[0])
        assert entry["epoch"] == 1
        assert run(["train", "--features", features, "--samples", samples,
                    "--run-dir", second, "--config", config]) == 0
        assert (first / "metrics.jsonl").read_bytes() == \
            (second / "metrics.jsonl").read_bytes()
        assert (first / "epoch_1.phck").read_bytes() == \
            (second / "epoch_1.phck").read_bytes()

    def test_flag_overrides_config_file(self, tmp_path):
        samples, features = featurized_fixture(tmp_path)
        run_dir = tmp_path / "run"
        assert run(["train", "--features", features, "--samples", samples,
                    "--run-dir", run_dir, "--config", tiny_config_file(tmp_path),
                    "--epochs", 2]) == 0
        assert (run_dir / "epoch_2.phck").exists()
        written = json.loads((run_dir / "config.json").read_text())
        assert written["epochs"] == 2


def zero_checkpoint(tmp_path, mfcc_coefficients=8):
    config = TrainConfig(
        model=ModelConfig(mfcc_coefficients=mfcc_coefficients, conv_units=8,
                          lstm_units=8, lstm_dropout=0.0),
        norm=dsp.FeatureNorm(0.0, 1.0),
    )
    model = TranscriptionModel(config.model)
    checkpoint = Checkpoint(
        config=config,
        params={k: v.copy() for k, v in model.parameters().items()},
        buffers={k: v.copy() for k, v in model.buffers().items()},
    )
    path = tmp_path / "model.phck"
    checkpoint.save(path)
    return path


class TestEvalCommand:
    def test_report_bundle_and_accuracy(self, tmp_path, capsys):
        # zero weights decode everything to "i"; make the targets match
        samples, features = featurized_fixture(tmp_path, words=("i", "i"))
        checkpoint = zero_checkpoint(tmp_path)
        report_dir = tmp_path / "report"
        code = run(["eval", "--checkpoint", checkpoint, "--samples", samples,
                    "--features", features, "--report-dir", report_dir])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["exact_match_accuracy"] == 1.0
        report = json.loads((report_dir / "report.json").read_text("utf-8"))
        assert report["exact_match_accuracy"] == 1.0
        assert (report_dir / "report.md").exists()
        assert (report_dir / "confusion.csv").exists()

    def test_confusion_rows_stochastic(self, tmp_path):
        samples, features = featurized_fixture(tmp_path, words=("wi", "ku"))
        checkpoint = zero_checkpoint(tmp_path)
        report_dir = tmp_path / "report"
        run(["eval", "--checkpoint", checkpoint, "--samples", samples,
             "--features", features, "--report-dir", report_dir])
        report = json.loads((report_dir / "report.json").read_text("utf-8"))
        rows = np.array(report["confusion"]["proportions"])
        sums = rows.sum(axis=1)
        occupied = sums > 0
        assert np.abs(sums[occupied] - 1.0).max() < 1e-9


class TestInferCommand:
    def test_files_processed_in_order(self, tmp_path, capsys):
        checkpoint = zero_checkpoint(tmp_path, mfcc_coefficients=40)
        first = tmp_path / "a.wav"
        second = tmp_path / "b.wav"
        make_wav(first)
        make_wav(second)
        code = run(["infer", "--checkpoint", checkpoint, first, second])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith(str(first) + "\t")
        assert lines[1].startswith(str(second) + "\t")

    def test_missing_file_stage_tagged_nonzero_exit(self, tmp_path, capsys):
        checkpoint = zero_checkpoint(tmp_path, mfcc_coefficients=40)
        good = tmp_path / "good.wav"
        make_wav(good)
        code = run(["infer", "--checkpoint", checkpoint,
                    tmp_path / "absent.wav", good])
        assert code == 1
        captured = capsys.readouterr()
        assert "decode_wav" in captured.err
        assert str(good) in captured.out  # later files still processed


class TestSuspectsCommand:
    def write_report(self, tmp_path, rows):
        report_dir = tmp_path / "report"
        report_dir.mkdir()
        (report_dir / "report.json").write_text(
            json.dumps({"suspects": rows}), encoding="utf-8")
        return report_dir

    def test_top_slices(self, tmp_path, capsys):
        rows = [{"word": f"w{i}", "target_ipa": "a", "predicted_ipa": "b",
                 "distance": 10 - i} for i in range(5)]
        report_dir = self.write_report(tmp_path, rows)
        assert run(["suspects", "--report-dir", report_dir, "--top", 2]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 2
        assert lines[0] == "w0\ta\tb\t10"

    def test_min_distance_zero_returns_all(self, tmp_path, capsys):
        rows = [{"word": "w", "target_ipa": "a", "predicted_ipa": "a",
                 "distance": 0}]
        report_dir = self.write_report(tmp_path, rows)
        assert run(["suspects", "--report-dir", report_dir,
                    "--min-distance", 0]) == 0
        assert len(capsys.readouterr().out.splitlines()) == 1

    def test_empty_report_exits_zero(self, tmp_path, capsys):
        report_dir = self.write_report(tmp_path, [])
        assert run(["suspects", "--report-dir", report_dir]) == 0
        assert capsys.readouterr().out == ""

    def test_top10_outlier_fixture(self, tmp_path, capsys):
        # end-to-end over the report bundle: highest-distance entries of the
        # audited corpus come back in order with their distances
        from test_acceptance import TOP10
        from phonoscribe import analysis

        pairs = [analysis.PredictionPair.build(
            w, f"{w}.wav", corpus.tokenize_ipa(t), corpus.tokenize_ipa(p))
            for w, t, p, _ in TOP10]
        report_dir = tmp_path / "report"
        analysis.write_report_bundle(report_dir, analysis.build_report(pairs))
        assert run(["suspects", "--report-dir", report_dir, "--top", 10]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 10
        assert lines[0] == "1337\tlit\tmitasɑ̃tʁɑ̃mzɔt\t13"
        assert [int(line.rsplit("\t", 1)[1]) for line in lines] == \
            [13, 11, 10, 10, 9, 9, 9, 9, 8, 8]


class TestInventoryCommand:
    def test_prints_all_rows(self, capsys):
        assert run(["inventory"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 37
        assert lines[0] == "0\ti\tU+0069"
        assert lines[14].startswith("14\tɔ̃\tU+0254 U+0303")


class TestUsageErrors:
    def test_unknown_command_exits_two(self):
        with pytest.raises(SystemExit) as err:
            main(["bogus"])
        assert err.value.code == 2

    def test_missing_required_flag_exits_two(self):
        with pytest.raises(SystemExit) as err:
            main(["filter"])
        assert err.value.code == 2
