import csv
import json
from pathlib import Path

import pytest

from specdiff import descriptors, svm
from specdiff.cli import main


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "synth"
    assert main(["synth", "--n", "4", "--ids", "2", "--out", str(out),
                 "--seed", "7"]) == 0
    return out


@pytest.fixture(scope="module")
def model_path(synth_dir, tmp_path_factory):
    path = tmp_path_factory.mktemp("cli_model") / "model.json"
    assert main(["train", "--manifest", str(synth_dir / "manifest.jsonl"),
                 "--kind", "specdiff", "--kernel", "linear",
                 "--out", str(path)]) == 0
    return path


class TestSynth:
    def test_record_count(self, synth_dir, capsys):
        lines = (synth_dir / "manifest.jsonl").read_text().splitlines()
        assert len(lines) == 8

    def test_rerun_identical(self, synth_dir, tmp_path):
        other = tmp_path / "again"
        assert main(["synth", "--n", "4", "--ids", "2", "--out", str(other),
                     "--seed", "7"]) == 0
        assert (other / "manifest.jsonl").read_bytes() == \
            (synth_dir / "manifest.jsonl").read_bytes()
        name = json.loads(
            (other / "manifest.jsonl").read_text().splitlines()[0])["flash_path"]
        assert (other / name).read_bytes() == (synth_dir / name).read_bytes()

    def test_zero_n_usage_error(self, tmp_path):
        assert main(["synth", "--n", "0", "--out", str(tmp_path / "x")]) == 2


class TestExtract:
    def test_specdiff_lengths(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "d.jsonl"
        assert main(["extract", "--manifest", str(synth_dir / "manifest.jsonl"),
                     "--kind", "specdiff", "--out", str(out)]) == 0
        rows = descriptors.read_descriptors_jsonl(out)
        assert len(rows) == 8
        assert all(len(d.values) == 13200 for _, _, _, d in rows)
        assert [r[0] for r in rows] == sorted(r[0] for r in rows)

    def test_scalar_kind(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "sd.jsonl"
        assert main(["extract", "--manifest", str(synth_dir / "manifest.jsonl"),
                     "--kind", "sd_fic", "--out", str(out)]) == 0
        rows = descriptors.read_descriptors_jsonl(out)
        assert all(len(d.values) == 1 for _, _, _, d in rows)

    def test_bad_pair_exit_code_and_skip_bad(self, synth_dir, tmp_path, capsys):
        # truncate one image so its header parses but pixel data does not
        manifest = synth_dir / "manifest.jsonl"
        line = json.loads(manifest.read_text().splitlines()[0])
        victim = synth_dir / line["flash_path"]
        original = victim.read_bytes()
        try:
            victim.write_bytes(original[:60])
            out = tmp_path / "d.jsonl"
            assert main(["extract", "--manifest", str(manifest),
                         "--out", str(out)]) == 1
            assert main(["extract", "--manifest", str(manifest),
                         "--out", str(out), "--skip-bad"]) == 0
            assert len(descriptors.read_descriptors_jsonl(out)) == 7
        finally:
            victim.write_bytes(original)

    def test_missing_manifest(self, tmp_path, capsys):
        assert main(["extract", "--manifest", str(tmp_path / "none.jsonl"),
                     "--out", str(tmp_path / "o.jsonl")]) == 1


class TestTrain:
    def test_model_round_trip(self, model_path, capsys):
        model = svm.load_model(model_path)
        assert model.descriptor_kind == "specdiff"
        assert model.kernel == "linear"
        assert model.threshold is not None

    def test_from_descriptor_file(self, synth_dir, tmp_path, capsys):
        desc = tmp_path / "d.jsonl"
        assert main(["extract", "--manifest", str(synth_dir / "manifest.jsonl"),
                     "--kind", "diff", "--out", str(desc)]) == 0
        out = tmp_path / "m.json"
        assert main(["train", "--descriptors", str(desc), "--kernel", "linear",
                     "--out", str(out)]) == 0
        assert svm.load_model(out).descriptor_kind == "diff"

    def test_grid_flag(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "m.json"
        assert main(["train", "--manifest", str(synth_dir / "manifest.jsonl"),
                     "--kind", "sd_fic", "--grid", "--out", str(out)]) == 0
        assert "grid best:" in capsys.readouterr().out

    def test_single_class_fails(self, synth_dir, tmp_path, capsys):
        manifest = synth_dir / "manifest.jsonl"
        live_only = [l for l in manifest.read_text().splitlines()
                     if json.loads(l)["label"] == "live"]
        sub = tmp_path / "live.jsonl"
        sub.write_text("\n".join(live_only) + "\n")
        # image paths are relative to the manifest's directory
        for line in live_only:
            rec = json.loads(line)
            for key in ("flash_path", "noflash_path"):
                (tmp_path / rec[key]).write_bytes(
                    (synth_dir / rec[key]).read_bytes())
        assert main(["train", "--manifest", str(sub), "--kind", "sd_fic",
                     "--out", str(tmp_path / "m.json")]) == 1


class TestClassify:
    def _landmarks_file(self, synth_dir, tmp_path, record):
        path = tmp_path / "lm.json"
        path.write_text(json.dumps({k: record[k]
                                    for k in ("left_eye", "right_eye", "face")}))
        return path

    @pytest.mark.parametrize("label,expected", [("live", 0), ("spoof", 1)])
    def test_verdict_exit_codes(self, synth_dir, model_path, tmp_path, capsys,
                                label, expected):
        records = [json.loads(l) for l in
                   (synth_dir / "manifest.jsonl").read_text().splitlines()]
        rec = next(r for r in records if r["label"] == label)
        lm = self._landmarks_file(synth_dir, tmp_path, rec)
        code = main(["classify", "--model", str(model_path),
                     "--flash", str(synth_dir / rec["flash_path"]),
                     "--noflash", str(synth_dir / rec["noflash_path"]),
                     "--landmarks", str(lm)])
        out = capsys.readouterr().out
        assert code == expected
        assert ("live" if expected == 0 else "spoof") in out
        assert "score=" in out and "threshold=" in out

    def test_missing_model_is_error(self, synth_dir, tmp_path, capsys):
        records = [json.loads(l) for l in
                   (synth_dir / "manifest.jsonl").read_text().splitlines()]
        rec = records[0]
        lm = self._landmarks_file(synth_dir, tmp_path, rec)
        assert main(["classify", "--model", str(tmp_path / "nope.json"),
                     "--flash", str(synth_dir / rec["flash_path"]),
                     "--noflash", str(synth_dir / rec["noflash_path"]),
                     "--landmarks", str(lm)]) == 2


class TestEval:
    def test_loio_outputs(self, synth_dir, tmp_path, capsys):
        prefix = str(tmp_path / "report")
        assert main(["eval", "--manifest", str(synth_dir / "manifest.jsonl"),
                     "--kind", "diff", "--kernel", "linear",
                     "--protocol", "loio", "--out", prefix]) == 0
        data = json.loads(Path(prefix + ".json").read_text())
        assert len(data["folds"]) == 2  # one per synthetic subject
        rows = list(csv.reader(Path(prefix + ".csv").read_text().splitlines()))
        assert rows[-1][0] == "mean"
        roc = list(csv.reader(Path(prefix + "_roc.csv").read_text().splitlines()))
        assert roc[0] == ["threshold", "far", "tar"]
        assert "ACER=" in capsys.readouterr().out

    def test_live_manifest(self, synth_dir, tmp_path, capsys):
        manifest = synth_dir / "manifest.jsonl"
        live_only = [l for l in manifest.read_text().splitlines()
                     if json.loads(l)["label"] == "live"]
        live = tmp_path / "live"
        live.mkdir()
        (live / "manifest.jsonl").write_text("\n".join(live_only) + "\n")
        for line in live_only:
            rec = json.loads(line)
            for key in ("flash_path", "noflash_path"):
                (live / rec[key]).write_bytes((synth_dir / rec[key]).read_bytes())
        prefix = str(tmp_path / "sb")
        assert main(["eval", "--manifest", str(manifest), "--kind", "diff",
                     "--kernel", "linear", "--live-manifest",
                     str(live / "manifest.jsonl"), "--out", prefix]) == 0
        data = json.loads(Path(prefix + ".json").read_text())
        for fold in data["folds"]:
            assert fold["report"]["n_live"] == 4


class TestBench:
    def test_csv_schema(self, synth_dir, model_path, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        assert main(["bench", "--manifest", str(synth_dir / "manifest.jsonl"),
                     "--model", str(model_path), "--out", str(out)]) == 0
        rows = list(csv.reader(out.read_text().splitlines()))
        assert rows[0] == ["stage", "median_ms", "p95_ms"]
        assert [r[0] for r in rows[1:]] == ["preprocessing",
                                            "descriptor+classification"]
        assert all(float(r[1]) >= 0 for r in rows[1:])
