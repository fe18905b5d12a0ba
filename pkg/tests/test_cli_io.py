import json
import math

import numpy as np
import pytest

from shmdetect import bundle as bundle_io
from shmdetect import pipeline, synth
from shmdetect.cli import EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from shmdetect.config import RunConfig, dump_config, load_config
from shmdetect.errors import ConfigError, DataError, NumericalError

TINY = """\
neurons = 8
latent_dim = 3
max_epochs = 10
patience = 5
durations_s = [40.0, 30.0, 30.0]
ladder = [[1.0, 1.0, 1.0, 1.0], [0.8, 1.0, 1.0, 1.0], [0.5, 0.5, 0.5, 0.5]]
"""


# --- configuration ----------------------------------------------------------

def test_defaults():
    c = RunConfig()
    assert (c.frame_length, c.folds, c.holdout_fraction) == (128, 10, 0.2)
    assert (c.vae_trials, c.ocsvm_trials) == (100, 50)
    assert (c.hidden_layers, c.neurons, c.activation, c.latent_dim) == (1, 60, "sigmoid", 20)
    assert (c.optimizer, c.learning_rate, c.kernel, c.nu) == ("adam", 1e-3, "rbf", 1e-3)
    assert c.fast and c.scenario_ids == list(range(1, 10))


def test_toml_roundtrip(tmp_path):
    cfg = RunConfig(seed=7, strategy="surrogate", nu=0.05, ladder=((1.0,) * 4, (0.5,) * 4),
                    durations_s=(10.0, 20.0))
    path = tmp_path / "c.toml"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg
    assert load_config(path, seed=3).seed == 3


@pytest.mark.parametrize("text, match", [
    ("bogus = 1\n", "unknown config key"),
    ("neurons = 'many'\n", "integer"),
    ("fast = 1\n", "boolean"),
    ("nu = 0.0\n", "nu"),
    ("hidden_layers = 4\n", "hidden_layers"),
    ("[vae]\nneurons = 3\n", "flat"),
    ("neurons = \n", "c.toml"),
    ("ladder = [[0.5, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0]]\ndurations_s = [1.0, 1.0]\n",
     "undamaged"),
])
def test_config_errors(tmp_path, text, match):
    path = tmp_path / "c.toml"
    path.write_text(text)
    with pytest.raises(ConfigError, match=match):
        load_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.toml")


# --- data generation ----------------------------------------------------------

@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    cfg_path = root / "run.toml"
    cfg_path.write_text(TINY)
    data = root / "data"
    assert main(["generate", "--config", str(cfg_path), "--out", str(data)]) == EXIT_OK
    bundle = root / "model.json"
    assert main(["train", "--config", str(cfg_path), "--data", str(data),
                 "--bundle", str(bundle)]) == EXIT_OK
    return root, cfg_path, data, bundle


def test_generate_writes_cases_and_manifest(tiny):
    _, cfg_path, data, _ = tiny
    cfg = load_config(cfg_path)
    assert sorted(p.name for p in data.glob("case_*.csv")) == ["case_1.csv", "case_2.csv",
                                                               "case_3.csv"]
    manifest = pipeline.read_manifest(data)
    model = pipeline.structure(cfg)
    for entry, sc in zip(manifest["scenarios"], pipeline.scenarios(cfg)):
        exact = [f for f, _ in synth.analytic_modes(model.damaged(sc))]
        assert entry["analytic_frequencies_hz"] == exact
        assert entry["stiffness_multipliers"] == list(sc.stiffness_multipliers)


def test_default_generate_has_nine_scenarios(tmp_path):
    cfg = RunConfig(durations_s=(6.0,) * 9)
    manifest = pipeline.generate(cfg, tmp_path)
    assert len(manifest["scenarios"]) == 9
    assert len(list(tmp_path.glob("case_*.csv"))) == 9


def test_generate_is_byte_identical(tiny, tmp_path):
    _, cfg_path, data, _ = tiny
    assert main(["generate", "--config", str(cfg_path), "--out", str(tmp_path)]) == EXIT_OK
    for p in data.glob("*"):
        assert (tmp_path / p.name).read_bytes() == p.read_bytes()
    other = tmp_path / "seeded"
    main(["generate", "--config", str(cfg_path), "--out", str(other), "--seed", "5"])
    assert (other / "case_1.csv").read_bytes() != (data / "case_1.csv").read_bytes()


def test_load_dataset_requires_undamaged_case(tmp_path):
    with pytest.raises(DataError, match="case_1"):
        pipeline.load_dataset(tmp_path)


# --- bundles --------------------------------------------------------------------

def test_bundle_roundtrip_is_exact(tiny):
    _, _, data, bundle = tiny
    model = bundle_io.load(bundle)
    assert len(model.detectors) == 4
    text = bundle_io.to_json(model)
    again = bundle_io.from_json(text)
    assert bundle_io.to_json(again) == text
    for s, det in model.detectors.items():
        other = again.detectors[s]
        np.testing.assert_array_equal(det.svm.support_vectors, other.svm.support_vectors)
        assert det.svm.rho == other.svm.rho
        for a, b in zip(det.model.encoder.layers, other.model.encoder.layers):
            np.testing.assert_array_equal(a.weight, b.weight)
    r1, k1 = pipeline.score(model, data)
    r2, k2 = pipeline.score(again, data)
    assert r1.entries == r2.entries and k1.values == k2.values


def test_bundle_version_and_tag_checks(tiny, tmp_path):
    _, _, _, bundle = tiny
    doc = json.loads(bundle.read_text())
    doc["version"] = 99
    with pytest.raises(DataError, match="version 99"):
        bundle_io.from_json(json.dumps(doc))
    del doc["format"]
    with pytest.raises(DataError, match="format"):
        bundle_io.from_json(json.dumps(doc))
    with pytest.raises(DataError):
        bundle_io.from_json("{not json")
    with pytest.raises(DataError, match="not found"):
        bundle_io.load(tmp_path / "nothing.json")


# --- scoring and reports ----------------------------------------------------------

def test_score_outputs_and_determinism(tiny, tmp_path, capsys):
    root, _, data, bundle = tiny
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert main(["score", "--bundle", str(bundle), "--data", str(data),
                     "--out", str(out)]) == EXIT_OK
    for name in ("pod_report.txt", "pod_report.csv", "kl_table.txt", "kl_table.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    from shmdetect.scoring import KlTable, PodReport

    report = PodReport.from_csv((out1 / "pod_report.csv").read_text())
    assert report.matrix().shape == (4, 3)
    avg = [l for l in (out1 / "pod_report.txt").read_text().splitlines()
           if l.startswith("PoD_avg")][0].split()[1:]
    assert [float(v) for v in avg] == [round(v, 2) for v in report.matrix().mean(axis=0)]
    kl = KlTable.from_csv((out1 / "kl_table.csv").read_text())
    assert kl.to_csv() == (out1 / "kl_table.csv").read_text()
    model = bundle_io.load(bundle)
    for s, det in model.detectors.items():
        assert report.entries[(s, 1)].frame_count == len(det.holdout_indices)
    assert "PoD_avg" in capsys.readouterr().out


def test_fdd_and_report_commands(tiny, tmp_path):
    _, cfg_path, data, _ = tiny
    out = tmp_path / "fdd"
    assert main(["fdd", "--config", str(cfg_path), "--data", str(data), "--out", str(out)]) == 0
    from shmdetect.fdd import FrequencyTable

    table = FrequencyTable.read_csv(out / "fdd_table.csv")
    assert table.frequencies[1][0] == pytest.approx(10.0, rel=0.02)
    assert (out / "spectrum_case_3.csv").is_file()
    assert main(["report", "--out", str(out)]) == EXIT_OK
    text = (out / "report.txt").read_text()
    assert "modal frequencies" in text and "Probability" not in text


def test_sensor_mismatch_is_a_data_error(tiny, tmp_path):
    _, _, data, bundle = tiny
    recs = pipeline.load_dataset(data)
    other = tmp_path / "three"
    other.mkdir()
    from shmdetect.signals import save_csv

    for case, rs in recs.items():
        save_csv(rs[:3], other / f"case_{case}.csv")
    assert main(["score", "--bundle", str(bundle), "--data", str(other),
                 "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_search_path_writes_histories(tmp_path):
    cfg = tmp_path / "c.toml"
    two_story = (TINY.replace("[1.0, 1.0, 1.0, 1.0]", "[1.0, 1.0]")
                 .replace("[0.8, 1.0, 1.0, 1.0]", "[0.8, 1.0]")
                 .replace("[0.5, 0.5, 0.5, 0.5]", "[0.5, 0.5]"))
    text = two_story + "story_masses = [1000.0, 750.0]\nforce_story = 2\nfolds = 3\n"
    cfg.write_text(text)
    data, hist = tmp_path / "d", tmp_path / "h"
    assert main(["generate", "--config", str(cfg), "--out", str(data)]) == 0
    assert main(["train", "--config", str(cfg), "--data", str(data), "--bundle",
                 str(tmp_path / "m.json"), "--search", "--trials", "10", "--out", str(hist)]) == 0
    files = sorted(p.name for p in hist.glob("*.jsonl"))
    assert files == ["sensor_1_ocsvm_trials.jsonl", "sensor_1_vae_trials.jsonl",
                     "sensor_2_ocsvm_trials.jsonl", "sensor_2_vae_trials.jsonl"]
    for p in hist.glob("*.jsonl"):
        records = [json.loads(l) for l in p.read_text().splitlines()]
        assert len(records) == 10
        assert all(len(r["fold_values"]) == 3 for r in records if not r["failed"])


# --- exit codes -------------------------------------------------------------------

def test_usage_errors_exit_1(capsys, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data", "x"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data", "x", "--bundle", "y", "--strategy", "grid"])
    assert exc.value.code == EXIT_USAGE
    bad = tmp_path / "bad.toml"
    bad.write_text("bogus = 1\n")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "unknown config key" in capsys.readouterr().err


def test_data_errors_exit_2(tmp_path):
    assert main(["train", "--data", str(tmp_path), "--bundle", str(tmp_path / "m")]) == EXIT_DATA
    assert main(["score", "--bundle", str(tmp_path / "m"), "--data", str(tmp_path),
                 "--out", str(tmp_path)]) == EXIT_DATA
    assert main(["report", "--out", str(tmp_path)]) == EXIT_DATA
    short = RunConfig(durations_s=(2.0,) * 9)
    pipeline.generate(short, tmp_path / "short")
    assert main(["fdd", "--data", str(tmp_path / "short"), "--out", str(tmp_path / "f")]) \
        == EXIT_DATA


def test_numerical_failure_exit_3(tiny, monkeypatch, capsys):
    root, cfg_path, data, _ = tiny

    def diverge(*args, **kwargs):
        raise NumericalError("loss became non-finite")

    monkeypatch.setattr(pipeline.vae, "train", diverge)
    code = main(["train", "--config", str(cfg_path), "--data", str(data),
                 "--bundle", str(root / "never.json")])
    assert code == EXIT_NUMERICAL
    assert "sensor 1: loss became non-finite" in capsys.readouterr().err
    assert not (root / "never.json").exists()
