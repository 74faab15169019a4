import csv
import io
import json

import numpy as np
import pytest

from rangequant import PipelineConfig, WeightTensor, dequantize_tensor, quantize_model
from rangequant.storage import (
    REPORT_COLUMNS,
    ManifestError,
    build_report,
    load_model,
    load_quantized,
    params_from_dict,
    params_to_dict,
    read_report,
    report_json,
    rows_csv,
    save_model,
    save_quantized,
    write_report,
)


def write_manifest(directory, entries):
    path = directory / "manifest.json"
    path.write_text(json.dumps({"version": 1, "tensors": entries}))
    return path


def entry(name, shape, file):
    return {"name": name, "shape": shape, "dtype": "f32", "file": file, "byte_order": "little"}


class TestLoadModel:
    def test_two_by_two(self, tmp_path):
        (tmp_path / "w.f32").write_bytes(np.array([1, -2, 3, -4], dtype="<f4").tobytes())
        (t,) = load_model(write_manifest(tmp_path, [entry("w", [2, 2], "w.f32")]))
        assert t.name == "w" and t.shape == (2, 2)
        np.testing.assert_array_equal(t.to_array(), [[1, -2], [3, -4]])

    def test_size_mismatch_names_tensor(self, tmp_path):
        (tmp_path / "w.f32").write_bytes(bytes(15))
        with pytest.raises(ManifestError, match="w") as info:
            load_model(write_manifest(tmp_path, [entry("w", [2, 2], "w.f32")]))
        assert info.value.code == "size-mismatch" and info.value.tensor == "w"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError) as info:
            load_model(write_manifest(tmp_path, [entry("w", [2], "nope.f32")]))
        assert info.value.code == "missing-file"

    def test_non_finite_payload(self, tmp_path):
        (tmp_path / "w.f32").write_bytes(np.array([1.0, np.nan], dtype="<f4").tobytes())
        with pytest.raises(ManifestError) as info:
            load_model(write_manifest(tmp_path, [entry("w", [2], "w.f32")]))
        assert info.value.code == "non-finite"

    def test_duplicate_name(self, tmp_path):
        (tmp_path / "w.f32").write_bytes(bytes(8))
        with pytest.raises(ManifestError) as info:
            load_model(write_manifest(tmp_path, [entry("w", [2], "w.f32"), entry("w", [2], "w.f32")]))
        assert info.value.code == "duplicate-name"

    def test_unreadable_manifest(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{not json")
        with pytest.raises(ManifestError) as info:
            load_model(path)
        assert info.value.code == "unreadable-manifest"

    @pytest.mark.parametrize("bad", [
        {"version": 2, "tensors": []},
        {"version": 1, "tensors": []},
        {"version": 1, "tensors": [{"name": "w", "shape": [0], "dtype": "f32", "file": "w", "byte_order": "little"}]},
        {"version": 1, "tensors": [{"name": "w", "shape": [2], "dtype": "f16", "file": "w", "byte_order": "little"}]},
        {"version": 1, "tensors": [{"name": "w", "shape": [2], "dtype": "f32", "file": "w", "byte_order": "big"}]},
    ])
    def test_invalid_manifest(self, tmp_path, bad):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps(bad))
        with pytest.raises(ManifestError) as info:
            load_model(path)
        assert info.value.code == "invalid-manifest"


class TestSaveModel:
    def test_round_trip_is_byte_identical(self, model_dir, tmp_path):
        tensors = load_model(model_dir)
        again = save_model(tmp_path / "copy", tensors)
        assert again.read_bytes() == model_dir.read_bytes()
        for t in json.loads(model_dir.read_text())["tensors"]:
            assert (again.parent / t["file"]).read_bytes() == (model_dir.parent / t["file"]).read_bytes()

    def test_float32_values_survive(self, model_dir, tmp_path):
        first = load_model(model_dir)
        second = load_model(save_model(tmp_path / "copy", first))
        for a, b in zip(first, second):
            assert a.name == b.name and a.shape == b.shape
            np.testing.assert_array_equal(a.values, b.values)

    def test_awkward_names_get_safe_files(self, tmp_path):
        t = WeightTensor("a/b c", (2,), [0.5, -0.5])
        path = save_model(tmp_path, [t])
        (entry_,) = json.loads(path.read_text())["tensors"]
        assert "/" not in entry_["file"] and " " not in entry_["file"]
        assert load_model(path)[0].name == "a/b c"

    def test_no_temp_files_left(self, model_dir):
        assert not [p for p in model_dir.parent.iterdir() if p.name.endswith(".tmp")]


@pytest.fixture
def quantized_model(model_dir):
    tensors = load_model(model_dir)
    config = PipelineConfig(bits_weights=4, strategy="reshape-clip")
    quantized, reports = quantize_model(tensors, config)
    return config, quantized, reports


class TestQuantizedOutput:
    def test_params_dict_round_trip(self, quantized_model):
        _, quantized, _ = quantized_model
        for q in quantized:
            assert params_from_dict(json.loads(json.dumps(params_to_dict(q.params)))) == q.params

    def test_saved_codes_dequantize_to_fake_tensor(self, quantized_model, tmp_path):
        _, quantized, _ = quantized_model
        fake = [dequantize_tensor(q) for q in quantized]
        save_quantized(tmp_path, quantized, fake)
        loaded = load_quantized(tmp_path / "quantized.json")
        for q, f, back in zip(quantized, fake, loaded):
            assert back.name == q.name and back.shape == q.shape and back.params == q.params
            np.testing.assert_array_equal(back.codes, q.codes)
            np.testing.assert_array_equal(dequantize_tensor(back).values, f.values)

    def test_fake_manifest_loads_as_model(self, quantized_model, tmp_path):
        _, quantized, _ = quantized_model
        fake = [dequantize_tensor(q) for q in quantized]
        save_quantized(tmp_path, quantized, fake)
        reloaded = load_model(tmp_path / "fake_manifest.json")
        for f, r in zip(fake, reloaded):
            np.testing.assert_array_equal(r.values, f.values.astype(np.float32))

    def test_four_bit_codes_on_disk_in_range(self, quantized_model, tmp_path):
        _, quantized, _ = quantized_model
        save_quantized(tmp_path, quantized)
        doc = json.loads((tmp_path / "quantized.json").read_text())
        body = doc["tensors"][1]
        codes = np.frombuffer((tmp_path / body["file"]).read_bytes(), dtype="<i4")
        assert codes.min() >= -8 and codes.max() <= 7
        assert json.loads((tmp_path / body["params"]).read_text())["bits"] == 4

    def test_no_temp_files_left(self, quantized_model, tmp_path):
        _, quantized, _ = quantized_model
        save_quantized(tmp_path, quantized, [dequantize_tensor(q) for q in quantized])
        assert not [p for p in tmp_path.iterdir() if p.name.endswith(".tmp")]


class TestReport:
    def test_structure(self, quantized_model):
        config, _, reports = quantized_model
        doc = build_report(config, reports)
        assert doc["config"]["strategy"] == "reshape-clip" and doc["config"]["bits"] == 4
        assert [row["bits"] for row in doc["layers"]] == [8, 4, 8]
        assert set(doc["layers"][0]) == set(REPORT_COLUMNS)
        assert doc["totals"]["loss_sum"] == pytest.approx(sum(r.loss for r in reports), rel=1e-12)

    def test_json_is_canonical(self, quantized_model):
        config, _, reports = quantized_model
        text = report_json(build_report(config, reports))
        assert text == json.dumps(json.loads(text), sort_keys=True, indent=2) + "\n"

    def test_csv_and_json_agree(self, quantized_model, tmp_path):
        config, _, reports = quantized_model
        write_report(tmp_path / "report.json", build_report(config, reports))
        doc = read_report(tmp_path / "report.json")
        rows = list(csv.DictReader(io.StringIO(rows_csv(doc["layers"]))))
        assert len(rows) == len(doc["layers"])
        for text_row, row in zip(rows, doc["layers"]):
            assert text_row["layer"] == row["layer"]
            for key in ("alpha", "loss", "time_ms"):
                assert float(text_row[key]) == row[key]
            assert int(text_row["evals"]) == row["evals"] and int(text_row["bits"]) == row["bits"]

    def test_unreadable_report(self, tmp_path):
        with pytest.raises(ManifestError):
            read_report(tmp_path / "missing.json")
