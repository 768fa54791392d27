import json
import struct

import numpy as np
import pytest

from featmap import io
from featmap.datasets import gaussian_blobs
from featmap.errors import DataError, ParameterError
from featmap.projection import embed


@pytest.fixture(scope="module")
def small_result():
    x, labels = gaussian_blobs(3, 20, 5, seed=0)
    return embed(io.Dataset(x, labels, [f"g{h}" for h in range(5)]), epochs=20, k=8)


class TestCsv:
    def test_header(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("a,b\n1,2\n3,4\n")
        ds = io.load_matrix(str(p))
        assert (ds.m, ds.n) == (2, 2) and ds.feature_names == ["a", "b"]
        np.testing.assert_array_equal(ds.values, [[1, 2], [3, 4]])

    def test_no_header(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2.5\n-3e2,4\n")
        ds = io.load_matrix(str(p))
        assert ds.feature_names is None and ds.values[1, 0] == -300.0

    def test_label_column(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("x,label,y\n1,0,2\n3,1,4\n5,1,6\n")
        ds = io.load_matrix(str(p), label_column="label")
        assert ds.n == 2 and ds.feature_names == ["x", "y"]
        assert ds.labels.tolist() == [0, 1, 1]
        by_index = io.load_matrix(str(p), label_column="1")
        assert by_index.labels.tolist() == [0, 1, 1]

    def test_string_labels(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("x,cls\n1,cat\n2,dog\n")
        assert io.load_matrix(str(p), label_column="cls").labels.tolist() == ["cat", "dog"]

    @pytest.mark.parametrize("body, needle", [
        ("a,b\n1,2\n3\n", ":3:"),
        ("a,b\n1,2\n3,zz\n", ":3:"),
        ("a,b\n1,nan\n", ":2:"),
        ("", "no data"),
    ])
    def test_errors(self, tmp_path, body, needle):
        p = tmp_path / "bad.csv"
        p.write_text(body)
        with pytest.raises(DataError, match=needle):
            io.load_matrix(str(p))

    def test_missing_file_and_format(self, tmp_path):
        with pytest.raises(DataError):
            io.load_matrix(str(tmp_path / "nope.csv"))
        p = tmp_path / "a.csv"
        p.write_text("1,2\n")
        with pytest.raises(ParameterError):
            io.load_matrix(str(p), format="parquet")
        with pytest.raises(DataError):
            io.load_matrix(str(p), label_column="missing")


class TestF32bin:
    def test_layout(self, tmp_path):
        p = tmp_path / "m.f32bin"
        p.write_bytes(struct.pack("<4sIQQ", b"FMAP", 1, 2, 3) + np.arange(6, dtype="<f4").tobytes())
        ds = io.load_matrix(str(p), format="f32bin")
        np.testing.assert_array_equal(ds.values, np.arange(6.0).reshape(2, 3))

    def test_round_trip(self, tmp_path, rng):
        x = rng.standard_normal((7, 4))
        p = tmp_path / "m.f32bin"
        io.write_f32bin(str(p), x)
        assert p.read_bytes()[:4] == b"FMAP"
        np.testing.assert_allclose(io.read_f32bin(str(p)), x, rtol=1e-6)

    @pytest.mark.parametrize("blob", [
        b"FMA",
        struct.pack("<4sIQQ", b"XXXX", 1, 1, 1) + b"\0" * 4,
        struct.pack("<4sIQQ", b"FMAP", 2, 1, 1) + b"\0" * 4,
        struct.pack("<4sIQQ", b"FMAP", 1, 2, 2) + b"\0" * 4,
        struct.pack("<4sIQQ", b"FMAP", 1, 1, 1) + np.array([np.inf], "<f4").tobytes(),
    ])
    def test_bad_files(self, tmp_path, blob):
        p = tmp_path / "bad.f32bin"
        p.write_bytes(blob)
        with pytest.raises(DataError):
            io.read_f32bin(str(p))

    def test_labels_rejected(self, tmp_path):
        p = tmp_path / "m.f32bin"
        io.write_f32bin(str(p), np.ones((2, 2)))
        with pytest.raises(ParameterError):
            io.load_matrix(str(p), format="f32bin", label_column="0")


class TestDataset:
    def test_validation(self):
        with pytest.raises(DataError):
            io.Dataset(np.array([[1.0, np.inf]]))
        with pytest.raises(DataError):
            io.Dataset(np.ones((3, 2)), labels=np.zeros(2))
        with pytest.raises(DataError):
            io.Dataset(np.ones((3, 2)), feature_names=["a"])
        with pytest.raises(DataError):
            io.Dataset(np.ones(3))


class TestOutputs:
    def test_round_trip(self, tmp_path, small_result):
        res = small_result
        io.write_embedding(res, str(tmp_path))
        y, labels = io.read_embedding(str(tmp_path))
        np.testing.assert_allclose(y, res.embedding, rtol=1e-8, atol=1e-6)
        assert labels.tolist() == res.labels.tolist()

        frames, sv = io.read_frames(str(tmp_path / "frames.json"))
        assert frames.shape == res.frames.frames.shape
        assert np.allclose(np.einsum("mij,mik->mjk", frames, frames), np.eye(2), atol=1e-7)
        np.testing.assert_allclose(sv, res.frames.singular_values, rtol=1e-8)

        imp, names = io.read_importance(str(tmp_path / "importance.csv"))
        assert names == [f"g{h}" for h in range(5)]
        np.testing.assert_allclose(imp, res.importance, rtol=1e-8, atol=1e-12)

        diag = io.read_diagnostics(str(tmp_path / "diagnostics.json"))
        assert diag["config"]["lambda"] == 0.5
        assert len(diag["ce_loss"]) == 20
        assert diag["radius_correlation"] == pytest.approx(res.diagnostics["radius_correlation"], rel=1e-8)
        assert "r_o" not in diag

    def test_nine_significant_digits(self, tmp_path, small_result):
        io.write_embedding(small_result, str(tmp_path))
        first = (tmp_path / "embedding.csv").read_text().splitlines()[1].split(",")[0]
        digits = first.lstrip("-").replace(".", "").split("e")[0].lstrip("0")
        assert len(digits) <= 9
        doc = json.loads((tmp_path / "diagnostics.json").read_text())
        assert doc["ce_loss"][0] == float(f"{doc['ce_loss'][0]:.9g}")

    def test_unwritable(self, tmp_path, small_result):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(DataError, match="file"):
            io.write_embedding(small_result, str(blocker / "sub"))
