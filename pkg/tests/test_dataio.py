import io

import numpy as np
import pytest

from plqmc import dataio


def test_parse_two_items():
    ds = dataio.parse_libsvm_qid("1 qid:a 1:0.5\n0 qid:a 2:1.0\n")
    assert len(ds) == 1
    q = ds.queries[0]
    assert q.qid == "a"
    np.testing.assert_array_equal(q.features, [[0.5, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(q.rel, [1, 0])


def test_parse_feature_dim_and_max_grade():
    ds = dataio.parse_libsvm_qid("2 qid:x 3:1\n")
    assert ds.feature_dim == 3 and ds.max_grade == 2
    np.testing.assert_array_equal(ds.queries[0].features, [[0, 0, 1]])


def test_comment_only_is_empty():
    with pytest.raises(dataio.EmptyDatasetError):
        dataio.parse_libsvm_qid("# comment\n")
    with pytest.raises(dataio.EmptyDatasetError):
        dataio.parse_libsvm_qid("")


def test_inline_comments_and_file_objects():
    ds = dataio.parse_libsvm_qid(io.StringIO("1 qid:1 1:2 # doc=17\n\n0 qid:1 1:3\n"))
    np.testing.assert_array_equal(ds.queries[0].features[:, 0], [2, 3])


def test_consecutive_grouping():
    ds = dataio.parse_libsvm_qid("1 qid:a 1:1\n0 qid:b 1:1\n1 qid:a 1:2\n")
    assert [q.qid for q in ds.queries] == ["a", "b", "a"]


@pytest.mark.parametrize(
    "text,line",
    [
        ("x qid:a 1:1\n", 1),
        ("1 qid:a 1:1\n1 a 1:1\n", 2),
        ("1 qid:a 1:1\n\n1 qid:a 1:z\n", 3),
        ("1 qid:a 2:1 1:1\n", 1),
        ("1 qid:a 0:1\n", 1),
        ("1 qid:a 1\n", 1),
    ],
)
def test_parse_errors_carry_line_number(text, line):
    with pytest.raises(dataio.ParseError) as err:
        dataio.parse_libsvm_qid(text)
    assert err.value.line_no == line
    assert f"line {line}" in str(err.value)


def test_libsvm_round_trip():
    ds = dataio.synthetic_stream(6, 4, 5, seed=3)
    back = dataio.parse_libsvm_qid(dataio.format_libsvm(ds))
    assert len(back) == len(ds) and back.feature_dim == ds.feature_dim
    for a, b in zip(ds.queries, back.queries):
        assert a.qid == b.qid
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.rel, b.rel)


def test_synthetic_stream_deterministic():
    a = dataio.synthetic_stream(10, 3, 4, 9)
    b = dataio.synthetic_stream(10, 3, 4, 9)
    for qa, qb in zip(a.queries, b.queries):
        assert qa.features.tobytes() == qb.features.tobytes()
        assert qa.rel.tobytes() == qb.rel.tobytes()


def test_synthetic_stream_balanced_and_single_item():
    ds = dataio.synthetic_stream(10, 3, 20, 0)
    assert all(q.rel.sum() == 5 for q in ds.queries)
    assert all(q.size == 1 for q in dataio.synthetic_stream(1, 3, 5, 0).queries)


def test_batches():
    ds = dataio.synthetic_stream(3, 2, 10, 0)
    sizes = [len(b) for b in ds.batches(4)]
    assert sizes == [4, 4, 2]


def test_write_results_round_trip(tmp_path):
    rows = [{"a": 1, "b": 0.1 + 0.2, "c": "MC"}, {"a": 2, "b": float("nan"), "c": "Halton"}]
    path = tmp_path / "t.csv"
    dataio.write_results(rows, path, ("c", "a", "b"))
    raw = path.read_bytes()
    assert raw.startswith(b"c,a,b\n") and b"\r" not in raw
    back = dataio.read_results(path)
    assert back[0]["b"] == 0.1 + 0.2
    assert np.isnan(back[1]["b"])
    assert back[1]["c"] == "Halton"


def test_write_results_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        dataio.write_results([], tmp_path / "x.csv", ("a",))


def test_write_results_io_error_mentions_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        dataio.write_results([{"a": 1}], blocker / "sub" / "x.csv", ("a",))


def test_output_dir_env(monkeypatch):
    monkeypatch.setenv("PLQMC_OUT_DIR", "/tmp/elsewhere")
    assert str(dataio.output_dir()) == "/tmp/elsewhere"
