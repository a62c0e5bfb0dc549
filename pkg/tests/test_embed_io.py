import struct

import numpy as np
import pytest

from reldistill import embed_io
from reldistill.errors import (
    BadMagic,
    InvariantViolation,
    LengthMismatch,
    ParseError,
    SchemaMismatch,
    TruncatedPayload,
    UnsupportedDtype,
)
from reldistill.records import Checkpoint, RunRecord


def make_record(n_checkpoints=3):
    checkpoints = [
        Checkpoint(iteration=i * 10, loss=1.0 / (i + 1), uniformity=0.5 + 0.01 * i,
                   tolerance=0.6 - 0.01 * i, modality_gap=0.1 * i)
        for i in range(n_checkpoints)
    ]
    last = checkpoints[-1]
    return RunRecord(
        config={"clusters": 1, "n_points": 8, "seed": 4},
        seed=4,
        source_uniformity=0.89,
        source_tolerance=0.66,
        checkpoints=checkpoints,
        summary={
            "delta_uniformity": abs(last.uniformity - 0.89),
            "delta_tolerance": abs(last.tolerance - 0.66),
            "final_modality_gap": last.modality_gap,
        },
        conventions={"note": "test"},
    )


class TestEmbeddings:
    def test_float64_roundtrip_bit_identical(self, rng, tmp_path):
        m = rng.standard_normal((5, 3))
        path = tmp_path / "m.emb"
        embed_io.write_embeddings(path, m)
        back = embed_io.read_embeddings(path)
        np.testing.assert_array_equal(back, m)
        assert back.dtype == np.float64

    def test_float32_widens_exactly(self, rng, tmp_path):
        m = rng.standard_normal((4, 2))
        path = tmp_path / "m.emb"
        embed_io.write_embeddings(path, m, dtype="float32")
        back = embed_io.read_embeddings(path)
        np.testing.assert_array_equal(back, m.astype(np.float32).astype(np.float64))

    def test_random_roundtrips(self, tmp_path):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            m = rng.standard_normal((int(rng.integers(1, 9)), int(rng.integers(1, 6))))
            path = tmp_path / "r.emb"
            embed_io.write_embeddings(path, m)
            np.testing.assert_array_equal(embed_io.read_embeddings(path), m)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.emb"
        path.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(BadMagic):
            embed_io.read_embeddings(path)

    def test_truncated_payload(self, rng, tmp_path):
        path = tmp_path / "t.emb"
        embed_io.write_embeddings(path, rng.standard_normal((4, 4)))
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(TruncatedPayload):
            embed_io.read_embeddings(path)

    def test_oversized_payload_rejected(self, rng, tmp_path):
        path = tmp_path / "o.emb"
        embed_io.write_embeddings(path, rng.standard_normal((2, 2)))
        path.write_bytes(path.read_bytes() + b"junk")
        with pytest.raises(TruncatedPayload):
            embed_io.read_embeddings(path)

    def test_header_declares_more_than_file(self, tmp_path):
        # hostile header: huge row count, tiny payload; must not allocate
        path = tmp_path / "h.emb"
        path.write_bytes(struct.pack("<4sIIB", b"EMB1", 2**31, 2**10, 1) + b"\x00" * 64)
        with pytest.raises(TruncatedPayload):
            embed_io.read_embeddings(path)

    def test_unknown_dtype_code(self, tmp_path):
        path = tmp_path / "d.emb"
        path.write_bytes(struct.pack("<4sIIB", b"EMB1", 1, 1, 7) + b"\x00" * 8)
        with pytest.raises(UnsupportedDtype):
            embed_io.read_embeddings(path)

    def test_write_rejects_unknown_dtype(self, rng, tmp_path):
        with pytest.raises(UnsupportedDtype):
            embed_io.write_embeddings(tmp_path / "w.emb", rng.standard_normal((2, 2)),
                                      dtype="float16")


class TestLabels:
    def test_text_parse(self, tmp_path):
        path = tmp_path / "l.txt"
        path.write_text("0\n0\n1\n")
        np.testing.assert_array_equal(embed_io.read_labels(path), [0, 0, 1])

    def test_text_parse_error_line(self, tmp_path):
        path = tmp_path / "l.txt"
        path.write_text("0\nx\n")
        with pytest.raises(ParseError) as exc:
            embed_io.read_labels(path)
        assert exc.value.line == 2

    def test_negative_rejected(self, tmp_path):
        path = tmp_path / "l.txt"
        path.write_text("0\n-2\n")
        with pytest.raises(ParseError):
            embed_io.read_labels(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "l.txt"
        path.write_text("")
        labels = embed_io.read_labels(path)
        assert labels.size == 0
        with pytest.raises(LengthMismatch):
            embed_io.check_paired(np.ones((3, 2)), labels)

    def test_binary_roundtrip(self, tmp_path):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            labels = rng.integers(0, 10, size=int(rng.integers(0, 12)))
            path = tmp_path / "l.lbl"
            embed_io.write_labels(path, labels)
            np.testing.assert_array_equal(embed_io.read_labels(path), labels)

    def test_text_roundtrip(self, rng, tmp_path):
        labels = rng.integers(0, 5, size=9)
        path = tmp_path / "l.txt"
        embed_io.write_labels(path, labels, binary=False)
        np.testing.assert_array_equal(embed_io.read_labels(path), labels)

    def test_binary_truncated(self, tmp_path):
        path = tmp_path / "l.lbl"
        embed_io.write_labels(path, np.arange(5))
        path.write_bytes(path.read_bytes()[:-2])
        with pytest.raises(TruncatedPayload):
            embed_io.read_labels(path)


class TestRunRecords:
    def test_roundtrip_equality(self, tmp_path):
        record = make_record()
        path = tmp_path / "run.json"
        embed_io.write_run_record(path, record)
        back = embed_io.read_run_record(path)
        assert back == record
        assert back.to_json_dict() == record.to_json_dict()

    def test_csv_alongside(self, tmp_path):
        record = make_record()
        path = tmp_path / "run.json"
        embed_io.write_run_record(path, record)
        csv_path = embed_io.trajectory_csv_path(path)
        lines = csv_path.read_text().strip().split("\n")
        assert lines[0] == "iteration,loss,uniformity,tolerance,modality_gap"
        assert len(lines) == 1 + len(record.checkpoints)
        first = lines[1].split(",")
        assert int(first[0]) == record.checkpoints[0].iteration
        assert float(first[1]) == record.checkpoints[0].loss

    def test_unsorted_checkpoints_rejected_on_write(self, tmp_path):
        record = make_record()
        record.checkpoints = list(reversed(record.checkpoints))
        with pytest.raises(InvariantViolation):
            embed_io.write_run_record(tmp_path / "bad.json", record)

    def test_inconsistent_summary_rejected(self, tmp_path):
        record = make_record()
        record.summary["final_modality_gap"] += 1.0
        with pytest.raises(InvariantViolation):
            embed_io.write_run_record(tmp_path / "bad.json", record)

    def test_unknown_format_version(self, tmp_path):
        record = make_record()
        path = tmp_path / "run.json"
        embed_io.write_run_record(path, record)
        text = path.read_text().replace('"format_version": 1', '"format_version": 99')
        path.write_text(text)
        with pytest.raises(SchemaMismatch):
            embed_io.read_run_record(path)

    def test_random_record_roundtrips(self, tmp_path):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(1, 8))
            checkpoints = []
            it = 0
            for _ in range(n):
                checkpoints.append(Checkpoint(
                    iteration=it,
                    loss=float(rng.standard_normal()),
                    uniformity=float(rng.uniform(0, 4)),
                    tolerance=float(rng.uniform(-1, 1)),
                    modality_gap=float(rng.uniform(0, 2)),
                ))
                it += int(rng.integers(1, 50))
            last = checkpoints[-1]
            src_u, src_t = float(rng.uniform(0, 2)), float(rng.uniform(0, 1))
            record = RunRecord(
                config={"seed": seed},
                seed=seed,
                source_uniformity=src_u,
                source_tolerance=src_t,
                checkpoints=checkpoints,
                summary={
                    "delta_uniformity": abs(last.uniformity - src_u),
                    "delta_tolerance": abs(last.tolerance - src_t),
                    "final_modality_gap": last.modality_gap,
                },
            )
            path = tmp_path / "r.json"
            embed_io.write_run_record(path, record)
            assert embed_io.read_run_record(path) == record
