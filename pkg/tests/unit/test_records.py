"""
Unit Tests for Run Records

Tests for RunRecord serialization, the JSON Lines store and record merging.
"""

import json

import numpy as np
import pytest


def _record(trial, ensemble="gaussian_real", config_hash="abc", **kwargs):
    from src.records import RunRecord

    return RunRecord(trial_index=trial, ensemble=ensemble, config_hash=config_hash, seed=1, **kwargs)


class TestRunRecord:
    """Tests for RunRecord"""

    def test_numpy_values_serialize(self):
        """Numpy scalars and arrays become JSON builtins"""
        record = _record(0, stats={"lambda_max": np.float64(2.5), "edge": np.bool_(True), "k": np.int64(3)})
        record.lambdas = np.array([0.5, 1.5])

        data = json.loads(record.to_json())

        assert data["stats"] == {"edge": True, "k": 3, "lambda_max": 2.5}
        assert data["lambdas"] == [0.5, 1.5]

    def test_float_repr_is_exact(self):
        """Stored floats parse back bit-identically"""
        value = 0.1 + 0.2
        record = _record(0, stats={"x": value})

        assert json.loads(record.to_json())["stats"]["x"] == value

    def test_body_drops_wall_time(self):
        from src.records import RunRecord

        fast = _record(2, wall_time=0.1)
        slow = _record(2, wall_time=9.0)

        assert fast.body() == slow.body()
        assert "wall_time" not in fast.body()
        assert RunRecord.from_dict(slow.to_dict()).wall_time == 9.0

    def test_key_and_status(self):
        from src.records import STATUS_FAILED

        record = _record(4, ensemble="rademacher", status=STATUS_FAILED, error="NonConvergenceError")

        assert record.key == (4, "rademacher")
        assert not record.ok

    def test_from_dict_missing_field(self):
        from src.exceptions import DataIntegrityError
        from src.records import RunRecord

        with pytest.raises(DataIntegrityError):
            RunRecord.from_dict({"trial_index": 0})

    def test_dumps_is_canonical(self):
        from src.records import dumps

        assert dumps({"b": 1, "a": [np.float32(0.5)]}) == '{"a":[0.5],"b":1}'

    @pytest.mark.parametrize(
        "value, text",
        [
            (0.1, "0.10000000000000001"),
            (1 / 3, "0.33333333333333331"),
            (2.0, "2.0"),
            (-0.0, "-0.0"),
            (1e20, "1e+20"),
            (float("inf"), "Infinity"),
        ],
    )
    def test_floats_have_17_significant_digits(self, value, text):
        from src.records import dumps

        assert dumps({"x": value}) == '{"x":' + text + "}"

    def test_float_text_reloads_bit_exact(self, rng):
        from src.records import dumps

        values = rng.standard_normal(200) * 10.0 ** rng.integers(-30, 30, size=200)
        loaded = json.loads(dumps(values))

        assert all(isinstance(v, float) for v in loaded)
        assert np.array_equal(np.array(loaded), values)

    def test_indented_layout_matches_json(self):
        """Non-float layout is identical to json.dumps with sorted keys"""
        from src.records import dumps

        payload = {"b": [1, {"c": None, "a": True}], "a": {}, "s": "x", "e": []}

        assert dumps(payload, indent=2) == json.dumps(payload, sort_keys=True, indent=2)
        assert dumps(payload) == json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def test_record_line_uses_17_digits(self):
        record = _record(0, stats={"edge": 0.1})

        assert '"edge":0.10000000000000001' in record.to_json()


class TestRecordStore:
    """Tests for RecordStore"""

    def test_append_and_read(self, tmp_path):
        from src.records import RecordStore

        store = RecordStore(tmp_path / "records.jsonl")
        store.append(_record(1))
        store.append(_record(0))

        records = store.read()

        assert [r.trial_index for r in records] == [1, 0]
        assert store.path.read_text().count("\n") == 2

    def test_read_missing_file(self, tmp_path):
        from src.records import RecordStore

        assert RecordStore(tmp_path / "absent.jsonl").read() == []

    def test_repair_truncated_tail(self, tmp_path):
        """A killed writer leaves a partial last line that repair removes"""
        from src.records import RecordStore

        store = RecordStore(tmp_path / "records.jsonl")
        store.append(_record(0))
        with store.path.open("a") as fh:
            fh.write('{"trial_index": 1, "ens')

        assert store.repair() > 0
        assert store.repair() == 0
        assert [r.trial_index for r in store.read()] == [0]

    def test_corrupt_last_line_is_skipped(self, tmp_path):
        from src.records import RecordStore

        store = RecordStore(tmp_path / "records.jsonl")
        store.append(_record(0))
        with store.path.open("a") as fh:
            fh.write("not json\n")

        assert len(store.read()) == 1

    def test_corrupt_middle_line_raises(self, tmp_path):
        from src.exceptions import DataIntegrityError
        from src.records import RecordStore

        store = RecordStore(tmp_path / "records.jsonl")
        store.append(_record(0))
        with store.path.open("a") as fh:
            fh.write("not json\n")
        store.append(_record(1))

        with pytest.raises(DataIntegrityError):
            store.read()

    def test_completed_keys(self, tmp_path):
        from src.records import RecordStore

        store = RecordStore(tmp_path / "records.jsonl")
        store.append(_record(0))
        store.append(_record(0, ensemble="rademacher"))

        assert store.completed_keys("abc") == {(0, "gaussian_real"), (0, "rademacher")}

    def test_completed_keys_foreign_hash(self, tmp_path):
        from src.exceptions import ConfigHashMismatchError
        from src.records import RecordStore

        store = RecordStore(tmp_path / "records.jsonl")
        store.append(_record(0, config_hash="other"))

        with pytest.raises(ConfigHashMismatchError):
            store.completed_keys("abc")

    def test_write_all_sorts(self, tmp_path):
        from src.records import RecordStore

        store = RecordStore(tmp_path / "records.jsonl")
        store.write_all([_record(2), _record(0, ensemble="rademacher"), _record(0)])

        assert [r.key for r in store.read()] == [(0, "gaussian_real"), (0, "rademacher"), (2, "gaussian_real")]


class TestMergeRecords:
    """Tests for merge_records"""

    def test_union_deduplicates(self):
        from src.records import merge_records

        merged = merge_records([[_record(0), _record(1)], [_record(1, wall_time=3.0), _record(2)]], "abc")

        assert [r.trial_index for r in merged] == [0, 1, 2]

    def test_order_independent(self):
        from src.records import merge_records

        first = [_record(3), _record(1)]
        second = [_record(0), _record(2)]

        forward = [r.body() for r in merge_records([first, second], "abc")]
        backward = [r.body() for r in merge_records([second, first], "abc")]

        assert forward == backward

    def test_idempotent(self):
        from src.records import merge_records

        records = [_record(0), _record(1)]
        once = merge_records([records], "abc")

        assert [r.body() for r in merge_records([once, once], "abc")] == [r.body() for r in once]

    def test_conflicting_bodies(self):
        from src.exceptions import DataIntegrityError
        from src.records import merge_records

        with pytest.raises(DataIntegrityError):
            merge_records([[_record(0, stats={"x": 1.0})], [_record(0, stats={"x": 2.0})]], "abc")

    def test_hash_mismatch(self):
        from src.exceptions import ConfigHashMismatchError
        from src.records import merge_records

        with pytest.raises(ConfigHashMismatchError):
            merge_records([[_record(0)], [_record(1, config_hash="zzz")]], "abc")
