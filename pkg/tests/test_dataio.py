import numpy as np
import pytest

from viscofit.dataio import (
    ExperimentRecord,
    load_experiment_csv,
    load_experiments,
    save_experiment_csv,
    save_experiments,
)
from viscofit.errors import ParseError
from viscofit.reference import synthesize_dataset


def small_record(**over):
    kw = dict(
        id="tension_toy_rate0.1",
        mode="tension",
        composition_name="toy",
        c=0.3,
        rate=0.1,
        rate_unit="1/s",
        times=np.array([0.0, 1.0, 2.0, 3.0]),
        inputs=np.array([1.0, 1.1, 1.2, 1.3]),
        outputs=np.array([0.0, 0.5, 1.1, 1.4]),
        role="train",
    )
    kw.update(over)
    return ExperimentRecord(**kw)


class TestRecordValidation:
    def test_round_numbers_ok(self):
        rec = small_record()
        assert rec.n_samples == 4

    def test_nonmonotone_times(self):
        with pytest.raises(ParseError):
            small_record(times=np.array([0.0, 2.0, 1.0, 3.0]))

    def test_first_output_nonzero(self):
        with pytest.raises(ParseError):
            small_record(outputs=np.array([0.1, 0.5, 1.1, 1.4]))

    def test_unknown_mode(self):
        with pytest.raises(ParseError):
            small_record(mode="bending")

    def test_torsion_needs_geometry(self):
        with pytest.raises(ParseError):
            small_record(mode="torsion", id="torsion_toy_rate0.1")


class TestCsvRoundTrip:
    def test_round_trip_bitexact(self, tmp_path):
        records = synthesize_dataset(seed=11)
        paths = save_experiments(records, tmp_path)
        assert len(paths) == 20
        loaded = load_experiments(tmp_path)
        by_id = {r.id: r for r in loaded}
        for rec in records:
            other = by_id[rec.id]
            np.testing.assert_array_equal(rec.times, other.times)
            np.testing.assert_array_equal(rec.inputs, other.inputs)
            np.testing.assert_array_equal(rec.outputs, other.outputs)
            assert rec.c == other.c and rec.role == other.role
            assert rec.geometry == other.geometry

    def test_save_is_byte_stable(self, tmp_path):
        rec = small_record()
        save_experiment_csv(rec, tmp_path / "a.csv")
        save_experiment_csv(rec, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_schema_line_required(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("time_s,input,output\n0.0,1.0,0.0\n")
        with pytest.raises(ParseError):
            load_experiment_csv(p)

    def test_decreasing_time_names_line(self, tmp_path):
        rec = small_record()
        save_experiment_csv(rec, tmp_path / "x.csv")
        lines = (tmp_path / "x.csv").read_text().splitlines()
        # corrupt the second data row (line 11: schema + 7 meta + header + 2)
        data_start = next(i for i, ln in enumerate(lines)
                          if ln == "time_s,input,output") + 1
        lines[data_start + 1] = "0.5,1.1,0.5".replace("0.5,", "0.0,", 1)
        (tmp_path / "x.csv").write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as err:
            load_experiment_csv(tmp_path / "x.csv")
        assert f"{data_start + 2}" in str(err.value)  # 1-based line number

    def test_unknown_composition_with_explicit_c_accepted(self, tmp_path):
        rec = small_record(composition_name="mystery-blend", c=0.77)
        save_experiment_csv(rec, tmp_path / "m.csv")
        loaded = load_experiment_csv(tmp_path / "m.csv")
        assert loaded.c == 0.77

    def test_known_composition_with_wrong_c_rejected(self, tmp_path):
        rec = small_record(composition_name="toy", c=0.3)
        save_experiment_csv(rec, tmp_path / "k.csv")
        text = (tmp_path / "k.csv").read_text()
        text = text.replace("composition_name=toy", "composition_name=DM-50")
        (tmp_path / "k.csv").write_text(text)
        with pytest.raises(ParseError):
            load_experiment_csv(tmp_path / "k.csv")

    def test_missing_header_field(self, tmp_path):
        rec = small_record()
        save_experiment_csv(rec, tmp_path / "h.csv")
        text = (tmp_path / "h.csv").read_text().replace("# rate_unit=1/s\n", "")
        (tmp_path / "h.csv").write_text(text)
        with pytest.raises(ParseError):
            load_experiment_csv(tmp_path / "h.csv")

    def test_empty_directory(self, tmp_path):
        with pytest.raises(ParseError):
            load_experiments(tmp_path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_experiments(tmp_path / "nope.csv")

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        save_experiment_csv(small_record(), tmp_path / "t.csv")
        leftovers = [p for p in tmp_path.iterdir() if p.name != "t.csv"]
        assert leftovers == []
