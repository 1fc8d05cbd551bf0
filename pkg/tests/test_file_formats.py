# tests/test_file_formats.py
import os
import sys

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import constants as C
import file_formats as F
from hmm_core.errors import ModelFileError
from hmm_core.models import HmmModel, MomentMatrix, ObservationSequence

MODEL_TEXT = """\
# two-state reference model
2 2
0.7 0.3
0.4 0.6
# sensor
0.8 0.2
0.3 0.7
0.5 0.5
"""


class TestModelFile:
    def test_parse(self):
        model = F.parse_model(MODEL_TEXT)
        np.testing.assert_array_equal(model.P, [[0.7, 0.3], [0.4, 0.6]])
        np.testing.assert_array_equal(model.B, [[0.8, 0.2], [0.3, 0.7]])
        np.testing.assert_array_equal(model.pi0, [0.5, 0.5])

    def test_write_then_read(self, tmp_path):
        model = F.parse_model(MODEL_TEXT)
        path = tmp_path / "model.txt"
        F.write_model(model, path)
        again = F.read_model(path)
        np.testing.assert_array_equal(again.P, model.P)
        assert "# B" in path.read_text()

    def test_row_sum_error_names_the_line(self):
        text = MODEL_TEXT.replace("0.4 0.6", "0.4 0.5")
        with pytest.raises(ModelFileError) as info:
            F.parse_model(text)
        assert info.value.line_number == 4
        assert "line 4" in str(info.value)

    def test_shape_only_parse_keeps_bad_rows(self):
        text = MODEL_TEXT.replace("0.4 0.6", "0.4 0.5").replace("0.5 0.5", "-0.5 1.5")
        model = F.parse_model(text, check_distributions=False)
        np.testing.assert_array_equal(model.P[1], [0.4, 0.5])
        np.testing.assert_array_equal(model.pi0, [-0.5, 1.5])
        with pytest.raises(ModelFileError, match="expected 2 numbers"):
            F.parse_model(MODEL_TEXT.replace("0.3 0.7", "0.3"), check_distributions=False)

    def test_wrong_width(self):
        with pytest.raises(ModelFileError) as info:
            F.parse_model(MODEL_TEXT.replace("0.3 0.7", "0.3 0.7 0.0"))
        assert info.value.line_number == 7

    def test_not_a_number(self):
        with pytest.raises(ModelFileError, match="line 3"):
            F.parse_model(MODEL_TEXT.replace("0.7 0.3", "0.7 abc"))

    def test_truncated(self):
        with pytest.raises(ModelFileError, match="unexpected end of file"):
            F.parse_model("2 2\n0.5 0.5\n")

    def test_trailing_content(self):
        with pytest.raises(ModelFileError) as info:
            F.parse_model(MODEL_TEXT + "1 2\n")
        assert info.value.line_number == 9

    def test_bad_header(self):
        with pytest.raises(ModelFileError):
            F.parse_model("2\n")
        with pytest.raises(ModelFileError, match="empty"):
            F.parse_model("# nothing\n")

    def test_model_file_error_is_a_value_error(self):
        with pytest.raises(ValueError):
            F.parse_model("0 2\n")

    def test_lower_bound_matrix(self):
        L = F.parse_lower_bound_matrix("2 2\n0.3 0.1\n0.2 0.3\n")
        np.testing.assert_array_equal(L, [[0.3, 0.1], [0.2, 0.3]])
        with pytest.raises(ModelFileError):
            F.parse_lower_bound_matrix("2 2\n0.3 -0.1\n0.2 0.3\n")


class TestObservationFile:
    def test_one_based_labels(self):
        obs = F.parse_observations("1\n2\n# gap\n2\n1\n", num_outputs=2)
        np.testing.assert_array_equal(obs.labels, [0, 1, 1, 0])

    def test_out_of_range_label(self):
        with pytest.raises(ModelFileError) as info:
            F.parse_observations("1\n3\n", num_outputs=2)
        assert info.value.line_number == 2

    def test_zero_is_out_of_range(self):
        with pytest.raises(ModelFileError):
            F.parse_observations("0\n1\n", num_outputs=2)

    def test_too_short(self):
        with pytest.raises(ModelFileError):
            F.parse_observations("1\n", num_outputs=2)

    def test_format(self, tmp_path):
        obs = ObservationSequence(labels=[0, 2, 1], num_outputs=3)
        assert F.format_observations(obs) == "1\n3\n2\n"
        path = tmp_path / "obs.txt"
        F.write_observations(obs, path)
        np.testing.assert_array_equal(F.read_observations(path, 3).labels, obs.labels)


class TestConfig:
    def test_sizes_and_arms(self):
        assert F.parse_sizes("1e3, 1e4") == [1000, 10000]
        assert F.parse_arms("mm,2s,em-true") == [C.METHOD_MM, C.METHOD_TWO_STEP, C.METHOD_EM_TRUE]
        with pytest.raises(ValueError):
            F.parse_sizes("1.5")
        with pytest.raises(ValueError):
            F.parse_arms("gibbs")

    def test_parse_config(self):
        config = F.parse_config(
            "x = 3\ny=3  # outputs\nsizes=1e4,1e3\nreps=5\nseed=9\narms=em,mm\n"
        )
        assert config.num_states == 3
        assert config.sample_sizes == [1000, 10000]
        assert config.replicates == 5
        assert config.master_seed == 9
        # arms come back in canonical order
        assert config.arms == [C.METHOD_MM, C.METHOD_EM]

    def test_overrides_win(self):
        config = F.parse_config("x=2\ny=2\nreps=5\n", {"replicates": 2, "master_seed": None})
        assert config.replicates == 2
        assert config.master_seed == C.DEFAULT_MASTER_SEED

    def test_defaults(self):
        config = F.parse_config("x=2\ny=3\n")
        assert config.sample_sizes == C.DEFAULT_SAMPLE_SIZES
        assert config.arms == C.ALL_METHODS

    def test_unknown_key(self):
        with pytest.raises(ModelFileError) as info:
            F.parse_config("x=2\ncolour=blue\n")
        assert info.value.line_number == 2

    def test_missing_system_size(self):
        with pytest.raises(ValidationError):
            F.parse_config("reps=3\n")

    def test_invalid_size_reports_line(self):
        with pytest.raises(ModelFileError, match="line 3"):
            F.parse_config("x=2\ny=2\nsizes=abc\n")


def test_write_moments_csv(tmp_path):
    moments = MomentMatrix(matrix=[[0.1, 0.2], [0.3, 0.4]], kind="empirical", num_pairs=10)
    path = tmp_path / "moments.csv"
    F.write_moments_csv(moments, path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["1", "2"]
    np.testing.assert_allclose(frame.to_numpy(), moments.matrix)
