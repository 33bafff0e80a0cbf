import numpy as np
import pytest

from pilotmatch import core
from pilotmatch.core import (Dataset, MatchedSet, Matching, ValidationError,
                             read_csv, read_matching_csv, validate,
                             validate_matching, write_csv, write_matching_csv)


def _dataset(n=6, p=2, n_t=2, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    T = np.zeros(n, dtype=np.int64)
    T[:n_t] = 1
    Y = rng.normal(size=n)
    return Dataset(X=X, T=T, Y=Y)


class TestValidate:
    def test_accepts_clean_dataset(self):
        validate(_dataset())

    def test_rejects_nonbinary_treatment(self):
        ds = _dataset()
        ds.T[0] = 2
        with pytest.raises(ValidationError, match="non-binary"):
            validate(ds)

    def test_rejects_empty_arms(self):
        ds = _dataset()
        with pytest.raises(ValidationError, match="empty treatment arm"):
            validate(Dataset(X=ds.X, T=np.zeros_like(ds.T), Y=ds.Y))
        with pytest.raises(ValidationError, match="empty control arm"):
            validate(Dataset(X=ds.X, T=np.ones_like(ds.T), Y=ds.Y))

    def test_rejects_nonfinite(self):
        ds = _dataset()
        ds.X[1, 1] = np.nan
        with pytest.raises(ValidationError, match="non-finite"):
            validate(ds)

    def test_rejects_length_mismatch(self):
        ds = _dataset()
        with pytest.raises(ValidationError, match="mismatch"):
            validate(Dataset(X=ds.X, T=ds.T[:-1], Y=ds.Y))


class TestValidateMatching:
    def test_good_matching(self):
        ds = _dataset()
        m = Matching(sets=(MatchedSet(0, (2, 3)), MatchedSet(1, (4,))),
                     space=core.RAW_COVARIATES, replacement="without", k=None)
        validate_matching(m, ds)

    def test_treated_role_enforced(self):
        ds = _dataset()
        m = Matching(sets=(MatchedSet(3, (4,)),), space=core.RAW_COVARIATES,
                     replacement="without", k=1)
        with pytest.raises(ValidationError, match="not treated"):
            validate_matching(m, ds)

    def test_reuse_rejected_without_replacement(self):
        ds = _dataset()
        m = Matching(sets=(MatchedSet(0, (2,)), MatchedSet(1, (2,))),
                     space=core.RAW_COVARIATES, replacement="without", k=1)
        with pytest.raises(ValidationError, match="reused"):
            validate_matching(m, ds)

    def test_k_mismatch_rejected(self):
        ds = _dataset()
        m = Matching(sets=(MatchedSet(0, (2, 3)),), space=core.RAW_COVARIATES,
                     replacement="without", k=1)
        with pytest.raises(ValidationError, match="expected k=1"):
            validate_matching(m, ds)


class TestCsvRoundTrip:
    def test_exact_round_trip(self, tmp_path, base_dataset):
        path = tmp_path / "ds.csv"
        write_csv(base_dataset, path)
        back = read_csv(path)
        np.testing.assert_array_equal(back.X, base_dataset.X)
        np.testing.assert_array_equal(back.T, base_dataset.T)
        np.testing.assert_array_equal(back.Y, base_dataset.Y)
        np.testing.assert_array_equal(back.truth.phi, base_dataset.truth.phi)
        np.testing.assert_array_equal(back.truth.psi, base_dataset.truth.psi)

    def test_truthless_round_trip(self, tmp_path):
        ds = _dataset()
        path = tmp_path / "ds.csv"
        write_csv(ds, path)
        back = read_csv(path)
        assert back.truth is None
        np.testing.assert_array_equal(back.X, ds.X)

    def test_error_names_row_and_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,x2,t,y\n1.0,2.0,0,3.0\n1.0,oops,1,3.0\n")
        with pytest.raises(ValidationError, match="row 3, column x2"):
            read_csv(path)

    def test_missing_column_reported(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,x2,y\n1.0,2.0,3.0\n")
        with pytest.raises(ValidationError, match="missing required column t"):
            read_csv(path)

    def test_nonbinary_treatment_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,x2,t,y\n1.0,2.0,2,3.0\n")
        with pytest.raises(ValidationError, match="non-binary treatment at row 2"):
            read_csv(path)


class TestMatchingCsv:
    def test_round_trip(self, tmp_path):
        m = Matching(sets=(MatchedSet(0, (2, 3)), MatchedSet(1, (4, 5))),
                     space=core.SCORE_2D, replacement="without", k=2)
        path = tmp_path / "m.csv"
        write_matching_csv(m, path)
        back = read_matching_csv(path)
        assert [s.treated for s in back.sets] == [0, 1]
        assert [s.controls for s in back.sets] == [(2, 3), (4, 5)]
        assert back.k == 2

    def test_one_based_ids_on_disk(self, tmp_path):
        m = Matching(sets=(MatchedSet(0, (1,)),), space=core.SCORE_2D,
                     replacement="without", k=1)
        path = tmp_path / "m.csv"
        write_matching_csv(m, path)
        text = path.read_text()
        assert "1,treated,1" in text and "1,control,2" in text
