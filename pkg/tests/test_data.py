import numpy as np
import pytest

from dpfair.data import (
    CONTINUOUS,
    FIELDS,
    AdultParseError,
    ColumnSpec,
    DegenerateColumnError,
    ProcessedDataset,
    RawRecord,
    SchemaError,
    SplitSpec,
    build_schema,
    encode,
    encode_and_split,
    group_statistics,
    listwise_delete,
    parse_adult,
    read_schema,
    split_membership,
    write_schema,
)

TRAIN_LINE = (
    "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, "
    "Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K"
)
TEST_LINE = (
    "25, Private, 226802, 11th, 7, Never-married, Machine-op-inspct, "
    "Own-child, Black, Male, 0, 0, 40, United-States, <=50K."
)


def _record(source="train", **overrides):
    values = dict(zip(FIELDS, [v.strip() for v in TRAIN_LINE.split(",")]))
    values.update({k.replace("_", "-"): v for k, v in overrides.items()})
    return RawRecord(tuple(values[f] for f in FIELDS), source)


def _tiny_records():
    rows = []
    for i, (sex, race, income) in enumerate(
        [
            ("Male", "White", ">50K"),
            ("Female", "Black", "<=50K"),
            ("Male", "Asian-Pac-Islander", "<=50K"),
            ("Female", "White", ">50K"),
            ("Male", "Black", "<=50K"),
            ("Female", "White", "<=50K"),
        ]
    ):
        rows.append(
            _record(
                "test" if i >= 4 else "train",
                sex=sex,
                race=race,
                income=income,
                age=str(20 + 5 * i),
                fnlwgt=str(1000 + 37 * i * i),
                capital_gain=str(i * 10),
                capital_loss=str((i % 2) * 5),
                hours_per_week=str(30 + i),
                education_num=str(9 + i),
            )
        )
    return rows


class TestParse:
    def test_train_line(self, tmp_path):
        (tmp_path / "a.data").write_text(TRAIN_LINE + "\n\n")
        (tmp_path / "a.test").write_text("|1x3 Cross validator\n" + TEST_LINE + "\n")
        recs = parse_adult(tmp_path / "a.data", tmp_path / "a.test")
        assert len(recs) == 2
        assert recs[0].label == "<=50K"
        assert recs[0]["workclass"] == "State-gov"
        assert recs[0].source == "train"

    def test_test_label_period_stripped(self, tmp_path):
        (tmp_path / "a.data").write_text("")
        (tmp_path / "a.test").write_text("|1x3 Cross validator\n" + TEST_LINE + "\n")
        (rec,) = parse_adult(tmp_path / "a.data", tmp_path / "a.test")
        assert rec.label == "<=50K"
        assert rec.source == "test"
        assert all(v == v.strip() for v in rec.values)

    def test_malformed_line_reports_line_number(self, tmp_path):
        (tmp_path / "a.data").write_text(TRAIN_LINE + "\n" + "1, 2, 3\n")
        (tmp_path / "a.test").write_text("")
        with pytest.raises(AdultParseError, match=":2:"):
            parse_adult(tmp_path / "a.data", tmp_path / "a.test")

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            parse_adult(tmp_path / "nope", tmp_path / "nope2")


class TestListwiseDelete:
    def test_clean_record_retained(self):
        r = _record()
        assert listwise_delete([r]) == [r]

    def test_missing_occupation_removed(self):
        bad = _record(occupation="?")
        good = _record(age="50")
        assert listwise_delete([good, bad, good]) == [good, good]


class TestEncode:
    def test_one_hot_three_categories(self):
        records = _tiny_records()
        ds = encode_and_split(records, SplitSpec(0.5, 0.2, 0.3, shuffle_seed=1))
        race_cols = [j for j, c in enumerate(ds.columns) if c.attribute == "race"]
        assert len(race_cols) == 3
        np.testing.assert_array_equal(ds.features[:, race_cols].sum(axis=1), 1.0)

    def test_dummy_blocks_sum_to_one(self):
        ds = encode_and_split(_tiny_records(), SplitSpec(0.5, 0.2, 0.3))
        for attr in {c.attribute for c in ds.columns if c.kind == "dummy"}:
            cols = [j for j, c in enumerate(ds.columns) if c.attribute == attr]
            block = ds.features[:, cols]
            assert set(np.unique(block)) <= {0.0, 1.0}
            np.testing.assert_array_equal(block.sum(axis=1), 1.0)

    def test_hand_zscore(self):
        # ages [1, 2, 3] as the entire train split -> [-1, 0, 1] (n-1 denominator)
        records = [
            _record(age=str(a), fnlwgt=str(10 * a), capital_gain=str(a), capital_loss=str(a),
                    hours_per_week=str(a), education_num=str(a))
            for a in (1, 2, 3)
        ]
        ds = encode_and_split(records, SplitSpec(1.0, 0.0, 0.0))
        assert list(ds.split) == ["train"] * 3
        j = ds.column_names.index("age")
        np.testing.assert_allclose(ds.features[:, j], [-1.0, 0.0, 1.0], atol=1e-15)
        assert ds.columns[j].mean == 2.0 and ds.columns[j].std == 1.0

    def test_unseen_category_raises(self):
        records = _tiny_records()
        schema = build_schema(records[:2])
        fitted = tuple(
            ColumnSpec(c.attribute, c.kind, c.category, 0.0, 1.0) if c.kind == "continuous" else c
            for c in schema
        )
        with pytest.raises(SchemaError, match="unseen category"):
            encode(records, fitted)

    def test_zero_variance_column_raises(self):
        records = [
            _record(age=str(20 + i), fnlwgt=str(100 + i), capital_gain=str(i), capital_loss="0",
                    hours_per_week=str(30 + i), education_num=str(i))
            for i in range(5)
        ]
        with pytest.raises(DegenerateColumnError, match="capital-loss"):
            encode_and_split(records, SplitSpec(0.6, 0.1, 0.3))

    def test_labels_and_protected(self):
        ds = encode_and_split(_tiny_records(), SplitSpec(0.5, 0.2, 0.3))
        np.testing.assert_array_equal(ds.labels, [1, 0, 0, 1, 0, 0])
        np.testing.assert_array_equal(ds.protected, [1, 0, 1, 0, 1, 0])

    def test_test_file_rows_are_test_split(self):
        ds = encode_and_split(_tiny_records(), SplitSpec(0.5, 0.2, 0.3))
        assert list(ds.split[4:]) == ["test", "test"]
        assert set(ds.split[:4]) <= {"train", "validation"}

    def test_dataset_is_read_only(self):
        ds = encode_and_split(_tiny_records(), SplitSpec(0.5, 0.2, 0.3))
        with pytest.raises(ValueError):
            ds.features[0, 0] = 5.0

    def test_row_count_mismatch(self):
        with pytest.raises(ValueError):
            ProcessedDataset(np.zeros((3, 2)), np.zeros(2), np.zeros(3), np.array(["train"] * 3))


class TestSchemaRoundTrip:
    def test_round_trip_exact(self, tmp_path):
        ds = encode_and_split(_tiny_records(), SplitSpec(0.5, 0.2, 0.3))
        path = write_schema(ds.columns, tmp_path / "s.schema")
        assert read_schema(path) == ds.columns

    def test_csv_export(self, tmp_path):
        ds = encode_and_split(_tiny_records(), SplitSpec(0.5, 0.2, 0.3))
        csv_path, schema_path = ds.to_csv(tmp_path / "out.csv")
        lines = csv_path.read_text().splitlines()
        assert lines[0].split(",")[-3:] == ["label", "protected", "split"]
        assert len(lines) == len(ds) + 1
        assert read_schema(schema_path) == ds.columns


class TestSplit:
    def test_determinism(self):
        recs = _tiny_records() * 10
        a = split_membership(recs, SplitSpec(shuffle_seed=7))
        b = split_membership(recs, SplitSpec(shuffle_seed=7))
        np.testing.assert_array_equal(a, b)

    def test_bad_fractions(self):
        with pytest.raises(ValueError):
            SplitSpec(0.5, 0.5, 0.5)


class TestGroupStatistics:
    def test_two_rows(self):
        ds = ProcessedDataset(
            np.zeros((2, 1)), np.array([0, 0]), np.array([1, 0]), np.array(["train", "test"])
        )
        gs = group_statistics(ds)
        assert (gs.low_income_rate_female, gs.low_income_rate_male) == (1.0, 1.0)
        assert gs.female_fraction == 0.5
        assert gs.majority_label_fraction == 1.0

    def test_empty_group(self):
        ds = ProcessedDataset(np.zeros((2, 1)), np.array([0, 1]), np.array([1, 1]), np.array(["train"] * 2))
        with pytest.raises(ZeroDivisionError):
            group_statistics(ds)


def _count_data_lines(path):
    # independent pass over the raw text
    n = 0
    with open(path) as fh:
        for line in fh:
            if line.strip() and not line.startswith("|"):
                n += 1
    return n


def _count_complete_lines(path):
    n = 0
    with open(path) as fh:
        for line in fh:
            if line.strip() and not line.startswith("|") and "?" not in line:
                n += 1
    return n


class TestCanonicalAdult:
    def test_line_counts(self, adult_dir):
        assert _count_data_lines(adult_dir / "adult.data") == 32561
        assert _count_data_lines(adult_dir / "adult.test") == 16281
        recs = parse_adult(adult_dir / "adult.data", adult_dir / "adult.test")
        assert sum(r.source == "train" for r in recs) == 32561
        assert sum(r.source == "test" for r in recs) == 16281

    def test_listwise_deletion_counts(self, adult_dir):
        assert _count_complete_lines(adult_dir / "adult.data") == 30162
        assert _count_complete_lines(adult_dir / "adult.test") == 15060
        clean = listwise_delete(parse_adult(adult_dir / "adult.data", adult_dir / "adult.test"))
        assert len(clean) == 45222

    def test_processed_invariants(self, adult):
        assert adult.features.shape[0] == len(adult.labels) == len(adult.protected) == len(adult.split)
        assert (adult.split == "test").sum() == 15060
        assert (adult.split != "test").sum() == 30162
        assert set(np.unique(adult.labels)) == {0, 1}
        assert set(np.unique(adult.protected)) == {0, 1}
        assert np.isfinite(adult.features).all()

    def test_no_leakage(self, adult):
        train = adult.features[adult.split == "train"]
        for j, col in enumerate(adult.columns):
            if col.kind == "continuous":
                np.testing.assert_allclose(train[:, j].mean(), 0.0, atol=1e-9)
                np.testing.assert_allclose(train[:, j].std(ddof=1), 1.0, atol=1e-9)
        assert [c.attribute for c in adult.columns if c.kind == "continuous"] == list(CONTINUOUS)

    def test_split_fractions(self, adult):
        for split, target in (("train", 0.534), ("validation", 0.133), ("test", 0.333)):
            assert abs((adult.split == split).mean() - target) <= 0.005

    def test_majority_baseline_on_test(self, adult):
        test = adult.subset("test")
        assert abs((test.labels == 0).mean() - 0.754) < 0.001
