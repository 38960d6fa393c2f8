import io
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emotion_harness.schema import (
    EXPECTED_SPLIT_SIZES,
    DatasetSplit,
    DuplicateIdError,
    EmptyTextError,
    EncodingError,
    InvalidLabelError,
    LabeledExample,
    LabelSchema,
    LabelSet,
    MissingColumnError,
    dataset_stats,
    load_dataset,
    save_dataset,
    validate_against_expected,
)

from .conftest import EMOTIONS5, lexicon_split


def write(tmp_path, text, name="train.csv", encoding="utf-8"):
    path = tmp_path / name
    path.write_bytes(text.encode(encoding))
    return path


def test_schema_casefolds_and_rejects_duplicates():
    assert LabelSchema(["Anger", "FEAR"]).labels == ("anger", "fear")
    with pytest.raises(ValueError):
        LabelSchema(["anger", "Anger"])
    with pytest.raises(ValueError):
        LabelSchema([])


def test_labelset_validates_bits(schema5):
    with pytest.raises(ValueError):
        LabelSet(schema5, (0, 1))
    with pytest.raises(ValueError):
        LabelSet(schema5, (0, 2, 0, 0, 0))
    empty = LabelSet.empty(schema5)
    assert empty.is_empty() and empty.names == []
    assert LabelSet.from_names(schema5, ["Sadness", "joy"]).names == ["joy", "sadness"]


def test_infers_schema_from_header_in_file_order(tmp_path):
    path = write(tmp_path, "id,text,Joy,Anger\n1,hi there,1,0\n")
    split = load_dataset(path)
    assert split.schema.labels == ("joy", "anger")
    assert split.examples[0].gold.names == ["joy"]
    assert split.name == "train"


def test_header_only_gives_empty_split(tmp_path):
    split = load_dataset(write(tmp_path, "id,text,anger\n"))
    assert len(split) == 0


def test_label_cell_two_names_row_and_column(tmp_path):
    path = write(tmp_path, "id,text,anger,fear\na,ok,0,1\nb,bad,2,0\n")
    with pytest.raises(InvalidLabelError) as err:
        load_dataset(path)
    assert err.value.row == 3 and err.value.column == "anger"
    assert "row 3" in str(err.value) and "'anger'" in str(err.value)


def test_missing_columns(tmp_path):
    with pytest.raises(MissingColumnError, match="text"):
        load_dataset(write(tmp_path, "id,anger\n1,0\n"))
    with pytest.raises(MissingColumnError, match="surprise"):
        load_dataset(write(tmp_path, "id,text,anger\n1,x,0\n"), LabelSchema(["anger", "surprise"]))


def test_duplicate_id_and_empty_text(tmp_path):
    with pytest.raises(DuplicateIdError, match="row 3"):
        load_dataset(write(tmp_path, "id,text,anger\n1,x,0\n1,y,1\n"))
    with pytest.raises(EmptyTextError, match="row 2"):
        load_dataset(write(tmp_path, "id,text,anger\n1,  ,0\n"))


def test_duplicate_texts_are_allowed(tmp_path):
    split = load_dataset(write(tmp_path, "id,text,anger\n1,same,0\n2,same,1\n"))
    assert len(split) == 2


def test_non_utf8_is_rejected(tmp_path):
    path = write(tmp_path, "id,text,anger\n1,Olá ñ,0\n", encoding="latin-1")
    with pytest.raises(EncodingError):
        load_dataset(path)


def test_quoted_fields_and_multilingual_text(tmp_path):
    path = write(tmp_path, 'id,text,anger\n1,"Ele disse: ""olá"", e saiu",1\n2,"linha um\nlinha dois",0\n')
    split = load_dataset(path)
    assert split.examples[0].text == 'Ele disse: "olá", e saiu'
    assert split.examples[1].text == "linha um\nlinha dois"


def test_schema_override_ignores_extra_columns(tmp_path):
    path = write(tmp_path, "id,text,anger,disgust,fear\n1,x,1,1,0\n")
    split = load_dataset(path, LabelSchema(["fear", "anger"]))
    assert split.schema.labels == ("fear", "anger")
    assert split.examples[0].gold.bits == (0, 1)


def test_round_trip_identity(tmp_path):
    split = lexicon_split(25, seed=3, name="train")
    path = tmp_path / "train.csv"
    save_dataset(split, path)
    again = load_dataset(path)
    assert again == split
    save_dataset(again, tmp_path / "train2.csv")
    assert (tmp_path / "train2.csv").read_bytes() == path.read_bytes()


texts = st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc")), min_size=1).filter(str.strip)


@settings(max_examples=50, deadline=None)
@given(rows=st.lists(st.tuples(texts, st.tuples(*[st.integers(0, 1)] * 5)), max_size=12))
def test_round_trip_property(tmp_path_factory, rows):
    schema = LabelSchema(EMOTIONS5)
    split = DatasetSplit(
        "dev", schema, tuple(LabeledExample(str(i), t, LabelSet(schema, b)) for i, (t, b) in enumerate(rows))
    )
    path = tmp_path_factory.mktemp("rt") / "dev.csv"
    save_dataset(split, path)
    again = load_dataset(path)
    assert [(e.id, e.text, e.gold.bits) for e in again] == [(e.id, e.text, e.gold.bits) for e in split]
    assert all(len(e.gold.bits) == len(schema) for e in again)


def make_split(texts):
    schema = LabelSchema(["joy"])
    return DatasetSplit("train", schema, tuple(LabeledExample(str(i), t, LabelSet.empty(schema)) for i, t in enumerate(texts)))


def test_stats_single_example():
    hist = dataset_stats(make_split(["hello world"]), 5)
    assert hist.rows() == [(0, 5, 1)]
    assert hist.total == 1


def test_stats_hand_counted():
    lengths = [1, 2, 3, 4, 5, 9, 10, 10, 14, 21]
    split = make_split([" ".join(["w"] * n) for n in lengths])
    hist = dataset_stats(split, 5)
    # [0,5): 1,2,3,4  [5,10): 5,9  [10,15): 10,10,14  [15,20): none  [20,25): 21
    assert hist.rows() == [(0, 5, 4), (5, 10, 2), (10, 15, 3), (15, 20, 0), (20, 25, 1)]
    assert hist.total == 10


def test_stats_tokenizes_on_any_whitespace():
    hist = dataset_stats(make_split(["a\tb\n c   d"]), 1)
    assert hist.rows()[-1] == (4, 5, 1)


def test_stats_errors():
    with pytest.raises(ValueError):
        dataset_stats(make_split([]), 5)
    with pytest.raises(ValueError):
        dataset_stats(make_split(["x"]), 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 80), min_size=1, max_size=40), st.integers(1, 25))
def test_stats_frequencies_sum_to_split_size(lengths, width):
    hist = dataset_stats(make_split([" ".join(["w"] * n) for n in lengths]), width)
    assert all(f >= 0 for f in hist.frequencies)
    assert sum(hist.frequencies) == hist.total == len(lengths)


def test_stats_csv_output():
    buf = io.StringIO()
    dataset_stats(make_split(["a b c"]), 2).write_csv(buf)
    assert buf.getvalue() == "bucket_start,bucket_end,count\n0,2,0\n2,4,1\n"


def test_validate_against_expected():
    assert EXPECTED_SPLIT_SIZES[("ptmz", "dev")] == 257
    assert EXPECTED_SPLIT_SIZES[("vmw", "test")] == 777
    ok = validate_against_expected(make_split(["x"] * 0), 0)
    assert ok.passed and ok.actual == 0
    split = make_split(["x"] * 777)
    report = validate_against_expected(split, 776)
    assert not report.passed
    assert "776" in str(report) and "777" in str(report)
    assert validate_against_expected(make_split(["x"] * 257), 257).passed


BRIGHTER = os.environ.get("BRIGHTER_ENG_TRAIN")


@pytest.mark.live
@pytest.mark.skipif(not BRIGHTER, reason="set BRIGHTER_ENG_TRAIN to the English track A train CSV")
def test_english_release_train_split():
    split = load_dataset(BRIGHTER, split_name="train")
    assert validate_against_expected(split, EXPECTED_SPLIT_SIZES[("eng", "train")]).passed
    assert dataset_stats(split, 10).total == 2768
