import numpy as np
import pytest
from hypothesis import given, strategies as st

from synchrony.core import TimeSeries
from synchrony.ingest import (
    AnnotationSet,
    AuRecording,
    IngestError,
    aggregate_annotations,
    group_to_sample,
    load_annotation_csv,
    load_au_csv,
    load_group_manifest,
    mean_average_deviation,
    select_top_aus,
)


def write_au_csv(path, n_rows=20, aus=("AU01", "AU02"), start=0, mutate=None):
    rng = np.random.default_rng(0)
    lines = ["frame," + ",".join(aus)]
    for i in range(n_rows):
        vals = ",".join(f"{v:.3f}" for v in rng.uniform(0, 5, len(aus)))
        lines.append(f"{start + i},{vals}")
    if mutate:
        lines = mutate(lines)
    path.write_text("\n".join(lines) + "\n")
    return path


# AU CSV loading


def test_load_well_formed_file(tmp_path):
    path = write_au_csv(tmp_path / "p1.csv", n_rows=1800)
    rec = load_au_csv(path)
    assert rec.participant_id == "p1"
    assert set(rec.au_channels) == {"AU01", "AU02"}
    assert len(rec.au_channels["AU01"]) == 1800


def test_load_detects_frame_gap(tmp_path):
    def drop_row(lines):
        return lines[:11] + lines[12:]

    path = write_au_csv(tmp_path / "p.csv", mutate=drop_row)
    with pytest.raises(IngestError, match="non-contiguous frames at row 12"):
        load_au_csv(path)


def test_load_rejects_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(IngestError, match="empty"):
        load_au_csv(path)


def test_load_rejects_header_only(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("frame,AU01\n")
    with pytest.raises(IngestError, match="no data rows"):
        load_au_csv(path)


def test_load_rejects_missing_columns(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("time,AU01\n0,1.0\n")
    with pytest.raises(IngestError, match="missing columns"):
        load_au_csv(path)


def test_load_rejects_non_finite(tmp_path):
    path = tmp_path / "n.csv"
    path.write_text("frame,AU01\n0,1.0\n1,inf\n")
    with pytest.raises(IngestError, match="non-finite value at row 3"):
        load_au_csv(path)


# mean average deviation


def test_mad_examples():
    assert mean_average_deviation(TimeSeries([3.0, 3.0, 3.0])) == 0.0
    assert mean_average_deviation(TimeSeries([1.0, 2.0, 3.0])) == pytest.approx(2.0 / 3.0)
    assert mean_average_deviation(TimeSeries([0.0, 4.0])) == 2.0


@given(
    st.lists(st.floats(-100, 100), min_size=2, max_size=30),
    st.floats(-50, 50),
)
def test_mad_translation_invariant(values, shift):
    base = mean_average_deviation(TimeSeries(values))
    shifted = mean_average_deviation(TimeSeries([v + shift for v in values]))
    assert shifted == pytest.approx(base, abs=1e-9)


@given(
    st.lists(st.floats(-100, 100), min_size=2, max_size=30),
    st.floats(-10, 10),
)
def test_mad_absolutely_homogeneous(values, scale):
    if abs(scale) < 1e-6:
        return
    base = mean_average_deviation(TimeSeries(values))
    scaled = mean_average_deviation(TimeSeries([v * scale for v in values]))
    assert scaled == pytest.approx(abs(scale) * base, rel=1e-9, abs=1e-9)


# top-AU selection


def make_recording(pid, channels):
    return AuRecording(pid, {k: TimeSeries(v) for k, v in channels.items()})


def test_constant_au_never_selected():
    recs = [
        make_recording(
            f"p{i}",
            {
                "AU01": [0.0, 5.0, 0.0, 5.0],
                "AU02": [0.0, 1.0, 0.0, 1.0],
                "AU04": [2.0, 2.0, 2.0, 2.0],  # constant, MAD 0
            },
        )
        for i in range(3)
    ]
    assert "AU04" not in select_top_aus(recs, k=2)


def test_k_equal_channel_count_returns_rank_order():
    recs = [
        make_recording("p0", {"AU01": [0.0, 2.0], "AU02": [0.0, 8.0], "AU04": [0.0, 4.0]})
    ]
    assert select_top_aus(recs, k=3) == ["AU02", "AU04", "AU01"]


def test_top3_known_mads():
    # per-AU mean MADs: AU01 1.0, AU02 2.0, AU04 0.5, AU06 3.0
    def series(mad):
        return [0.0, 2 * mad]  # MAD of [0, 2m] is m

    recs = [
        make_recording(
            f"p{i}",
            {"AU01": series(1.0), "AU02": series(2.0),
             "AU04": series(0.5), "AU06": series(3.0)},
        )
        for i in range(3)
    ]
    assert select_top_aus(recs, k=3) == ["AU06", "AU02", "AU01"]


def test_selection_independent_of_participant_order():
    rng = np.random.default_rng(5)
    recs = [
        make_recording(f"p{i}", {au: rng.uniform(0, 5, 30) for au in
                                 ("AU01", "AU02", "AU04", "AU06")})
        for i in range(3)
    ]
    assert select_top_aus(recs, k=3) == select_top_aus(recs[::-1], k=3)


def test_too_few_shared_aus():
    recs = [make_recording("p0", {"AU01": [0.0, 1.0]})]
    with pytest.raises(IngestError):
        select_top_aus(recs, k=3)


def test_group_to_sample_aligns_channels():
    recs = [
        make_recording(
            f"p{i}",
            {"AU01": np.arange(10.0) * (i + 1), "AU02": np.ones(10),
             "AU04": np.arange(10.0)},
        )
        for i in range(3)
    ]
    sample = group_to_sample(recs, label=3.5, group_id="g1", k=2)
    assert sample.n_participants == 3
    assert sample.n_channels == 2
    assert sample.label == 3.5


# annotation aggregation


def full_sets(score_matrix):
    """score_matrix: {group: {labeler: score}}"""
    return [AnnotationSet(g, dict(scores)) for g, scores in score_matrix.items()]


def test_all_labelers_agree():
    sets = full_sets({
        "g1": {"l1": 3.0, "l2": 3.0, "l3": 3.0},
        "g2": {"l1": 4.0, "l2": 4.0, "l3": 4.0},
    })
    labels, flagged, removed = aggregate_annotations(sets)
    assert removed == "l1"  # tie broken by lowest labeler id
    assert labels == {"g1": 3.0, "g2": 4.0}
    assert flagged == []


def test_outlier_labeler_removed():
    groups = {}
    for g in ("g1", "g2", "g3"):
        groups[g] = {"l1": 1.0, "l2": 1.0, "l3": 1.0, "l4": 5.0}
    labels, flagged, removed = aggregate_annotations(full_sets(groups))
    assert removed == "l4"
    assert all(v == 1.0 for v in labels.values())
    assert flagged == []


def test_zero_threshold_flags_disagreement():
    sets = full_sets({
        "g1": {"l1": 2.0, "l2": 2.0, "l3": 2.0},
        "g2": {"l1": 2.0, "l2": 3.0, "l3": 4.0},
    })
    _, flagged, _ = aggregate_annotations(sets, variance_threshold=0.0)
    assert flagged == ["g2"]


def test_exactly_one_labeler_removed_labels_in_range():
    rng = np.random.default_rng(8)
    sets = full_sets({
        f"g{i}": {f"l{j}": float(rng.integers(1, 6)) for j in range(5)}
        for i in range(6)
    })
    labels, _, removed = aggregate_annotations(sets)
    assert removed in {f"l{j}" for j in range(5)}
    assert all(1.0 <= v <= 5.0 for v in labels.values())


def test_duplicate_labeler_does_not_change_original_outlier():
    base = {
        f"g{i}": {"l1": 1.0, "l2": 2.0, "l3": 1.0, "l4": 5.0}
        for i in range(4)
    }
    _, _, removed_base = aggregate_annotations(full_sets(base))
    with_dup = {
        g: dict(scores, l9=scores["l2"]) for g, scores in base.items()
    }
    _, _, removed_dup = aggregate_annotations(full_sets(with_dup))
    assert removed_base == "l4"
    assert removed_dup == "l4"


def test_incomplete_matrix_rejected():
    sets = [
        AnnotationSet("g1", {"l1": 1.0, "l2": 2.0, "l3": 3.0}),
        AnnotationSet("g2", {"l1": 1.0, "l2": 2.0, "l4": 3.0}),
    ]
    with pytest.raises(IngestError, match="incomplete"):
        aggregate_annotations(sets)


def test_requires_three_labelers():
    sets = [AnnotationSet("g1", {"l1": 1.0, "l2": 2.0})]
    with pytest.raises(IngestError):
        aggregate_annotations(sets)


def test_pooled_variance_mode_runs():
    sets = full_sets({
        "g1": {"l1": 1.0, "l2": 2.0, "l3": 1.0},
        "g2": {"l1": 3.0, "l2": 4.0, "l3": 3.0},
    })
    labels, _, removed = aggregate_annotations(sets, pooled=True)
    assert set(labels) == {"g1", "g2"}


# file-level loaders


def test_load_annotation_csv(tmp_path):
    path = tmp_path / "ann.csv"
    path.write_text(
        "group_id,labeler_id,score\n"
        "g1,l1,3\ng1,l2,4\ng2,l1,2\ng2,l2,5\n"
    )
    sets = load_annotation_csv(path)
    assert {s.group_id for s in sets} == {"g1", "g2"}


def test_load_annotation_csv_duplicate(tmp_path):
    path = tmp_path / "ann.csv"
    path.write_text("g1,l1,3\ng1,l1,4\n")
    with pytest.raises(IngestError, match="duplicate"):
        load_annotation_csv(path)


def test_load_group_manifest(tmp_path):
    path = tmp_path / "groups.json"
    path.write_text('{"g1": ["a.csv", "b.csv"]}')
    assert load_group_manifest(path) == {"g1": ["a.csv", "b.csv"]}
    bad = tmp_path / "bad.json"
    bad.write_text('{"g1": "a.csv"}')
    with pytest.raises(IngestError):
        load_group_manifest(bad)
