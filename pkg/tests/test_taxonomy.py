import io
import random

import pytest
from hypothesis import given, settings, strategies as st

from trapkit.errors import HeaderError, LabelNotFoundError
from trapkit.report import IssueKind, Severity
from trapkit.taxonomy import (
    Level,
    TaxonRecord,
    TaxonomyTable,
    distinct_counts,
    is_blank,
    parse_taxonomy,
    rollup,
)

from generators import random_taxonomy

HEADER = "label_id,class_name,order_name,family_name,genus_name,species_name,special_kind"


def parse(text):
    return parse_taxonomy(io.StringIO(text))


def test_level_is_totally_ordered_coarse_to_fine():
    assert Level.CLASS < Level.ORDER < Level.FAMILY < Level.GENUS < Level.SPECIES
    assert Level.from_name("species") is Level.SPECIES
    assert Level.from_name("Genus") is Level.GENUS
    with pytest.raises(ValueError):
        Level.from_name("kingdom")


def test_minimal_table_gets_synthetic_blank():
    table, report = parse(f"{HEADER}\nsp_x,Mammalia,Carnivora,Felidae,Panthera,Panthera onca,\n")
    assert len(table) == 2
    assert table.blank_label_id == "blank"
    assert table.records["blank"].special_kind == "blank"
    kinds = [issue.kind for issue in report.issues]
    assert kinds == [IssueKind.MISSING_FIELD]
    assert report.issues[0].severity is Severity.WARNING


def test_same_genus_different_family_is_reported():
    table, report = parse(
        f"{HEADER}\n"
        "sp_a,Mammalia,Carnivora,Felidae,Panthera,Panthera onca,\n"
        "sp_b,Mammalia,Carnivora,Canidae,Panthera,Panthera leo,\n"
        "blank,,,,,,blank\n"
    )
    tree_issues = report.of_kind(IssueKind.TREE_INCONSISTENCY)
    assert len(tree_issues) == 1
    assert "Panthera" in tree_issues[0].detail


def test_fixture_parses_clean(taxonomy_table):
    assert len(taxonomy_table) == 12
    assert taxonomy_table.blank_label_id == "blank"
    assert taxonomy_table.unknown_label_id == "unknown"


def test_duplicate_label_id_keeps_first():
    table, report = parse(
        f"{HEADER}\n"
        "sp_a,Mammalia,Carnivora,Felidae,Panthera,Panthera onca,\n"
        "sp_a,Mammalia,Carnivora,Felidae,Panthera,Panthera leo,\n"
        "blank,,,,,,blank\n"
    )
    assert len(report.of_kind(IssueKind.DUPLICATE_ID)) == 1
    assert table.records["sp_a"].species_name == "Panthera onca"


def test_malformed_header_is_fatal():
    with pytest.raises(HeaderError):
        parse("label,klass\nsp_a,Mammalia\n")


def test_special_label_with_names_is_stripped_and_flagged():
    table, report = parse(f"{HEADER}\nb1,Mammalia,,,,,blank\n")
    assert table.records["b1"].class_name is None
    assert len(report.of_kind(IssueKind.TREE_INCONSISTENCY)) == 1


def test_lineage_gap_is_flagged_and_prefix_survives():
    table, report = parse(f"{HEADER}\nsp_a,Mammalia,,Felidae,Panthera,,\nblank,,,,,,blank\n")
    assert len(report.of_kind(IssueKind.TREE_INCONSISTENCY)) == 1
    assert table.records["sp_a"].lineage() == ("Mammalia",)


def test_rollup_identity_at_finest_level(taxonomy_table):
    rolled = rollup("sp_panthera_onca", Level.SPECIES, taxonomy_table)
    assert rolled.name == "Panthera onca"
    assert rolled.level is Level.SPECIES
    assert rolled.exact


def test_rollup_blank_is_fixed_point_at_every_level(taxonomy_table):
    for level in Level:
        rolled = rollup("blank", level, taxonomy_table)
        assert rolled.special == "blank"
        assert rolled.name == "blank"
        assert rollup(rolled, level, taxonomy_table) == rolled


def test_rollup_below_finest_populated_is_tagged_inexact():
    table = TaxonomyTable(
        {
            "g_only": TaxonRecord("g_only", "Mammalia", "Carnivora", "Felidae", "Panthera"),
            "blank": TaxonRecord("blank", special_kind="blank"),
        },
        "blank",
    )
    rolled = rollup("g_only", Level.SPECIES, table)
    assert rolled.name == "Panthera"
    assert rolled.level is Level.GENUS
    assert not rolled.exact


def test_rollup_unresolvable_label_raises(taxonomy_table):
    with pytest.raises(LabelNotFoundError):
        rollup("sp_nope", Level.GENUS, taxonomy_table)
    with pytest.raises(LabelNotFoundError):
        is_blank("sp_nope", taxonomy_table)


def test_rollup_all_ten_species_to_family_gives_three_names(taxonomy_table):
    species = [
        label for label, record in taxonomy_table.records.items()
        if record.special_kind is None
    ]
    assert len(species) == 10
    families = {rollup(label, Level.FAMILY, taxonomy_table).name for label in species}
    assert families == {"Felidae", "Canidae", "Lemuridae"}


def test_is_blank(taxonomy_table):
    assert is_blank("blank", taxonomy_table)
    assert not is_blank("sp_canis_lupus", taxonomy_table)
    assert not is_blank("unknown", taxonomy_table)


def test_distinct_counts_on_fixture(taxonomy_table):
    counts = distinct_counts(taxonomy_table)
    assert set(counts) == {"Mammalia"}
    assert counts["Mammalia"][Level.ORDER] == 2
    assert counts["Mammalia"][Level.FAMILY] == 3
    assert counts["Mammalia"][Level.GENUS] == 4
    assert counts["Mammalia"][Level.SPECIES] == 10


def test_distinct_counts_over_dataset_only_sees_occurring_labels(fixture_dataset):
    counts = distinct_counts(fixture_dataset)
    # sp_leopardus_wiedii..sp_lemur_macaco all occur in the bundled images
    assert counts["Mammalia"][Level.SPECIES] == 10
    assert counts["Mammalia"][Level.CLASS] == 1


def test_distinct_counts_empty_dataset(taxonomy_table):
    from trapkit.ingest import UnifiedDataset

    empty = UnifiedDataset({}, {}, taxonomy_table, ())
    assert distinct_counts(empty) == {}


def test_distinct_counts_ungrouped(taxonomy_table):
    counts = distinct_counts(taxonomy_table, group_by_class=False)
    assert counts["all"][Level.CLASS] == 1
    assert counts["all"][Level.SPECIES] == 10


@given(seed=st.integers(0, 10_000), level=st.sampled_from(list(Level)))
@settings(max_examples=60, deadline=None)
def test_rollup_idempotent_on_random_tables(seed, level):
    rng = random.Random(seed)
    table = random_taxonomy(rng, n_species=15, coarse_only_fraction=0.3)
    for label in table.records:
        once = rollup(label, level, table)
        assert rollup(once, level, table) == once


@given(seed=st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_rollup_coarse_consistency_on_random_tables(seed):
    rng = random.Random(seed)
    table = random_taxonomy(rng, n_species=15, coarse_only_fraction=0.3)
    levels = list(Level)
    for label in table.records:
        for coarse_index in range(len(levels)):
            for fine_index in range(coarse_index, len(levels)):
                via_fine = rollup(rollup(label, levels[fine_index], table),
                                  levels[coarse_index], table)
                direct = rollup(label, levels[coarse_index], table)
                assert via_fine == direct


@given(seed=st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_distinct_counts_nondecreasing_for_complete_tables(seed):
    rng = random.Random(seed)
    table = random_taxonomy(rng, n_species=30)
    for per_level in distinct_counts(table).values():
        assert (
            per_level[Level.ORDER]
            <= per_level[Level.FAMILY]
            <= per_level[Level.GENUS]
            <= per_level[Level.SPECIES]
        )
