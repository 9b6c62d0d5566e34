"""Five-level species ontology: label resolution and rollup.

Labels live in a table keyed by an opaque string id. Each record carries
names for the levels class, order, family, genus, species, populated
contiguously from class downward; a record may stop early (a genus-only
label is legal). Two special labels sit outside the tree: ``blank``
(no animal present) and ``unknown``. Both are first-class labels so that
downstream counting and scoring can treat them like any other class.

Rolling a label up to a coarser level truncates its lineage. Rolling a
coarse-only label "down" cannot invent detail, so the result keeps the
finest populated name and is marked inexact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from typing import IO, Iterable, Union

from ._util import require_header
from .errors import LabelNotFoundError
from .report import Issue, IssueKind, Severity, ValidationReport

BLANK = "blank"
UNKNOWN = "unknown"

TAXONOMY_COLUMNS = [
    "label_id",
    "class_name",
    "order_name",
    "family_name",
    "genus_name",
    "species_name",
    "special_kind",
]


class Level(IntEnum):
    """Taxonomic levels ordered coarse to fine."""

    CLASS = 0
    ORDER = 1
    FAMILY = 2
    GENUS = 3
    SPECIES = 4

    @classmethod
    def from_name(cls, name: str) -> "Level":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown taxonomic level: {name!r}") from None


@dataclass(frozen=True, slots=True)
class TaxonRecord:
    label_id: str
    class_name: str | None = None
    order_name: str | None = None
    family_name: str | None = None
    genus_name: str | None = None
    species_name: str | None = None
    special_kind: str | None = None

    def level_names(self) -> tuple[str | None, ...]:
        return (
            self.class_name,
            self.order_name,
            self.family_name,
            self.genus_name,
            self.species_name,
        )

    def lineage(self) -> tuple[str, ...]:
        """Contiguous run of names from class downward.

        Names after a gap are ignored; the gap itself is reported at parse
        time as a tree inconsistency.
        """
        names: list[str] = []
        for name in self.level_names():
            if name is None:
                break
            names.append(name)
        return tuple(names)


@dataclass(frozen=True, slots=True)
class RolledLabel:
    """A label projected onto one taxonomic level.

    ``names`` holds the lineage from class down to ``level``. For special
    labels ``names`` is the designated label id and ``level`` is None.
    ``exact`` is False when the requested level was finer than the record's
    finest populated name.
    """

    names: tuple[str, ...]
    level: Level | None
    special: str | None = None
    exact: bool = True

    @property
    def name(self) -> str:
        return self.names[-1]


@dataclass(frozen=True)
class TaxonomyTable:
    records: dict[str, TaxonRecord]
    blank_label_id: str
    unknown_label_id: str | None = None

    def __contains__(self, label_id: str) -> bool:
        return label_id in self.records

    def __len__(self) -> int:
        return len(self.records)

    def resolve(self, label_id: str) -> TaxonRecord:
        try:
            return self.records[label_id]
        except KeyError:
            raise LabelNotFoundError(f"label id {label_id!r} not in taxonomy") from None


def parse_taxonomy(stream: IO[str]) -> tuple[TaxonomyTable, ValidationReport]:
    """Read `taxonomy.csv` rows into a table, reporting structural defects.

    Duplicate label ids keep the first occurrence. A missing blank label is
    synthesized so the table always designates one. Lineage gaps, special
    labels carrying taxonomic names, and cross-record ancestry conflicts are
    reported as warnings and do not abort the parse.
    """
    reader = csv.reader(stream)
    require_header(reader, TAXONOMY_COLUMNS, "taxonomy")

    records: dict[str, TaxonRecord] = {}
    issues: list[Issue] = []
    blank_id: str | None = None
    unknown_id: str | None = None

    for row_number, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(TAXONOMY_COLUMNS):
            issues.append(Issue(
                IssueKind.MISSING_FIELD,
                f"row {row_number}",
                f"row {row_number}: expected {len(TAXONOMY_COLUMNS)} columns, got {len(row)}",
            ))
            continue
        label_id, *names, special = (cell.strip() for cell in row)
        if not label_id:
            issues.append(Issue(
                IssueKind.MISSING_FIELD,
                f"row {row_number}",
                f"row {row_number}: empty label_id",
            ))
            continue
        if label_id in records:
            issues.append(Issue(
                IssueKind.DUPLICATE_ID,
                label_id,
                f"row {row_number}: duplicate label_id, first occurrence kept",
            ))
            continue

        if special and special not in (BLANK, UNKNOWN):
            issues.append(Issue(
                IssueKind.MISSING_FIELD,
                label_id,
                f"row {row_number}: unrecognized special_kind {special!r}",
            ))
            continue

        if special:
            if any(names):
                issues.append(Issue(
                    IssueKind.TREE_INCONSISTENCY,
                    label_id,
                    f"row {row_number}: special label carries taxonomic names, ignored",
                    Severity.WARNING,
                ))
            record = TaxonRecord(label_id, special_kind=special)
            if special == BLANK and blank_id is None:
                blank_id = label_id
            if special == UNKNOWN and unknown_id is None:
                unknown_id = label_id
        else:
            fields = [name or None for name in names]
            if fields[0] is None:
                issues.append(Issue(
                    IssueKind.MISSING_FIELD,
                    label_id,
                    f"row {row_number}: non-special label without class_name",
                ))
                continue
            record = TaxonRecord(label_id, *fields)
            if _has_lineage_gap(fields):
                issues.append(Issue(
                    IssueKind.TREE_INCONSISTENCY,
                    label_id,
                    f"row {row_number}: names do not populate contiguously from class",
                    Severity.WARNING,
                ))
        records[label_id] = record

    if blank_id is None:
        blank_id = BLANK if BLANK not in records else "__blank__"
        records[blank_id] = TaxonRecord(blank_id, special_kind=BLANK)
        issues.append(Issue(
            IssueKind.MISSING_FIELD,
            blank_id,
            "no blank label in input, synthetic blank label added",
            Severity.WARNING,
        ))

    issues.extend(_tree_consistency_issues(records.values()))
    table = TaxonomyTable(records, blank_id, unknown_id)
    return table, ValidationReport.from_issues(issues)


def _has_lineage_gap(fields: list[str | None]) -> bool:
    seen_gap = False
    for name in fields:
        if name is None:
            seen_gap = True
        elif seen_gap:
            return True
    return False


def _tree_consistency_issues(records: Iterable[TaxonRecord]) -> list[Issue]:
    # Within one class, a name at any level must have a single ancestry.
    seen: dict[tuple[int, str, str], tuple[str, tuple[str, ...]]] = {}
    issues: list[Issue] = []
    flagged: set[tuple[int, str, str]] = set()
    for record in records:
        if record.special_kind:
            continue
        lineage = record.lineage()
        for depth in range(1, len(lineage)):
            key = (depth, lineage[0], lineage[depth])
            ancestry = lineage[:depth]
            if key not in seen:
                seen[key] = (record.label_id, ancestry)
            elif seen[key][1] != ancestry and key not in flagged:
                flagged.add(key)
                first_id, first_ancestry = seen[key]
                issues.append(Issue(
                    IssueKind.TREE_INCONSISTENCY,
                    record.label_id,
                    f"{Level(depth).name.lower()} {lineage[depth]!r} has ancestry "
                    f"{'/'.join(ancestry)} but {'/'.join(first_ancestry)} in {first_id}",
                    Severity.WARNING,
                ))
    return issues


def rollup(label: Union[str, RolledLabel], level: Level, table: TaxonomyTable) -> RolledLabel:
    """Project a label id (or an already rolled label) onto a level.

    Blank and unknown labels are fixed points at every level and come back
    canonicalized to the table's designated id for their kind.
    """
    level = Level(level)
    if isinstance(label, RolledLabel):
        if label.special is not None:
            return label
        if level < label.level:
            return RolledLabel(label.names[: level + 1], level)
        if level == label.level:
            return RolledLabel(label.names, level)
        return RolledLabel(label.names, label.level, exact=False)

    record = table.resolve(label)
    if record.special_kind is not None:
        designated = (
            table.blank_label_id
            if record.special_kind == BLANK
            else (table.unknown_label_id or record.label_id)
        )
        return RolledLabel((designated,), None, special=record.special_kind)
    lineage = record.lineage()
    finest = len(lineage) - 1
    take = min(level, finest)
    return RolledLabel(lineage[: take + 1], Level(take), exact=finest >= level)


def is_blank(label_id: str, table: TaxonomyTable) -> bool:
    return table.resolve(label_id).special_kind == BLANK


def distinct_counts(source, group_by_class: bool = True) -> dict[str, dict[Level, int]]:
    """Distinct taxonomic names per level, optionally grouped by class.

    ``source`` is either a TaxonomyTable (count every label in the table) or
    a unified dataset (count only labels that occur on images). Blank and
    unknown labels never contribute.
    """
    if isinstance(source, TaxonomyTable):
        records = list(source.records.values())
    else:
        table = source.taxonomy
        records = [table.resolve(image.label_id) for image in source.images.values()]

    names: dict[str, dict[Level, set[str]]] = {}
    for record in records:
        if record.special_kind:
            continue
        lineage = record.lineage()
        if not lineage:
            continue
        group = lineage[0] if group_by_class else "all"
        per_level = names.setdefault(group, {level: set() for level in Level})
        for level, name in zip(Level, lineage):
            per_level[level].add(name)

    return {
        group: {level: len(values) for level, values in per_level.items()}
        for group, per_level in sorted(names.items())
    }
