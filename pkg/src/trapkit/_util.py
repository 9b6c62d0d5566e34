"""Shared parsing helpers for the delimited file contracts."""

from __future__ import annotations

from datetime import datetime, timezone

from .errors import HeaderError

UTC = timezone.utc


def require_header(reader, expected: list[str], what: str) -> None:
    """Consume and check a header row; a wrong header is a hard error."""
    try:
        header = next(reader)
    except StopIteration:
        raise HeaderError(f"{what} file is empty, expected header {','.join(expected)}")
    cleaned = [cell.strip().lstrip("﻿") for cell in header]
    if cleaned != expected:
        raise HeaderError(
            f"malformed {what} header: expected {','.join(expected)}, got {','.join(cleaned)}"
        )


def parse_timestamp(text: str) -> tuple[datetime, bool]:
    """Parse an ISO-8601 timestamp into aware UTC.

    Returns (value, was_naive). Naive inputs are interpreted as UTC; the
    caller decides whether to flag them. Raises ValueError on junk.
    """
    cleaned = text.strip()
    if cleaned.endswith(("Z", "z")):
        cleaned = cleaned[:-1] + "+00:00"
    value = datetime.fromisoformat(cleaned)
    if value.tzinfo is None:
        return value.replace(tzinfo=UTC), True
    return value.astimezone(UTC), False


def format_timestamp(value: datetime) -> str:
    """Canonical UTC text form, `2015-06-01T12:00:00Z`."""
    if value.tzinfo is None:
        value = value.replace(tzinfo=UTC)
    return value.astimezone(UTC).isoformat().replace("+00:00", "Z")
