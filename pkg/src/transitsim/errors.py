"""Exception types shared across the pipeline."""

from __future__ import annotations


class TransitSimError(Exception):
    """Base class for all errors raised by this package."""


class IngestError(TransitSimError):
    """Ingestion failure carrying a bounded offense report.

    ``offenses`` holds one human-readable line per problem; ``report()``
    prints at most the first 100 of them.
    """

    max_reported = 100

    def __init__(self, message: str, offenses: list[str] | None = None):
        super().__init__(message)
        self.offenses = offenses or []

    def report(self) -> str:
        lines = [str(self)]
        for off in self.offenses[: self.max_reported]:
            lines.append(f"  - {off}")
        hidden = len(self.offenses) - self.max_reported
        if hidden > 0:
            lines.append(f"  ... and {hidden} more")
        return "\n".join(lines)


class MissingFile(IngestError):
    def __init__(self, name: str):
        super().__init__(f"missing mandatory file: {name}", [name])
        self.name = name


class MalformedRow(IngestError):
    def __init__(self, file: str, offenses: list[str]):
        super().__init__(f"malformed rows in {file}", offenses)
        self.file = file


class MalformedXml(IngestError):
    def __init__(self, position: str):
        super().__init__(f"malformed XML at {position}", [position])
        self.position = position


class DanglingReference(IngestError):
    def __init__(self, kind: str, offenses: list[str]):
        super().__init__(f"dangling {kind} references", offenses)
        self.kind = kind


class EmptyGraph(TransitSimError):
    """No walkable ways found inside the requested bounding box."""


class UnknownStop(TransitSimError):
    def __init__(self, stop_id: str):
        super().__init__(f"unknown stop: {stop_id}")
        self.stop_id = stop_id


class NonPositiveSpeed(TransitSimError):
    pass


class EntryUnreachable(TransitSimError):
    """Requested travel-time matrix entry is the unreachable sentinel."""


class AllWeightsZero(TransitSimError):
    """A profile entry has no positive hourly weight."""


class EmptyCategory(TransitSimError):
    def __init__(self, category_id: str):
        super().__init__(f"category has no POIs: {category_id}")
        self.category_id = category_id


class MissingSpecificPoi(TransitSimError):
    def __init__(self, poi_id: str):
        super().__init__(f"specific POI does not exist: {poi_id}")
        self.poi_id = poi_id


class Unserved(TransitSimError):
    """Residence cannot be scored (no reachable stop, or nothing reachable)."""


class ProfileValidationError(TransitSimError):
    pass


class UniverseMismatch(TransitSimError):
    """Two surfaces do not cover the same residence set."""


class EmptyViewport(TransitSimError):
    """Viewport contains no served values to normalize against."""


class UnknownEntity(TransitSimError):
    def __init__(self, kind: str, entity_id: str):
        super().__init__(f"unknown {kind}: {entity_id}")
        self.kind = kind
        self.entity_id = entity_id


class UnsnappablePosition(TransitSimError):
    """Position has no walkable street node within the snap radius."""


class RemoveLastStopOfLine(TransitSimError):
    """Removing this stop would delete a whole line, which is not supported."""


class NonMonotoneConfirmedTimes(TransitSimError):
    """User-confirmed schedule times violate monotonicity along the trip."""
