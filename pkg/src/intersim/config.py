"""Configuration ingestion: signal programs, demand tables, intersection specs.

Three text formats are supported:

* signal program XML — two (or more) ``<ring>`` sequences of
  ``<green>/<yellow>/<red>`` phase tuples plus ``<barrier>`` references, with
  top-level ``<barrier id="...">yellow, red</barrier>`` definitions;
* demand CSV — a turning-movement-count export: road header row, action-code
  header row with ``Total`` delimiters and a trailing ``Vehicle Total``, then
  uniformly spaced 12-hour-clock bucket rows of integer counts;
* intersection XML — ``<road>`` entries (direction of travel, lane counts,
  speed limit, reservation horizon) and ``<direction>`` blocks mapping
  incoming to outgoing lanes per vehicle class.

Parsers are lenient about surrounding whitespace and XML comments but strict
about structure; every error carries a location.  ``parse → serialize →
parse`` is a fixed point for all three formats.
"""

from __future__ import annotations

import csv
import io
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from .errors import (
    ConfigError,
    DemandFormatError,
    DuplicateRoadDirection,
    IntersectionSpecError,
    MalformedLanePair,
    MalformedPhaseTuple,
    MissingBarrierDef,
    MultiDaySpanUnsupported,
    NegativeDuration,
    NonIntegerCount,
    PhaseSequenceError,
    SignalProgramError,
    TimestampParseError,
    TooFewRows,
    TotalMismatch,
    UnequalBucketLengths,
    UnknownActionCode,
    UnknownMovementCode,
    UnknownVehicleType,
    UTurnUnsupported,
)
from .types import CARDINALS, Direction, MOVEMENT_CODES, TurnKind, VehicleClass

_LANE_PAIR_RE = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")
_ACTION_CHARS = frozenset("LTR")


# ---------------------------------------------------------------------------
# document dataclasses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GreenSpec:
    direction: Direction
    code: str  # 'c', 't' or 'ct'
    gap: float
    min_green: float
    max_green: float


@dataclass(frozen=True)
class YellowSpec:
    direction: Direction
    code: str
    duration: float


@dataclass(frozen=True)
class RedSpec:
    direction: Direction
    code: str
    duration: float


@dataclass(frozen=True)
class BarrierRef:
    ref_id: str


RingEntry = GreenSpec | YellowSpec | RedSpec | BarrierRef


@dataclass
class SignalProgramDoc:
    rings: list[list[RingEntry]]
    barrier_defs: dict[str, tuple[float, float]]  # id -> (yellow, red)

    @property
    def movement_keys(self) -> list[tuple[Direction, str]]:
        """Distinct (direction, movement code) pairs in document order."""
        seen: list[tuple[Direction, str]] = []
        for ring in self.rings:
            for entry in ring:
                if isinstance(entry, GreenSpec):
                    key = (entry.direction, entry.code)
                    if key not in seen:
                        seen.append(key)
        return seen


@dataclass
class DemandTable:
    road_order: tuple[Direction, ...]
    actions: tuple[tuple[str, ...], ...]  # action codes per road, file order
    start_clock: float  # seconds past midnight of the first bucket
    bucket_length: float  # seconds
    counts: tuple[tuple[tuple[int, ...], ...], ...]  # [row][road][column]

    @property
    def row_count(self) -> int:
        return len(self.counts)

    @property
    def span(self) -> float:
        """Covered duration in seconds (buckets are left-aligned)."""
        return self.bucket_length * self.row_count

    def total(self) -> int:
        return sum(c for row in self.counts for road in row for c in road)

    def bucket_total(self, row: int) -> int:
        return sum(c for road in self.counts[row] for c in road)


@dataclass(frozen=True)
class RoadEntry:
    direction: Direction
    incoming_lanes: int
    outgoing_lanes: int
    speed_limit: float
    reservation_horizon: float


@dataclass
class MovementMapping:
    from_direction: Direction
    to_direction: Direction
    pairs: dict[VehicleClass, tuple[tuple[int, int], ...]] = field(default_factory=dict)


@dataclass
class IntersectionSpecDoc:
    roads: list[RoadEntry]
    movements: list[MovementMapping]

    def road(self, direction: Direction) -> RoadEntry | None:
        for entry in self.roads:
            if entry.direction is direction:
                return entry
        return None

    def movement(self, from_dir: Direction, to_dir: Direction) -> MovementMapping | None:
        for m in self.movements:
            if m.from_direction is from_dir and m.to_direction is to_dir:
                return m
        return None


# ---------------------------------------------------------------------------
# XML helpers
# ---------------------------------------------------------------------------

def _parse_xml(text: str, what: str) -> tuple[ET.Element, dict[int, int]]:
    """Parse XML and map element ids to 1-based source line numbers.

    ElementTree drops position info, so start tags are located by scanning the
    source in document order (``iter()`` yields elements in start-tag order).
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ConfigError(f"not well-formed XML: {exc}", location=what) from None
    lines: dict[int, int] = {}
    cursor = 0
    for elem in root.iter():
        pattern = re.compile(r"<" + re.escape(elem.tag) + r"[\s/>]")
        match = pattern.search(text, cursor)
        if match is None:  # self-closed variants like <barrier id="x"></barrier>
            match = pattern.search(text)
        if match is not None:
            lines[id(elem)] = text.count("\n", 0, match.start()) + 1
            cursor = match.end()
    return root, lines


def _loc(what: str, lines: dict[int, int], elem: ET.Element) -> str:
    line = lines.get(id(elem))
    return f"{what}:{line}" if line is not None else what


# ---------------------------------------------------------------------------
# signal program XML
# ---------------------------------------------------------------------------

def _parse_phase_fields(elem: ET.Element, arity: int, loc: str) -> list[str]:
    text = (elem.text or "").strip()
    fields = [f.strip() for f in text.split(",")] if text else []
    if len(fields) != arity:
        raise MalformedPhaseTuple(
            f"<{elem.tag}> expects {arity} comma-separated fields, got {len(fields)}",
            location=loc,
        )
    return fields


def _parse_duration(raw: str, loc: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise MalformedPhaseTuple(f"non-numeric duration {raw!r}", location=loc) from None
    if value < 0:
        raise NegativeDuration(f"negative duration {value}", location=loc)
    return value


def _parse_movement(raw: str, loc: str) -> str:
    if raw not in MOVEMENT_CODES:
        raise UnknownMovementCode(f"unknown movement code {raw!r}", location=loc)
    return raw


def _parse_phase_direction(raw: str, loc: str) -> Direction:
    try:
        return Direction.from_letter(raw)
    except ValueError:
        raise MalformedPhaseTuple(f"unknown direction {raw!r}", location=loc) from None


def parse_signal_program(text: str, name: str = "signals") -> SignalProgramDoc:
    root, lines = _parse_xml(text, name)
    rings: list[list[RingEntry]] = []
    barrier_defs: dict[str, tuple[float, float]] = {}
    for elem in root:
        loc = _loc(name, lines, elem)
        if elem.tag == "ring":
            rings.append(_parse_ring(elem, name, lines))
        elif elem.tag == "barrier":
            barrier_id = elem.get("id")
            if not barrier_id:
                raise MissingBarrierDef("barrier definition without id", location=loc)
            fields = _parse_phase_fields(elem, 2, loc)
            if barrier_id in barrier_defs:
                raise SignalProgramError(f"duplicate barrier definition {barrier_id!r}", location=loc)
            barrier_defs[barrier_id] = (
                _parse_duration(fields[0], loc),
                _parse_duration(fields[1], loc),
            )
        else:
            raise SignalProgramError(f"unexpected element <{elem.tag}>", location=loc)
    _check_phase_sequences(rings, barrier_defs, name)
    return SignalProgramDoc(rings=rings, barrier_defs=barrier_defs)


def _parse_ring(ring_elem: ET.Element, name: str, lines: dict[int, int]) -> list[RingEntry]:
    entries: list[RingEntry] = []
    for elem in ring_elem:
        loc = _loc(name, lines, elem)
        if elem.tag == "green":
            fields = _parse_phase_fields(elem, 5, loc)
            direction = _parse_phase_direction(fields[0], loc)
            code = _parse_movement(fields[1], loc)
            gap = _parse_duration(fields[2], loc)
            min_green = _parse_duration(fields[3], loc)
            max_green = _parse_duration(fields[4], loc)
            if max_green < min_green:
                raise MalformedPhaseTuple(
                    f"max green {max_green} below min green {min_green}", location=loc
                )
            entries.append(GreenSpec(direction, code, gap, min_green, max_green))
        elif elem.tag in ("yellow", "red"):
            fields = _parse_phase_fields(elem, 3, loc)
            direction = _parse_phase_direction(fields[0], loc)
            code = _parse_movement(fields[1], loc)
            duration = _parse_duration(fields[2], loc)
            cls = YellowSpec if elem.tag == "yellow" else RedSpec
            entries.append(cls(direction, code, duration))
        elif elem.tag == "barrier":
            barrier_id = elem.get("id")
            if not barrier_id:
                raise MissingBarrierDef("barrier reference without id", location=loc)
            if (elem.text or "").strip():
                raise SignalProgramError(
                    "barrier reference inside a ring must be empty", location=loc
                )
            entries.append(BarrierRef(barrier_id))
        else:
            raise SignalProgramError(f"unexpected element <{elem.tag}> in ring", location=loc)
    return entries


def _check_phase_sequences(
    rings: list[list[RingEntry]], barrier_defs: dict[str, tuple[float, float]], name: str
) -> None:
    """Every Green must be followed by its Yellow+Red or by a barrier, and
    every barrier reference must be defined."""
    for r, ring in enumerate(rings):
        i = 0
        while i < len(ring):
            entry = ring[i]
            if isinstance(entry, BarrierRef):
                if entry.ref_id not in barrier_defs:
                    raise MissingBarrierDef(
                        f"barrier {entry.ref_id!r} referenced but never defined",
                        location=f"{name}:ring {r + 1}",
                    )
                i += 1
                continue
            if not isinstance(entry, GreenSpec):
                raise PhaseSequenceError(
                    f"ring {r + 1} has a stray <{type(entry).__name__}> outside a "
                    "green-yellow-red sequence",
                    location=name,
                )
            nxt = ring[i + 1] if i + 1 < len(ring) else None
            if isinstance(nxt, BarrierRef):
                i += 1
                continue
            after = ring[i + 2] if i + 2 < len(ring) else None
            if (
                not isinstance(nxt, YellowSpec)
                or not isinstance(after, RedSpec)
                or nxt.direction is not entry.direction
                or after.direction is not entry.direction
                or nxt.code != entry.code
                or after.code != entry.code
            ):
                raise PhaseSequenceError(
                    f"green ({entry.direction.letter}, {entry.code}) in ring {r + 1} is not "
                    "followed by a matching yellow and red or a barrier",
                    location=name,
                )
            i += 3


def serialize_signal_program(doc: SignalProgramDoc) -> str:
    out = ['<?xml version="1.0" encoding="UTF-8"?>', "<root>"]
    for ring in doc.rings:
        out.append("    <ring>")
        for entry in ring:
            if isinstance(entry, GreenSpec):
                out.append(
                    f"        <green>{entry.direction.letter}, {entry.code}, "
                    f"{entry.gap!r}, {entry.min_green!r}, {entry.max_green!r}</green>"
                )
            elif isinstance(entry, YellowSpec):
                out.append(
                    f"        <yellow>{entry.direction.letter}, {entry.code}, "
                    f"{entry.duration!r}</yellow>"
                )
            elif isinstance(entry, RedSpec):
                out.append(
                    f"        <red>{entry.direction.letter}, {entry.code}, "
                    f"{entry.duration!r}</red>"
                )
            else:
                out.append(f'        <barrier id="{entry.ref_id}"></barrier>')
        out.append("    </ring>")
    for barrier_id, (yellow, red) in doc.barrier_defs.items():
        out.append(f'    <barrier id="{barrier_id}">{yellow!r}, {red!r}</barrier>')
    out.append("</root>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# demand CSV
# ---------------------------------------------------------------------------

def _parse_clock(raw: str, loc: str) -> float:
    """'h:mm AM/PM' to seconds past midnight."""
    match = re.fullmatch(r"(\d{1,2}):(\d{2})\s*([AP]M)", raw.strip(), re.IGNORECASE)
    if match is None:
        raise TimestampParseError(f"cannot parse timestamp {raw!r}", location=loc)
    hour, minute, half = int(match.group(1)), int(match.group(2)), match.group(3).upper()
    if not (1 <= hour <= 12) or minute > 59:
        raise TimestampParseError(f"timestamp {raw!r} out of range", location=loc)
    hour = hour % 12 + (12 if half == "PM" else 0)
    return float(hour * 3600 + minute * 60)


def _format_clock(seconds: float) -> str:
    total = int(round(seconds)) % 86400
    hour24, minute = divmod(total // 60, 60)
    half = "AM" if hour24 < 12 else "PM"
    hour12 = hour24 % 12 or 12
    return f"{hour12}:{minute:02d} {half}"


def _validate_action_code(code: str, loc: str) -> str:
    if not code or any(ch not in _ACTION_CHARS for ch in code) or len(set(code)) != len(code):
        raise UnknownActionCode(
            f"action code {code!r} is not a combination of distinct L/T/R letters",
            location=loc,
        )
    return code


def _check_total(raw: str, expected: int, label: str, loc: str) -> None:
    token = raw.strip()
    if not re.fullmatch(r"\d+", token) or int(token) != expected:
        raise TotalMismatch(
            f"{label} column reads {token!r} but the counts sum to {expected}",
            location=loc,
        )


def parse_demand_table(text: str, name: str = "demand") -> DemandTable:
    rows = [row for row in csv.reader(io.StringIO(text)) if any(cell.strip() for cell in row)]
    if len(rows) < 2:
        raise TooFewRows("demand table needs road and action header rows", location=name)

    road_order: list[Direction] = []
    for cell in rows[0]:
        token = cell.strip()
        if not token:
            continue
        try:
            direction = Direction.from_name(token)
        except ValueError:
            raise DemandFormatError(f"unknown road name {token!r}", location=f"{name}:1") from None
        if direction in road_order:
            raise DemandFormatError(f"road {token} listed twice", location=f"{name}:1")
        road_order.append(direction)
    if not road_order:
        raise DemandFormatError("no roads in header row", location=f"{name}:1")

    header = [cell.strip() for cell in rows[1]]
    actions: list[tuple[str, ...]] = []
    current: list[str] = []
    idx = 0
    for cell in header:
        if cell == "Vehicle Total":
            break
        if cell == "Total":
            actions.append(tuple(current))
            current = []
            idx += 1
        else:
            current.append(_validate_action_code(cell, f"{name}:2"))
    else:
        raise DemandFormatError("missing trailing 'Vehicle Total' column", location=f"{name}:2")
    if current:
        raise DemandFormatError("action codes after the last 'Total'", location=f"{name}:2")
    if len(actions) != len(road_order):
        raise DemandFormatError(
            f"{len(actions)} road column groups for {len(road_order)} roads",
            location=f"{name}:2",
        )

    data_rows = rows[2:]
    if len(data_rows) < 2:
        raise TooFewRows(
            "at least two data rows are required to derive the bucket length", location=name
        )

    expected_fields = 1 + sum(len(a) + 1 for a in actions) + 1
    times: list[float] = []
    counts: list[tuple[tuple[int, ...], ...]] = []
    for r, row in enumerate(data_rows):
        line_no = r + 3
        loc = f"{name}:{line_no}"
        if len(row) != expected_fields:
            raise DemandFormatError(
                f"expected {expected_fields} fields, got {len(row)}", location=loc
            )
        times.append(_parse_clock(row[0], loc))
        row_counts: list[tuple[int, ...]] = []
        col = 1
        for road_i, road_actions in enumerate(actions):
            road_counts = []
            for _ in road_actions:
                raw = row[col].strip()
                if not re.fullmatch(r"\d+", raw):
                    raise NonIntegerCount(
                        f"count {raw!r} is not a non-negative integer (column {col + 1})",
                        location=loc,
                    )
                road_counts.append(int(raw))
                col += 1
            _check_total(
                row[col], sum(road_counts), f"{road_order[road_i].name} total", loc
            )
            col += 1
            row_counts.append(tuple(road_counts))
        _check_total(
            row[col], sum(sum(rc) for rc in row_counts), "vehicle total", loc
        )
        counts.append(tuple(row_counts))

    diffs = [times[i + 1] - times[i] for i in range(len(times) - 1)]
    for i, diff in enumerate(diffs):
        if diff < 0:
            raise MultiDaySpanUnsupported(
                "timestamps wrap past midnight", location=f"{name}:{i + 4}"
            )
        if diff == 0:
            raise TimestampParseError(
                "repeated timestamp", location=f"{name}:{i + 4}"
            )
    if len(set(diffs)) > 1:
        raise UnequalBucketLengths(
            f"bucket lengths differ: {sorted(set(diffs))}", location=name
        )

    return DemandTable(
        road_order=tuple(road_order),
        actions=tuple(actions),
        start_clock=times[0],
        bucket_length=diffs[0],
        counts=tuple(counts),
    )


def serialize_demand_table(table: DemandTable) -> str:
    lines = [",".join(d.name for d in table.road_order)]
    header: list[str] = []
    for road_actions in table.actions:
        header.extend(road_actions)
        header.append("Total")
    header.append("Vehicle Total")
    lines.append(",".join(header))
    for r in range(table.row_count):
        clock = _format_clock(table.start_clock + r * table.bucket_length)
        cells = [clock]
        vehicle_total = 0
        for road_counts in table.counts[r]:
            cells.extend(str(c) for c in road_counts)
            road_total = sum(road_counts)
            cells.append(str(road_total))
            vehicle_total += road_total
        cells.append(str(vehicle_total))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# intersection XML
# ---------------------------------------------------------------------------

def parse_intersection_spec(text: str, name: str = "intersection") -> IntersectionSpecDoc:
    root, lines = _parse_xml(text, name)
    roads: list[RoadEntry] = []
    movements: list[MovementMapping] = []
    for elem in root:
        loc = _loc(name, lines, elem)
        if elem.tag == "road":
            roads.append(_parse_road(elem, loc, roads))
        elif elem.tag == "direction":
            movements.append(_parse_direction_block(elem, name, lines, movements))
        else:
            raise IntersectionSpecError(f"unexpected element <{elem.tag}>", location=loc)
    doc = IntersectionSpecDoc(roads=roads, movements=movements)
    _check_lane_ranges(doc, name)
    return doc


def _check_lane_ranges(doc: IntersectionSpecDoc, name: str) -> None:
    """Every mapped lane index must exist on its road."""
    for movement in doc.movements:
        src = doc.road(movement.from_direction)
        dst = doc.road(movement.to_direction)
        for vclass, pairs in movement.pairs.items():
            for in_lane, out_lane in pairs:
                if src is not None and in_lane >= src.incoming_lanes:
                    raise MalformedLanePair(
                        f"{movement.from_direction.name} has no incoming lane {in_lane}",
                        location=name,
                    )
                if dst is not None and out_lane >= dst.outgoing_lanes:
                    raise MalformedLanePair(
                        f"{movement.to_direction.name} has no outgoing lane {out_lane}",
                        location=name,
                    )


def _parse_road(elem: ET.Element, loc: str, seen: list[RoadEntry]) -> RoadEntry:
    fields = [f.strip() for f in (elem.text or "").split(",")]
    if len(fields) != 5:
        raise IntersectionSpecError(
            f"<road> expects 5 comma-separated fields, got {len(fields)}", location=loc
        )
    try:
        direction = Direction.from_name(fields[0])
    except ValueError:
        raise IntersectionSpecError(f"unknown road direction {fields[0]!r}", location=loc) from None
    if any(r.direction is direction for r in seen):
        raise DuplicateRoadDirection(f"road {direction.name} declared twice", location=loc)
    try:
        incoming, outgoing = int(fields[1]), int(fields[2])
        speed, horizon = float(fields[3]), float(fields[4])
    except ValueError:
        raise IntersectionSpecError(f"malformed road entry {elem.text!r}", location=loc) from None
    if incoming < 0 or outgoing < 0:
        raise IntersectionSpecError("lane counts must be non-negative", location=loc)
    if speed <= 0 or horizon <= 0:
        raise IntersectionSpecError(
            "speed limit and reservation horizon must be positive", location=loc
        )
    return RoadEntry(direction, incoming, outgoing, speed, horizon)


def _parse_direction_block(
    elem: ET.Element, name: str, lines: dict[int, int], seen: list[MovementMapping]
) -> MovementMapping:
    loc = _loc(name, lines, elem)
    from_to = elem.find("from_to")
    if from_to is None:
        raise IntersectionSpecError("<direction> without <from_to>", location=loc)
    fields = [f.strip() for f in (from_to.text or "").split(",")]
    if len(fields) != 2:
        raise IntersectionSpecError(
            f"<from_to> expects 2 fields, got {len(fields)}", location=loc
        )
    try:
        from_dir = Direction.from_name(fields[0])
        to_dir = Direction.from_name(fields[1])
    except ValueError as exc:
        raise IntersectionSpecError(str(exc), location=loc) from None
    if to_dir is from_dir.opposite:
        raise UTurnUnsupported(
            f"{from_dir.name} to {to_dir.name} is a U-turn, which is unsupported ({loc})"
        )
    if any(m.from_direction is from_dir and m.to_direction is to_dir for m in seen):
        raise IntersectionSpecError(
            f"duplicate <direction> block for {from_dir.name}, {to_dir.name}", location=loc
        )
    mapping = MovementMapping(from_dir, to_dir)
    for vehicle in elem:
        if vehicle.tag == "from_to":
            continue
        vloc = _loc(name, lines, vehicle)
        if vehicle.tag != "vehicle":
            raise IntersectionSpecError(f"unexpected element <{vehicle.tag}>", location=vloc)
        type_attr = vehicle.get("type", "")
        try:
            vclass = VehicleClass(type_attr)
        except ValueError:
            raise UnknownVehicleType(f"unknown vehicle type {type_attr!r}", location=vloc) from None
        if vclass in mapping.pairs:
            raise IntersectionSpecError(
                f"duplicate <vehicle type=\"{type_attr}\"> mapping", location=vloc
            )
        mapping.pairs[vclass] = _parse_lane_pairs(vehicle.text or "", vloc)
    return mapping


def _parse_lane_pairs(text: str, loc: str) -> tuple[tuple[int, int], ...]:
    stripped = text.strip()
    if not stripped:
        return ()
    matches = list(_LANE_PAIR_RE.finditer(stripped))
    if not matches:
        raise MalformedLanePair(f"cannot parse lane pairs from {stripped!r}", location=loc)
    leftover = _LANE_PAIR_RE.sub("", stripped).replace(",", "").strip()
    if leftover:
        raise MalformedLanePair(f"unexpected text {leftover!r} among lane pairs", location=loc)
    pairs = tuple((int(m.group(1)), int(m.group(2))) for m in matches)
    in_lanes = [p[0] for p in pairs]
    if len(set(in_lanes)) != len(in_lanes):
        raise MalformedLanePair(
            "an incoming lane appears twice for one movement", location=loc
        )
    return pairs


def serialize_intersection_spec(doc: IntersectionSpecDoc) -> str:
    out = ['<?xml version="1.0" encoding="UTF-8"?>', "<intersection>"]
    for road in doc.roads:
        out.append(
            f"    <road>{road.direction.name}, {road.incoming_lanes}, {road.outgoing_lanes}, "
            f"{road.speed_limit!r}, {road.reservation_horizon!r}</road>"
        )
    for movement in doc.movements:
        out.append("    <direction>")
        out.append(
            f"        <from_to>{movement.from_direction.name}, "
            f"{movement.to_direction.name}</from_to>"
        )
        for vclass in (VehicleClass.HUMAN, VehicleClass.AUTO):
            if vclass in movement.pairs:
                rendered = ", ".join(f"({i},{j})" for i, j in movement.pairs[vclass])
                out.append(f'        <vehicle type="{vclass.value}">{rendered}</vehicle>')
        out.append("    </direction>")
    out.append("</intersection>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# cross-reference validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationIssue:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


@dataclass
class ValidationReport:
    errors: list[ValidationIssue] = field(default_factory=list)
    warnings: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __str__(self) -> str:
        lines = [f"error: {i}" for i in self.errors]
        lines += [f"warning: {i}" for i in self.warnings]
        return "\n".join(lines) if lines else "ok"


def _turn_target(road: Direction, action: str) -> Direction:
    kind = {"L": TurnKind.LEFT, "T": TurnKind.THROUGH, "R": TurnKind.RIGHT}[action]
    if kind is TurnKind.LEFT:
        return road.left
    if kind is TurnKind.RIGHT:
        return road.right
    return road


def validate_cross_references(
    spec: IntersectionSpecDoc,
    program: SignalProgramDoc | None = None,
    demand: DemandTable | None = None,
) -> ValidationReport:
    """Check that the three documents agree with each other.

    Errors: demand roads missing from the intersection spec, signal phases on
    roads without incoming lanes, demand actions with traffic but no
    human-drivable lane mapping.  Warnings: movements only autonomous vehicles
    can use.
    """
    report = ValidationReport()
    road_dirs = {r.direction for r in spec.roads}
    for direction in CARDINALS:
        if direction not in road_dirs:
            report.errors.append(
                ValidationIssue("intersection", f"no road for direction {direction.name}")
            )

    for movement in spec.movements:
        human = movement.pairs.get(VehicleClass.HUMAN, ())
        auto = movement.pairs.get(VehicleClass.AUTO, ())
        if auto and not human:
            report.warnings.append(
                ValidationIssue(
                    "intersection",
                    f"movement {movement.from_direction.name} to "
                    f"{movement.to_direction.name} is reachable only by autonomous vehicles",
                )
            )

    if program is not None:
        for direction, code in program.movement_keys:
            road = spec.road(direction)
            if road is None or road.incoming_lanes == 0:
                report.errors.append(
                    ValidationIssue(
                        "signals",
                        f"phase ({direction.letter}, {code}) addresses road "
                        f"{direction.name}, which has no incoming lanes",
                    )
                )

    if demand is not None:
        for direction in demand.road_order:
            if direction not in road_dirs:
                report.errors.append(
                    ValidationIssue(
                        "demand", f"road {direction.name} is not in the intersection spec"
                    )
                )
        for road_i, direction in enumerate(demand.road_order):
            if direction not in road_dirs:
                continue
            for col_i, code in enumerate(demand.actions[road_i]):
                column_total = sum(row[road_i][col_i] for row in demand.counts)
                if column_total == 0:
                    continue
                for action in code:
                    target = _turn_target(direction, action)
                    movement = spec.movement(direction, target)
                    human = movement.pairs.get(VehicleClass.HUMAN, ()) if movement else ()
                    if not human:
                        report.errors.append(
                            ValidationIssue(
                                "demand",
                                f"{column_total} vehicles on {direction.name} action "
                                f"{code!r} but no human-drivable lane for the "
                                f"{action} movement",
                            )
                        )
    return report
