"""Shared vocabulary: cardinal directions, turn kinds, vehicle classes, signal colors.

Directions name the direction of travel, not the compass location of the
approach: the EAST road carries vehicles heading east.  Lane indices are
0-based and counted from the leftmost lane in the direction of travel.
"""

from __future__ import annotations

from enum import Enum, IntEnum

#: Simulation time step in seconds.  All state updates happen on tick
#: boundaries; reservation slots have exactly this length.
DEFAULT_TICK = 0.02


class Direction(Enum):
    """Direction of travel, clockwise compass order."""

    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3

    @property
    def letter(self) -> str:
        return self.name[0]

    @classmethod
    def from_letter(cls, letter: str) -> "Direction":
        for d in cls:
            if d.letter == letter.upper():
                return d
        raise ValueError(f"unknown direction letter {letter!r}")

    @classmethod
    def from_name(cls, name: str) -> "Direction":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown direction name {name!r}") from None

    @property
    def left(self) -> "Direction":
        """Direction of travel after a left turn (counterclockwise)."""
        return Direction((self.value - 1) % 4)

    @property
    def right(self) -> "Direction":
        """Direction of travel after a right turn (clockwise)."""
        return Direction((self.value + 1) % 4)

    @property
    def opposite(self) -> "Direction":
        return Direction((self.value + 2) % 4)

    @property
    def vector(self) -> tuple[float, float]:
        """Unit vector of travel in box coordinates (x east, y north)."""
        return {
            Direction.NORTH: (0.0, 1.0),
            Direction.EAST: (1.0, 0.0),
            Direction.SOUTH: (0.0, -1.0),
            Direction.WEST: (-1.0, 0.0),
        }[self]


#: Canonical iteration order used wherever determinism requires one.
CARDINALS = (Direction.NORTH, Direction.EAST, Direction.SOUTH, Direction.WEST)


class TurnKind(Enum):
    LEFT = "left"
    THROUGH = "through"
    RIGHT = "right"

    @property
    def code(self) -> str:
        """Signal movement code letter: crossing turns are 'c', the rest 't'."""
        return "c" if self is TurnKind.LEFT else "t"


class VehicleClass(Enum):
    HUMAN = "HUMAN"
    AUTO = "AUTO"


class Color(IntEnum):
    """Signal indication.  Integer codes are shared with the tick kernels;
    ordering matters: when two ring entries address one movement the brighter
    (greater) color wins."""

    RED = 0
    YELLOW = 1
    GREEN = 2


#: Valid movement codes in signal programs: 'c' = crossing turn (left turn
#: under right-hand traffic), 't' = through plus the non-crossing turn,
#: 'ct' = both.
MOVEMENT_CODES = ("c", "t", "ct")


def code_covers(code: str, kind: TurnKind) -> bool:
    """Whether a phase movement code authorizes a particular turn kind."""
    if code == "ct":
        return True
    return kind.code == code
