"""Exception types shared across the package."""


class FirejetError(Exception):
    """Base class for all package-specific errors."""


class OutOfTangentRange(FirejetError):
    """Geodetic point too far from the local frame origin for flat-earth math."""


class CoverageError(FirejetError):
    """A building footprint lies outside the terrain extent."""


class GridTooLarge(FirejetError):
    """Requested occupancy grid exceeds the configured cell budget."""


class FunnelTooSmall(FirejetError):
    """Obstacles leave less than the minimum safe cylinder radius."""


class NoFeasiblePose(FirejetError):
    """The standoff ray never enters the flight funnel."""


class NonPositivePressure(FirejetError):
    """Nozzle pressure must be positive."""


class NeverLands(FirejetError):
    """Jet still airborne after the simulation time cap."""


class Unreachable(FirejetError):
    """Target beyond the jet's reach for the requested arc."""


class DegenerateBaseline(FirejetError):
    """Two-view geometry unusable: rays near-parallel or baseline too short."""


class MissingDepth(FirejetError):
    """Depth query undefined at the requested pixel."""


class InvalidTransition(FirejetError):
    """Mission event not allowed in the current state."""

    def __init__(self, state, event):
        super().__init__(f"event {event!r} not allowed in state {state!r}")
        self.state = state
        self.event = event


class ScenarioInvalid(FirejetError):
    """Scenario file failed validation."""


class VersionMismatch(FirejetError):
    """Run log written by an incompatible version."""


class BindFailure(FirejetError):
    """Network service could not bind its address."""


class MalformedFrame(FirejetError):
    """Protocol frame could not be decoded."""
