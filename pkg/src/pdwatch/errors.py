"""Exception types shared across pdwatch modules."""


class PdWatchError(Exception):
    """Base class for all pdwatch errors."""


class TuneError(PdWatchError):
    """Requested center frequency is outside the tunable range."""


class StateError(PdWatchError):
    """Operation attempted against a device in the wrong state."""


class ConfigError(PdWatchError):
    """Invalid sweep plan, scene file or run configuration."""


class EmptySweepError(PdWatchError):
    """Stitching was asked to combine zero spectrum slices."""


class FormatError(PdWatchError):
    """A .iqf file (or frame headed for one) violates the container format."""


class CorruptError(PdWatchError):
    """A .iqf file failed its CRC check or is truncated."""


class UnreachableError(PdWatchError):
    """A detection target that no number of sweeps can reach (per-sweep p = 0)."""
