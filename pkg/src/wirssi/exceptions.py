"""Exception hierarchy shared by every stage of the pipeline."""


class WirssiError(Exception):
    """Base class for all package errors."""


class ConfigError(WirssiError, ValueError):
    """Invalid configuration value or file."""


class DataError(WirssiError, ValueError):
    """Malformed or unusable input data."""


class GeometryError(WirssiError, ValueError):
    pass


class DegenerateGeometry(GeometryError):
    """Law-of-cosines denominator vanishes for the requested detection."""


class InvalidRange(GeometryError):
    """Bistatic range does not exceed the Tx-Rx baseline."""


class CoincidentPoint(GeometryError):
    """Point coincides with the transmitter or the receiver."""


class BoundViolation(WirssiError):
    """Empirical zeta step exceeded the analytic bound."""


class ZeroStaticPower(DataError):
    pass


class BelowMagnitudeFloor(WirssiError, ValueError):
    """Peak magnitude too small for a finite delay estimate."""


class RangeNotBistatic(WirssiError, ValueError):
    """Inferred bistatic range is not longer than the baseline."""


class EmptyCalibration(WirssiError, ValueError):
    pass


class InsufficientDetections(WirssiError):
    pass


class NoTemporalOverlap(WirssiError, ValueError):
    pass


class AxisMismatch(WirssiError, ValueError):
    pass


class SeriesTooShort(WirssiError, ValueError):
    pass


class BlindConfigurationWarning(UserWarning):
    """Transmitter lies near array broadside; Doppler-AoA mirror cannot be resolved."""
