"""Exception types shared across the package."""


class SpinReadError(Exception):
    """Base class for all errors raised by spinread."""


class ConfigError(SpinReadError):
    """Invalid or incomplete configuration document."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class InfeasibleVoltageError(SpinReadError):
    """Voltage optimization requires a voltage outside the DAC range."""

    def __init__(self, message, electrode=None, required_voltage=None):
        super().__init__(message)
        self.electrode = electrode
        self.required_voltage = required_voltage


class SingularFieldError(SpinReadError):
    """Field evaluation requested on (or too close to) a current filament."""


class RunawayAmplitudeError(SpinReadError):
    """Integrated motional amplitude exceeded the configured guard."""


class NumericError(SpinReadError):
    """Non-finite state encountered during integration."""
