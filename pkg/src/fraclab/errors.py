"""Exception hierarchy. Each error records the module it came from so the CLI
can report the origin of a pipeline failure."""


class FraclabError(Exception):
    origin = "fraclab"


class InvalidModelError(FraclabError):
    origin = "model"


class ResolutionError(FraclabError):
    origin = "model"


class InvalidRegionError(FraclabError):
    origin = "model"


class InvalidParameterError(FraclabError, ValueError):
    origin = "forward"


class CompatibilityError(FraclabError):
    origin = "forward"


class SupportError(FraclabError):
    origin = "forward"


class LocalityError(FraclabError):
    origin = "forward"


class GrowthRangeError(FraclabError):
    """Overflow while sampling; ``partial`` holds whatever was computed."""

    origin = "probes"

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class IncompleteTableError(FraclabError):
    origin = "recovery"


class IllConditionedError(FraclabError):
    origin = "recovery"


class SpuriousModeError(FraclabError):
    origin = "recovery"


class UnderdeterminedError(FraclabError):
    origin = "recovery"


class InsufficientDataError(FraclabError):
    origin = "recovery"


class PoleProximityError(FraclabError):
    origin = "recovery"


class DensityFailureError(FraclabError):
    origin = "recovery"


class ConfigError(FraclabError):
    origin = "cli"
