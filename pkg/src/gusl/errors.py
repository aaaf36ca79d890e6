"""Exception types shared across the package.

Each error carries a stable ``category`` string that the CLI uses for its
machine-readable error line.
"""


class GuslError(Exception):
    category = "error"


class InvalidDimensionError(GuslError):
    category = "invalid-dimension"


class InvalidConfigError(GuslError):
    category = "invalid-config"


class ShapeMismatchError(GuslError):
    category = "shape-mismatch"


class IdenticalImagesError(GuslError):
    category = "identical-images"


class InsufficientDataError(GuslError):
    category = "insufficient-data"


class NumericalFailureError(GuslError):
    category = "numerical-failure"


class InvalidInputError(GuslError):
    category = "invalid-input"


class InvalidModelError(GuslError):
    category = "invalid-model"


class IncompatibleModelError(GuslError):
    category = "incompatible-model"


class CorruptModelError(GuslError):
    category = "corrupt-model"


class FormatError(GuslError):
    category = "format"
