class PrepError(Exception):
    """Base class for data-prep failures."""


class DimMismatch(PrepError):
    pass


class MissingVariable(PrepError):
    pass


class ModelUnavailable(PrepError):
    pass
