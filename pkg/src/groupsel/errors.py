"""Exception types shared across the package."""


class GroupselError(ValueError):
    """Base class for all groupsel errors."""


class ConstantColumn(GroupselError):
    def __init__(self, index, name=None):
        self.index = index
        self.name = name
        label = name if name is not None else f"#{index}"
        super().__init__(f"column {label} is constant and cannot be standardized")


class EmptyCategory(GroupselError):
    def __init__(self, index, level):
        self.index = index
        self.level = level
        super().__init__(f"qualitative column #{index} has empty/degenerate category {level!r}")


class InvalidSpec(GroupselError):
    pass


class IllPosed(GroupselError):
    pass


class DimensionMismatch(GroupselError):
    pass


class NonBinaryResponse(GroupselError):
    pass


class EmptyGroup(GroupselError):
    pass


class TooFewObservations(GroupselError):
    pass


class DegenerateInput(GroupselError):
    pass


class OutOfRange(GroupselError):
    pass


class SizeMismatch(GroupselError):
    pass


class DegenerateMargin(GroupselError):
    pass


class ConstantVector(GroupselError):
    pass


class OneClassOnly(GroupselError):
    pass


class EmptyActiveSet(GroupselError):
    pass


class TooFewMinority(GroupselError):
    pass


class InvalidDesign(GroupselError):
    pass


class EmptyScreenResult(GroupselError):
    pass
