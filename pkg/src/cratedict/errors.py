"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Parameter derivation produced or received an unusable configuration."""


class BitBoundsError(IndexError):
    """Bit offset or length falls outside a buffer or region."""


class BitValueError(ValueError):
    """Value does not fit in the requested bit width."""


class RegionFullError(RuntimeError):
    """A shift-insert would push nonzero bits past the end of its region."""


class SelectNotFoundError(LookupError):
    """The requested zero does not exist inside the scanned window."""


class ComponentOverflow(RuntimeError):
    """A fixed-capacity component cannot absorb one more element.

    The structure that raises this is left unchanged; callers may keep
    using it for queries and deletions.
    """

    def __init__(self, component: str, detail: str = ""):
        self.component = component
        super().__init__(f"{component} overflow" + (f": {detail}" if detail else ""))


class CapacityError(RuntimeError):
    """Live cardinality would exceed the configured maximum."""


class InvalidPointerError(LookupError):
    """Pointer does not refer to an occupied motel slot."""


class ConstructionFailure(RuntimeError):
    """Randomized build did not succeed within the retry budget."""
