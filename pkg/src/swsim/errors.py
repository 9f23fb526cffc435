"""Exception hierarchy shared by the simulator modules."""


class SimError(Exception):
    """Base class for all simulator errors."""


class ShapeMismatch(SimError, ValueError):
    pass


class PatternMismatch(SimError, ValueError):
    """Kernels in one group do not share a zero pattern."""

    def __init__(self, kernel_id, position):
        self.kernel_id = kernel_id
        self.position = tuple(int(p) for p in position)
        super().__init__(
            f"kernel {kernel_id} differs from kernel 0 at (c, kh, kw)={self.position}"
        )


class RowTooWide(SimError, ValueError):
    pass


class CorruptIndex(SimError, ValueError):
    pass


class LengthMismatch(SimError, ValueError):
    pass


class SelectOverrun(SimError, IndexError):
    pass


class SlotOutOfRange(SimError, IndexError):
    pass


class ModeMismatch(SimError, ValueError):
    pass


class DrainIncomplete(SimError, RuntimeError):
    pass


class InfeasibleTile(SimError, ValueError):
    pass


class FormatError(SimError, ValueError):
    pass


class ValidationError(SimError, ValueError):
    pass
