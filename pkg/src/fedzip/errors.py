"""Exception hierarchy shared across the fedzip package.

Argument-validation problems raise plain ValueError; the classes below
cover data, stream, and feasibility failures that callers may want to
catch selectively.
"""


class FedzipError(Exception):
    """Base class for all fedzip-specific errors."""


class BadMagic(FedzipError):
    """File or byte stream does not start with the expected magic."""


class TruncatedFile(FedzipError):
    """Byte stream ended before a declared structure was complete."""


class DuplicateName(FedzipError):
    """Two tensors in one state dict share a name."""


class ShapeMismatch(FedzipError):
    """Declared shape disagrees with the available payload."""


class WrongDtype(FedzipError):
    """Operation applied to a tensor of an unsupported dtype."""


class ChecksumMismatch(FedzipError):
    """CRC32 trailer does not match the framed content."""


class CorruptPayload(FedzipError):
    """Codec payload cannot be parsed back into values."""


class CorruptStream(FedzipError):
    """Lossless frame cannot be decoded back to the original bytes."""


class EmptyInput(FedzipError):
    """Operation requires a non-empty array."""


class NonFiniteInput(FedzipError):
    """Lossy codecs only accept finite values."""


class LengthMismatch(FedzipError):
    """Paired arrays differ in length."""


class StructureMismatch(FedzipError):
    """State dicts do not share names, shapes, and dtypes."""


class InvalidConfig(FedzipError):
    """Simulation configuration fails a basic sanity check."""


class NoBreakeven(FedzipError):
    """Compression never pays off for these cost inputs."""


class NoFeasibleCandidate(FedzipError):
    """Every grid cell violates the selection constraints."""


class NoFeasibleEpsilon(FedzipError):
    """No error bound satisfies the accuracy and cost constraints."""
