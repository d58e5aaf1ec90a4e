"""Exception types raised across the package.

Every error a caller is expected to handle derives from :class:`MolcapError`,
so ``except MolcapError`` is always a safe catch-all for malformed input.
Errors carry enough context (byte offset, atom index, offending token) to
point at the exact spot in the input that triggered them.
"""

from __future__ import annotations


class MolcapError(Exception):
    """Base class for all package errors."""


# --------------------------------------------------------------------------
# SMILES parsing


class SmilesError(MolcapError):
    """Base class for SMILES tokenizer/parser errors."""


class UnknownCharacterError(SmilesError):
    """A character outside the supported SMILES grammar."""

    def __init__(self, char: str, position: int):
        self.char = char
        self.position = position
        super().__init__(f"unknown character {char!r} at position {position}")


class UnterminatedBracketError(SmilesError):
    """A ``[`` without a matching ``]``."""

    def __init__(self, position: int):
        self.position = position
        super().__init__(f"unterminated bracket atom starting at position {position}")


class UnclosedRingBondError(SmilesError):
    """A ring-closure digit that is never matched (or matched illegally)."""

    def __init__(self, digit: int, detail: str = "never closed"):
        self.digit = digit
        super().__init__(f"ring-closure {digit} {detail}")


class UnbalancedBranchError(SmilesError):
    """Branch parentheses that do not balance."""

    def __init__(self, detail: str = "unbalanced parentheses"):
        super().__init__(detail)


class InvalidValenceError(SmilesError):
    """An atom whose bond-order sum exceeds the element's allowed valence."""

    def __init__(self, atom_index: int, detail: str = ""):
        self.atom_index = atom_index
        msg = f"invalid valence at atom {atom_index}"
        super().__init__(msg + (f": {detail}" if detail else ""))


class UnsupportedElementError(SmilesError):
    """An element symbol the parser does not accept in this context."""

    def __init__(self, symbol: str):
        self.symbol = symbol
        super().__init__(f"unsupported element symbol {symbol!r}")


class MalformedSmilesError(SmilesError):
    """Structurally invalid input not covered by a more specific error."""


# --------------------------------------------------------------------------
# Substructure queries


class QueryError(MolcapError):
    """Base class for query-pattern errors."""


class UnsupportedPrimitiveError(QueryError):
    """A recognized SMARTS feature outside the supported subset."""

    def __init__(self, token: str, position: int = -1):
        self.token = token
        self.position = position
        super().__init__(f"unsupported query primitive {token!r}")


class MalformedPatternError(QueryError):
    """A query string that does not follow the pattern grammar."""

    def __init__(self, detail: str, position: int):
        self.position = position
        super().__init__(f"malformed pattern at position {position}: {detail}")


# --------------------------------------------------------------------------
# Structural key definitions


class KeyFileError(MolcapError):
    """Base class for key-definition file errors."""


class MissingKeyError(KeyFileError):
    """A key index absent from the definition file."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"key {index} missing from definition file")


class PatternParseError(KeyFileError):
    """A key whose pattern text failed to parse."""

    def __init__(self, index: int, detail: str):
        self.index = index
        super().__init__(f"key {index}: {detail}")


# --------------------------------------------------------------------------
# Imaging


class LayoutFailureError(MolcapError):
    """Coordinate assignment could not satisfy the separation constraints."""


class DoesNotFitError(MolcapError):
    """A laid-out molecule exceeds the raster grid at the fixed scale."""

    def __init__(self, extent_px: float, side: int):
        self.extent_px = extent_px
        self.side = side
        super().__init__(
            f"molecule spans {extent_px:.0f} px but the grid side is {side}"
        )


# --------------------------------------------------------------------------
# Dataset handling


class MissingColumnError(MolcapError):
    """A required CSV column is absent."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing column {name!r}")


class EmptyFileError(MolcapError):
    """An input file with no data rows."""


class SingleClassError(MolcapError):
    """An operation that needs both classes saw only one."""


class TooFewExamplesError(MolcapError):
    """Not enough examples per class to build the requested folds."""


class CacheError(MolcapError):
    """A dataset cache file that is unreadable or does not match."""


# --------------------------------------------------------------------------
# Model kernel


class ConfigError(MolcapError):
    """An inconsistent model or training configuration."""


class ShapeMismatchError(MolcapError):
    """Tensor shapes that do not line up."""

    def __init__(self, expected, got):
        super().__init__(f"expected shape {expected}, got {got}")


class NonFiniteLossError(MolcapError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, epoch: int, history=None):
        self.epoch = epoch
        self.history = history if history is not None else []
        super().__init__(f"non-finite loss at epoch {epoch}")


# --------------------------------------------------------------------------
# Metrics


class LengthMismatchError(MolcapError):
    """Score and label sequences of different lengths."""


class EmptyError(MolcapError):
    """An aggregate over an empty collection."""
