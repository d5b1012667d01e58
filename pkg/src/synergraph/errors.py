"""Exception hierarchy shared by every synergraph module."""


class SynergraphError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SynergraphError):
    """Bad run configuration: unknown key, unparsable value, or out-of-range."""


class ParseError(SynergraphError):
    """Malformed input file; carries path and 1-based line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class StoreFrozen(SynergraphError):
    """Mutation attempted after the entity store was frozen."""


class KindConflict(SynergraphError):
    """An identifier is already bound to an entity of a different kind."""


class DescriptorConflict(SynergraphError):
    """Descriptor/identity mismatch: one descriptor for two identities, or two for one."""


class DimMismatch(SynergraphError):
    """Vector length does not match the configured dimension."""


class UnknownEntity(SynergraphError):
    """Identifier does not resolve to any registered entity."""


class KindMismatch(SynergraphError):
    """Edge endpoints violate the permitted node kinds for the edge type."""


class MissingEmbedding(SynergraphError):
    """Entity has no attached embedding where one is required."""


class InvalidEdge(SynergraphError):
    """Structurally invalid edge row (e.g. a self-edge)."""


class IndexOutOfRange(SynergraphError, IndexError):
    """Node index outside the graph."""


class LengthMismatch(SynergraphError):
    """Paired sequences or bit vectors have different lengths."""


class MissingProtein(SynergraphError):
    """Expression profile references a protein absent from the embedding table."""


class EmptyProfile(SynergraphError):
    """Expression profile has no weights."""


class UnknownProteinInProfile(SynergraphError):
    """Expression profile references a protein that is not a graph node."""


class InsufficientUniverse(SynergraphError):
    """Not enough non-positive pairs to sample the requested negatives."""


class NonFiniteLoss(SynergraphError):
    """Training produced a NaN or infinite loss."""


class UnknownDrug(SynergraphError):
    """Triple references a drug that is not a graph node."""


class UnknownCell(SynergraphError):
    """Triple references a cell line with no expression profile."""


class TooFewSamples(SynergraphError):
    """Dataset too small for the requested fold count."""
