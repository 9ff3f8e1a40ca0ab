"""Exception types shared across the package.

Everything derives from ValueError so callers can catch broadly, but each
failure mode keeps its own class so tests can pin down exactly what went
wrong.
"""


class GraphError(ValueError):
    """Base class for malformed-graph problems."""


class InvalidEdgeError(GraphError):
    """Edge endpoint out of range, or a self-loop where none are allowed."""


class DuplicateEdgeError(GraphError):
    """The same undirected edge appears twice."""


class DisconnectedGraphError(GraphError):
    """Operation requires a connected graph (e.g. resistance distances)."""


class ShapeMismatchError(ValueError):
    """Array arguments have incompatible shapes."""


class NonScalarLossError(ValueError):
    """Backward pass was seeded from a non-scalar tensor."""


class EmptyGroupError(ValueError):
    """A normalization group (e.g. a softmax support) contains no rows."""


class EmptySupportError(ValueError):
    """A node ended up with an empty convolution support."""


class WidthMismatchError(ValueError):
    """Feature width does not match what a layer was built for."""


class ConfigMismatchError(ValueError):
    """Config values are individually valid but mutually inconsistent."""


class LengthMismatchError(ValueError):
    """Paired sequences (predictions/targets, attrs/edges) differ in length."""


class ConfigParseError(ValueError):
    """Experiment config file could not be parsed."""


class UnknownFieldError(ConfigParseError):
    """Config contains a field this tool does not know about."""
