"""Exception types shared across the toolkit.

Validation failures (bad files, bad configs) and solver failures are kept
distinct so the CLI can map them to different exit codes.
"""

from __future__ import annotations


class CinestyleError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(CinestyleError, ValueError):
    """A data file violates its schema. Message names the offending field."""


class ConfigError(CinestyleError, ValueError):
    """Invalid configuration value or inconsistent bounds."""


class SolverError(CinestyleError, RuntimeError):
    """An optimizer failed to produce a usable answer."""


class DegenerateProblemError(SolverError):
    """Problem has no well-defined solution (e.g. no weights and no continuity)."""


class NonConvexError(SolverError):
    """Negative curvature detected where a convex problem was required."""


class NoSubjectError(CinestyleError, ValueError):
    """Sequence does not contain enough detections to define a main subject."""


class SceneError(CinestyleError, ValueError):
    """Scene specification cannot be rendered as requested."""
