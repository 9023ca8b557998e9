"""Exception types raised across the library.

Hierarchy is flat: everything derives from :class:`MeshvecError` so callers
can catch library failures with one handler. The CLI maps subclasses to exit
codes (config 2, data 3, numerical 4).
"""


class MeshvecError(Exception):
    """Base class for all library errors."""


# -- mesh construction --------------------------------------------------------

class NonManifoldEdge(MeshvecError):
    """An edge is incident to more than two faces."""


class DegenerateFace(MeshvecError):
    """A face has repeated vertices or numerically vanishing area."""


class InconsistentOrientation(MeshvecError):
    """Two faces traverse a shared edge in the same direction."""


class ZeroNormal(MeshvecError):
    """Angle-weighted normal sum vanished at a vertex."""


class EmptyDomain(MeshvecError):
    """A hole mask removed the entire triangulation."""


class DegenerateHull(MeshvecError):
    """Convex-hull input was degenerate (e.g. coplanar points)."""


# -- operators and spectra -----------------------------------------------------

class DimensionMismatch(MeshvecError):
    """An array argument has the wrong length for the mesh."""


class SingularMass(MeshvecError):
    """A mass matrix is not positive definite even after regularization."""


class ConvergenceFailure(MeshvecError):
    """An iterative eigensolver failed to converge."""


class NoBoundary(MeshvecError):
    """A boundary-dependent operation was called on a closed mesh."""


class NoSpectralGap(MeshvecError):
    """Harmonic candidates are not separated from the rest of the spectrum."""


# -- vector fields -------------------------------------------------------------

class IsolatedVertex(MeshvecError):
    """A vertex has no incident faces, so no tangent data exists."""


class ZeroEigenvalueIncluded(MeshvecError):
    """A zero-eigenvalue mode reached a 1/sqrt(lambda) scaling."""


# -- kernels -------------------------------------------------------------------

class IncompleteBasis(MeshvecError):
    """A precision matrix was requested from a truncated basis."""


class EmptyBases(MeshvecError):
    """No basis fields carry weight in a requested kernel."""


# -- inference -----------------------------------------------------------------

class SingularSystem(MeshvecError):
    """A Cholesky factorization failed even after jitter escalation."""


class PoleFrameUndefined(MeshvecError):
    """The east/north tangent frame degenerates at a pole."""


class UnmappedLocation(MeshvecError):
    """An observation location does not correspond to a mesh vertex."""


class EmptyMask(MeshvecError):
    """A metrics mask selects no vertices."""


# -- CLI -----------------------------------------------------------------------

class ConfigError(MeshvecError):
    """A run configuration is missing or inconsistent."""
