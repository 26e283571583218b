"""Exception hierarchy.

Three buckets, chosen to map cleanly onto the CLI's exit codes:

* ``SpecError`` -- the caller asked for something incoherent (bad ring
  bounds, bad DGP parameters, probability outside [0, 1]).  The CLI
  treats these as usage errors (exit 2).
* ``DataError`` -- the data itself is malformed or inconsistent
  (missing columns, unbalanced panel, conflicting coordinates).
* ``EstimationError`` -- data and request are individually fine but the
  estimator cannot proceed (empty ring, empty subsample, degenerate
  partition, too few observations).

``DataError`` and ``EstimationError`` surface as exit 1.
"""


class RingDidError(Exception):
    """Base class for every error raised by this package."""


class SpecError(RingDidError, ValueError):
    """Invalid parameters or configuration supplied by the caller."""


class DataError(RingDidError):
    """Input data violates the documented schema or consistency rules."""


class EstimationError(RingDidError):
    """The requested estimate is not computable on this data."""
