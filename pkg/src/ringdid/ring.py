"""Two-ring difference-in-differences estimators.

The classical design: units within ``d_t`` of the treatment point form
the treated ring, units in ``(d_t, d_c]`` the control ring, and the
treatment effect is the difference in mean outcome change between the
rings.  Panel data uses per-unit first differences; repeated cross
sections use the four (ring x period) cell means.

Because both estimators are indicator regressions, the coefficients are
exactly group-mean contrasts; no regression machinery is involved.
Standard errors are two-sample (Welch-style) combinations of within-cell
variances.  Errors are assumed uncorrelated with distance, so no spatial
clustering is applied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data_model import Dataset, PanelDiffs, subsample_within
from .errors import EstimationError, SpecError

PANEL = "panel"
REPEATED_CROSS_SECTION = "repeated_cross_section"


@dataclass(frozen=True)
class RingSpec:
    """Treated-ring outer edge ``d_t`` and control-ring outer edge ``d_c``.

    Treated ring is the closed interval [0, d_t]; control ring is
    (d_t, d_c].  Units beyond d_c are excluded before estimation.
    """

    d_t: float
    d_c: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.d_t) and math.isfinite(self.d_c)):
            raise SpecError("ring bounds must be finite")
        if not 0 < self.d_t:
            raise SpecError(f"d_t must be positive, got {self.d_t}")
        if not self.d_t < self.d_c:
            raise SpecError(f"d_t must be < d_c (got d_t={self.d_t}, d_c={self.d_c})")


@dataclass(frozen=True)
class RingEstimate:
    """Ring DiD result.

    ``beta1`` is the treated-vs-control contrast (the DiD coefficient;
    the four-cell double difference under repeated cross sections).
    ``group_means`` carries every cell mean, so any regression
    parameterization of the same design is recoverable from it.
    """

    beta1: float
    se: float
    n_treated: int
    n_control: int
    group_means: dict[str, float]
    design: str


def _cell(values: np.ndarray, label: str, min_cell: int) -> tuple[float, float, int]:
    n = len(values)
    if n < min_cell:
        raise EstimationError(f"{label} has {n} observation(s); need at least {min_cell}")
    return float(values.mean()), float(values.var(ddof=1)), n


def _check_min_cell(min_cell: int) -> None:
    if min_cell < 2:
        raise SpecError(f"min_cell must be at least 2 (variances need it), got {min_cell}")


def ring_estimate_panel(diffs: PanelDiffs, rings: RingSpec, min_cell: int = 2) -> RingEstimate:
    """Two-ring DiD on first-differenced panel data.

    Parameters
    ----------
    diffs : PanelDiffs
        Per-unit outcome changes with distances.
    rings : RingSpec
        Ring boundaries; units beyond ``rings.d_c`` are dropped first.
    min_cell : int
        Minimum units per ring (default 2, so variances exist).

    Returns
    -------
    RingEstimate
        ``beta1 = mean(delta_y | treated) - mean(delta_y | control)`` with
        the Welch-style standard error sqrt(s_t^2/n_t + s_c^2/n_c).
    """
    _check_min_cell(min_cell)
    inside, _ = subsample_within(diffs, rings.d_c)
    treated_mask = inside.distances <= rings.d_t
    m_t, v_t, n_t = _cell(inside.delta_y[treated_mask], "treated ring", min_cell)
    m_c, v_c, n_c = _cell(inside.delta_y[~treated_mask], "control ring", min_cell)
    return RingEstimate(
        beta1=m_t - m_c,
        se=math.sqrt(v_t / n_t + v_c / n_c),
        n_treated=n_t,
        n_control=n_c,
        group_means={"treated": m_t, "control": m_c},
        design=PANEL,
    )


def ring_estimate_rc(data: Dataset, rings: RingSpec, min_cell: int = 2) -> RingEstimate:
    """Two-ring DiD on repeated cross sections.

    Each unit is observed in one period only.  ``beta1`` is the double
    difference (treated period-1 minus period-0) minus (control period-1
    minus period-0); its standard error combines all four cell variances.
    Identification additionally requires stable composition across
    periods, which the data alone cannot certify.
    """
    _check_min_cell(min_cell)
    if not data.has_distances:
        raise EstimationError("repeated-cross-section estimate needs a distance column")
    inside, _ = subsample_within(data, rings.d_c)
    treated_mask = inside.distances <= rings.d_t
    p1 = inside.periods == 1
    cells = {}
    for label, mask in (
        ("treated_period0", treated_mask & ~p1),
        ("treated_period1", treated_mask & p1),
        ("control_period0", ~treated_mask & ~p1),
        ("control_period1", ~treated_mask & p1),
    ):
        pretty = label.replace("_period", " ring, period ")
        cells[label] = _cell(inside.outcomes[mask], pretty, min_cell)
    means = {label: cell[0] for label, cell in cells.items()}
    beta1 = (means["treated_period1"] - means["treated_period0"]) - (
        means["control_period1"] - means["control_period0"]
    )
    se = math.sqrt(sum(v / n for _, v, n in cells.values()))
    return RingEstimate(
        beta1=beta1,
        se=se,
        n_treated=cells["treated_period0"][2] + cells["treated_period1"][2],
        n_control=cells["control_period0"][2] + cells["control_period1"][2],
        group_means=means,
        design=REPEATED_CROSS_SECTION,
    )
