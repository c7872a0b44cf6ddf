"""Conservation laws: construction and sampled verification.

A law is a tuple of scalar quantities Phi_1..Phi_k on one chart, conserved
along an evolution family X when sum_A X_A(Phi_A) vanishes.  Two
constructors:

  * build_bracket_law   Phi_A = omega_A(S_1, ..., S_{p-1}, Y), fully
                        symbolic.  Deliberately total: it does not check
                        that Y is a symmetry or the forms invariant, so the
                        verifier can demonstrate which hypotheses matter.
  * build_noether_law   Phi_A = theta_A(Y) - f_A for a Cartan symmetry Y,
                        where df_A = L_Y theta_A.  When that derivative
                        vanishes on the samples f_A is taken to be zero and
                        the law stays symbolic; otherwise f_A is recovered
                        by line-integral quadrature, pinned to 0 at the
                        base point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .calculus import (
    ChartMismatchError,
    PForm,
    PotentialEvaluator,
    ScalarField,
    VectorField,
    apply_form,
    directional_derivative,
    exterior_derivative,
    form_sub,
    interior_product,
    lie_derivative_form,
    potential_of_exact_one_form,
    scalar_form,
    two_form_matrix,
)
from .dynamics import FieldSystem, KVectorField
from .expr import ChartSpace, Num, compiled_evaluator, sample_points
from .symmetry import SymmetryVerdict, is_cartan_symmetry

__all__ = [
    "ConservationLaw",
    "NumericLawComponent",
    "MomentumConverseVerdict",
    "NotCartanSymmetryError",
    "user_law",
    "build_bracket_law",
    "build_noether_law",
    "verify_law_pointwise",
    "check_momentum_converse",
]

PROVENANCES = ("bracket-law", "noether", "user")
FD_STEP = 1e-6


class NotCartanSymmetryError(ValueError):
    """The candidate field failed the Cartan check gating the construction."""

    def __init__(self, verdict: SymmetryVerdict):
        super().__init__(
            "field is not a Cartan symmetry: residual "
            f"{verdict.max_residual:.3e} at {verdict.witness}"
        )
        self.verdict = verdict


@dataclass(frozen=True)
class NumericLawComponent:
    """theta_A(Y) minus a quadrature-backed potential of L_Y theta_A."""

    chart: ChartSpace
    symbolic: ScalarField
    potential: PotentialEvaluator

    def evaluate(self, point) -> float:
        return self.symbolic.evaluate(point) - self.potential.evaluate(point)


@dataclass(frozen=True, eq=False)
class ConservationLaw:
    chart: ChartSpace
    components: tuple
    provenance: str
    ingredients: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if len(self.components) != self.chart.k:
            raise ValueError(
                f"expected {self.chart.k} components on this chart, got {len(self.components)}"
            )
        for comp in self.components:
            if comp.chart != self.chart:
                raise ChartMismatchError("law component lives on a different chart")

    @property
    def symbolic(self) -> bool:
        return all(isinstance(c, ScalarField) for c in self.components)

    def evaluate(self, point) -> np.ndarray:
        return np.array([c.evaluate(point) for c in self.components])


def user_law(chart: ChartSpace, components: Sequence) -> ConservationLaw:
    return ConservationLaw(chart, tuple(components), "user")


def build_bracket_law(
    omegas: Sequence[PForm], s_fields: Sequence[VectorField], Y: VectorField
) -> ConservationLaw:
    """Phi_A = omega_A(S_1, ..., S_{p-1}, Y), expanded symbolically."""
    if not omegas:
        raise ValueError("need at least one form")
    chart = Y.chart
    degrees = {w.degree for w in omegas}
    if len(degrees) != 1:
        raise ValueError(f"forms have mixed degrees {sorted(degrees)}")
    p = degrees.pop()
    if len(s_fields) != p - 1:
        raise ValueError(
            f"degree-{p} forms need {p - 1} companion fields, got {len(s_fields)}"
        )
    for w in omegas:
        if w.chart != chart:
            raise ChartMismatchError("form lives on a different chart")
    for S in s_fields:
        if S.chart != chart:
            raise ChartMismatchError("field lives on a different chart")
    components = tuple(
        ScalarField(chart, apply_form(w, list(s_fields) + [Y])) for w in omegas
    )
    return ConservationLaw(
        chart,
        components,
        "bracket-law",
        {"omega": tuple(omegas), "S": tuple(s_fields), "Y": Y},
    )


def build_noether_law(
    sys: FieldSystem,
    Y: VectorField,
    base_point=None,
    *,
    points=None,
    samples: int = 64,
    seed: int = 42,
    halfwidth: float = 1.0,
    tolerance: float | None = None,
    nodes: int = 64,
) -> ConservationLaw:
    """Momentum law of a Cartan symmetry: Phi_A = theta_A(Y) - f_A.

    Raises NotCartanSymmetryError when Y fails the gate, and the closedness
    error of the potential constructor when L_Y theta_A is not exact.
    """
    if Y.chart != sys.chart:
        raise ChartMismatchError("field lives on a different chart")
    tol = sys.default_tolerance if tolerance is None else tolerance
    if points is None:
        points = sample_points(sys.chart, count=samples, seed=seed, halfwidth=halfwidth)
    verdict = is_cartan_symmetry(sys, Y, points, tol)
    if not verdict.holds:
        raise NotCartanSymmetryError(verdict)
    base = (
        np.zeros(sys.chart.dimension)
        if base_point is None
        else np.asarray(base_point, dtype=float)
    )
    components = []
    potentials = []
    for theta in sys.theta:
        pairing = ScalarField(sys.chart, apply_form(theta, [Y]))
        derivative = lie_derivative_form(Y, theta)
        if max(derivative.max_component_at(p) for p in points) <= tol:
            potentials.append(ScalarField(sys.chart, Num(0.0)))
            components.append(pairing)
        else:
            f = potential_of_exact_one_form(
                derivative,
                base,
                samples=samples,
                seed=seed,
                halfwidth=halfwidth,
                tolerance=tol,
                nodes=nodes,
            )
            potentials.append(f)
            components.append(NumericLawComponent(sys.chart, pairing, f))
    return ConservationLaw(
        sys.chart,
        tuple(components),
        "noether",
        {"Y": Y, "theta": sys.theta, "f": tuple(potentials), "cartan": verdict},
    )


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


def _directional_evaluator(Xa: VectorField, comp, fd_step: float):
    if isinstance(comp, ScalarField):
        return compiled_evaluator(directional_derivative(Xa, comp.expr))

    def along_curve(point) -> float:
        q = np.asarray(point, dtype=float)
        v = Xa.evaluate(q)
        return (comp.evaluate(q + fd_step * v) - comp.evaluate(q - fd_step * v)) / (
            2.0 * fd_step
        )

    return along_curve


def verify_law_pointwise(
    X: KVectorField, law: ConservationLaw, points, fd_step: float = FD_STEP
) -> float:
    """Max over samples of |sum_A X_A(Phi_A)|.

    Quadrature-backed components are differentiated by a central difference
    along the integral curve of each X_A.
    """
    if X.chart != law.chart:
        raise ChartMismatchError("family lives on a different chart")
    if len(X) != len(law.components):
        raise ValueError("family and law have different lengths")
    terms = [
        _directional_evaluator(Xa, comp, fd_step)
        for Xa, comp in zip(X, law.components)
    ]
    worst = 0.0
    for p in points:
        worst = max(worst, abs(sum(term(p) for term in terms)))
    return worst


def _pairing_residual(sys, X_single, comp, omega, points, fd_step):
    if isinstance(comp, ScalarField):
        res = form_sub(
            interior_product(X_single, omega),
            exterior_derivative(scalar_form(comp)),
        )
        return max(res.max_component_at(p) for p in points)
    N = sys.chart.dimension
    worst = 0.0
    for p in points:
        q = np.asarray(p, dtype=float)
        lhs = two_form_matrix(omega, q).T @ X_single.evaluate(q)
        grad = np.empty(N)
        for i in range(N):
            step = np.zeros(N)
            step[i] = fd_step
            grad[i] = (comp.evaluate(q + step) - comp.evaluate(q - step)) / (2.0 * fd_step)
        worst = max(worst, float(np.max(np.abs(lhs - grad))))
    return worst


@dataclass(frozen=True)
class MomentumConverseVerdict:
    """Three-way diagnosis of whether a law is induced by a Cartan symmetry."""

    pairing_residual: float
    law_residual: float
    cartan: SymmetryVerdict
    tolerance: float

    @property
    def pairing_holds(self) -> bool:
        return self.pairing_residual <= self.tolerance

    @property
    def law_holds(self) -> bool:
        return self.law_residual <= self.tolerance

    @property
    def noether_induced(self) -> bool:
        return self.pairing_holds and self.law_holds and self.cartan.holds


def check_momentum_converse(
    sys: FieldSystem,
    X_single: VectorField,
    law: ConservationLaw,
    X: KVectorField,
    points,
    tolerance: float | None = None,
    fd_step: float = FD_STEP,
) -> MomentumConverseVerdict:
    """Test the biconditional linking a law to a generating Cartan symmetry.

    (a) i_{X_single} omega_A = d Phi_A for every A, (b) the law holds along
    X, (c) X_single is a Cartan symmetry of the system.
    """
    if X_single.chart != sys.chart or law.chart != sys.chart:
        raise ChartMismatchError("ingredients live on different charts")
    tol = sys.default_tolerance if tolerance is None else tolerance
    pairing = max(
        _pairing_residual(sys, X_single, comp, omega, points, fd_step)
        for comp, omega in zip(law.components, sys.omega)
    )
    law_residual = verify_law_pointwise(X, law, points, fd_step)
    cartan = is_cartan_symmetry(sys, X_single, points, tol)
    return MomentumConverseVerdict(
        pairing_residual=pairing,
        law_residual=law_residual,
        cartan=cartan,
        tolerance=tol,
    )
