"""Rational inner functions on unit square-matrix polyballs.

Layers, bottom up:

* :mod:`polyball.domain` -- polyball geometry, points, commuting tuples,
  Kronecker inflation, seeded samplers.
* :mod:`polyball.mpoly` -- sparse multivariate polynomials: determinants,
  cofactors, the reverse operation, exact division, self-reversiveness.
* :mod:`polyball.realization` -- unitary colligations: transfer functions,
  Choi factorization, Gram feasibility for the Agler decomposition, the
  lurking-isometry completion, and the synthesis pipeline.
* :mod:`polyball.detrep` -- contractive determinantal pencils
  ``det(I - K Z_n)`` and eventual-Agler-denominator certificates.
* :mod:`polyball.analysis` -- innerness checks, Rudin-type factorization,
  stability scans, Agler-norm lower bounds, and the lifting pipeline.
* :mod:`polyball.cli` -- the ``polyball`` command with JSON reports.
"""

from .domain import (
    BlockStructure,
    CommutingTuple,
    MatrixPoint,
    PointClass,
    PolyballError,
    StructureMismatchError,
    TupleFamily,
    inflate,
    sample_commuting_tuple,
    sample_interior,
    sample_shilov,
    spectral_norm,
)
from .mpoly import (
    MatPoly,
    MPoly,
    NotDivisibleError,
    cofactor_poly,
    det_poly,
    exact_divide,
    factor_det_powers,
    is_almost_self_reversive,
    natural_degrees,
    reverse,
)
from .realization import (
    BoundaryReport,
    Colligation,
    ColligationReport,
    GramCertificate,
    GramInfeasibleError,
    SynthesisResult,
    boundary_gram_check,
    choi_factor,
    eval_transfer,
    eval_transfer_tuple,
    gram_feasibility,
    haar_colligation,
    lurking_isometry,
    synthesize,
    verify_colligation,
)
from .detrep import (
    CertificateReport,
    DetRepCertificate,
    DetRepNotFoundError,
    det_pencil,
    extract_v,
    pq_identity_check,
    search_detrep,
    verify_certificate,
)
from .analysis import (
    AglerBoundReport,
    InnerReport,
    LiftResult,
    NotInnerFormError,
    RudinFactorization,
    StabilityReport,
    agler_lower_bound,
    check_inner,
    eventual_sa_lift,
    rudin_factorize,
    stability_scan,
)

__version__ = "0.1.0"
