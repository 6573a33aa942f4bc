"""Numerical laboratory for recovering a hidden region of a Riemannian circle
from the fractional source-to-solution map on an observed arc."""

from .errors import FraclabError
from .forward import (SourceFunction, SourceToSolutionMap, dtn_direct, dtn_matrix, fractional_laplacian_apply,
                      iterated_laplacian_local, solve_fractional, source_to_solution)
from .model import (ObservationRegion, SpectralModel, arc_region, build_circle_model, build_two_arc_model,
                    make_observation_region, model_from_config)
from .probes import (MollifierSpec, MomentSchedule, MomentTable, measured_moment_table, mollifier_source,
                     oracle_moment_table, zeta_measured, zeta_oracle)
from .recovery import (RecoveredSpectrum, assemble_dtn_from_spectral_data, oracle_spectrum, pencil_recover,
                       recover_from_table, recover_multiplicities, recover_volume_weyl)

__version__ = "0.1.0"
