from .eigen import eigenvalues_sym, householder_tridiagonal, tridiagonal_ql
from .identities import (IbpCheck, check_resolvent_identity, check_trace_difference, check_ward,
                         gaussian_ibp_test, quadratic_form_concentration_test, trace_difference_sides)
from .matrices import (ResolventMatrix, Spectrum, SymmetricMatrix, resolvent, sample_ensemble,
                       sample_goe, sample_gue)
from .rng import SeededRng, as_generator
