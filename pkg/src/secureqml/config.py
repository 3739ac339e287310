"""Global numerical tolerances shared by the library and its tests."""

#: absolute tolerance on state amplitudes and norms
STATE_ATOL = 1e-9
#: entrywise tolerance on unitary comparisons
MATRIX_ATOL = 1e-8
#: a matrix is rejected as non-unitary above this residual
UNITARY_REJECT_ATOL = 1e-6
#: snap tolerance on canonical two-qubit interaction coordinates
CANONICAL_ATOL = 1e-10
#: largest register that ``unitary_of`` will build densely
UNITARY_QUBIT_CAP = 10
#: PSNR reported for identical signals
PSNR_CAP_DB = 100.0
