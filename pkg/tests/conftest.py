import os

# single-threaded BLAS: deterministic reductions and faster small-matrix math
for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
