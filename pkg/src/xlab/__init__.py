"""Desk-scale lab for bilingual masked-LM pretraining ablations and cross-lingual probes."""

import os

# Desk-scale tensors are small enough that BLAS threading only adds sync
# overhead, and a single thread keeps reduction order fixed run to run.
# Respected only if the user has not chosen a thread count already; must
# happen before numpy loads its BLAS.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
