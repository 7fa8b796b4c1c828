import os

# Keep BLAS single-threaded so worker processes do not oversubscribe the
# two-core CI box and GEMM reductions stay identical everywhere.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
