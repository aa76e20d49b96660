import os

# Keep BLAS single-threaded: the matrices here are small, and the
# acceptance suite runs two training processes side by side.
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
