"""Grid, local solvers, decomposition, low-rank kernels and the Schwarz drivers."""
