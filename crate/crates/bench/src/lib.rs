//! Criterion benches for the hot kernels live under `benches/`.
