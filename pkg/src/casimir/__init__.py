"""Smooth inference oracles and accelerated incremental solvers for structured prediction."""
