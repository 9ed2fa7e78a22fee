"""Simulated NMR emulation of projective measurement on a dipolar spin ring."""
