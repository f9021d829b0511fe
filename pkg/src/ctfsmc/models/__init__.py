"""Benchmark models: Ising, stereo matching, factorial HMM."""
