"""Chern--Simons--Higgs vortex solver application package."""
