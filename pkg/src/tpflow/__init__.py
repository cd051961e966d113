"""Tangent-point energies of closed curves and their constrained Sobolev gradient flow."""
