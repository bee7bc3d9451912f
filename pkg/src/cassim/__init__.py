"""Differentiable ray-traced simulation, design, and reconstruction toolkit
for coded-aperture snapshot spectral imagers."""

__version__ = "0.1.0"
