"""Deterministic synthetic hyperspectral test scenes at desk scale.

Three families cover the behaviors reconstruction cares about: piecewise-
constant color blocks (sharp spatial edges, flat spectra), slit patterns
(isolated columns, distinct spectra per region), and smooth random cubes
(broadband gradients in both space and wavelength).  All values lie in
[0, 1] and every generator is a pure function of its seed.
"""

from __future__ import annotations

import numpy as np

from .render import SpectralCube, band_wavelengths

__all__ = ["blocks_scene", "slits_scene", "smooth_scene", "scene_by_name",
           "SCENE_NAMES"]

SCENE_NAMES = ("blocks", "slits", "smooth")


def _wavelengths(bands: int) -> np.ndarray:
    return band_wavelengths(450.0, 650.0, bands)


def _random_spectrum(rng, bands: int) -> np.ndarray:
    """Smooth positive spectrum: a few random cosine modes, scaled to 1."""
    t = np.linspace(0.0, 1.0, bands)
    s = np.ones(bands)
    for k in range(1, 4):
        s = s + rng.uniform(-0.8, 0.8) * np.cos(np.pi * k * t + rng.uniform(0, np.pi))
    s -= s.min()
    if s.max() > 0:
        s /= s.max()
    return 0.1 + 0.9 * s


def blocks_scene(shape=(64, 64, 28), seed: int = 11,
                 pitch_um: float = 10.0) -> SpectralCube:
    """4x4 grid of constant-spectrum blocks separated by dark gutters."""
    h, w, bands = shape
    rng = np.random.Generator(np.random.Philox(key=seed))
    data = np.zeros(shape)
    bh, bw = h // 4, w // 4
    for bi in range(4):
        for bj in range(4):
            spec = _random_spectrum(rng, bands) * rng.uniform(0.3, 1.0)
            r0, c0 = bi * bh + 1, bj * bw + 1
            data[r0:bi * bh + bh - 1, c0:bj * bw + bw - 1, :] = spec
    return SpectralCube(data=data, wavelengths_nm=_wavelengths(bands),
                        pitch_um=pitch_um)


def slits_scene(shape=(64, 64, 28), seed: int = 12,
                pitch_um: float = 10.0) -> SpectralCube:
    """Bright vertical slits of varying width on a dark field."""
    h, w, bands = shape
    rng = np.random.Generator(np.random.Philox(key=seed))
    data = np.zeros(shape)
    col = 3
    while col < w - 4:
        width = int(rng.integers(1, 4))
        spec = _random_spectrum(rng, bands)
        data[:, col:col + width, :] = spec
        col += width + int(rng.integers(4, 9))
    return SpectralCube(data=data, wavelengths_nm=_wavelengths(bands),
                        pitch_um=pitch_um)


def smooth_scene(shape=(64, 64, 28), seed: int = 13,
                 pitch_um: float = 10.0) -> SpectralCube:
    """Random smooth spectra over irregular nearest-site spatial patches.

    Every patch carries one spectrally smooth random signature, so the
    cube mixes soft spectral content with natural spatial boundaries.
    """
    h, w, bands = shape
    rng = np.random.Generator(np.random.Philox(key=seed))
    sites = rng.random((12, 2)) * [h, w]
    rr, cc = np.mgrid[:h, :w]
    d2 = (rr[..., None] - sites[:, 0]) ** 2 + (cc[..., None] - sites[:, 1]) ** 2
    region = np.argmin(d2, axis=2)
    spectra = np.stack([_random_spectrum(rng, bands) * rng.uniform(0.3, 1.0)
                        for _ in range(len(sites))])
    data = spectra[region]
    return SpectralCube(data=data, wavelengths_nm=_wavelengths(bands),
                        pitch_um=pitch_um)


def scene_by_name(name: str, shape=(64, 64, 28), seed: int | None = None,
                  pitch_um: float = 10.0) -> SpectralCube:
    makers = {"blocks": (blocks_scene, 11), "slits": (slits_scene, 12),
              "smooth": (smooth_scene, 13)}
    if name not in makers:
        raise ValueError(f"unknown scene '{name}'; choose from {SCENE_NAMES}")
    fn, default_seed = makers[name]
    return fn(shape=shape, seed=default_seed if seed is None else seed,
              pitch_um=pitch_um)
