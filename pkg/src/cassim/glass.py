"""Glass dispersion models and the shipped glass catalog.

Two models:
  - :class:`SellmeierGlass`: the three-term Sellmeier law used for catalog
    glasses, ``n^2 = 1 + sum_i B_i lam^2 / (lam^2 - C_i)`` with ``lam`` in um.
  - :class:`RelaxedGlass`: a glass described only by its d-line index ``n_d``
    and Abbe number ``V_d``, mapped to the two-term inverse-square law
    ``n = a + b / lam^2`` anchored at the d/F/C Fraunhofer lines.  This is the
    differentiable relaxation used during prism design: ``n_d`` and ``V_d``
    may be dual numbers.

The catalog ships as ``data/glasses.csv`` with one record per glass:
``name, nd, vd, b1, b2, b3, c1, c2, c3`` (C_i in um^2).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from . import dual as dm

__all__ = [
    "LAMBDA_D_NM", "LAMBDA_F_NM", "LAMBDA_C_NM", "VACUUM",
    "SellmeierGlass", "RelaxedGlass", "refractive_index",
    "load_catalog", "glass_by_name", "catalog_ranges", "nearest_glass",
]

# Fraunhofer lines (nm): helium d, hydrogen F and C.
LAMBDA_D_NM = 587.5618
LAMBDA_F_NM = 486.1327
LAMBDA_C_NM = 656.2725

# 1/lam_F^2 - 1/lam_C^2 in nm^-2; the relaxed model's fixed denominator.
_INV_SQ_SPAN = 1.0 / LAMBDA_F_NM**2 - 1.0 / LAMBDA_C_NM**2

#: Marker for the absence of glass (index exactly 1).
VACUUM = None


@dataclass(frozen=True)
class SellmeierGlass:
    """Catalog glass: three-term Sellmeier coefficients plus (n_d, V_d)."""

    name: str
    nd: float
    vd: float
    b: tuple[float, float, float]
    c: tuple[float, float, float]

    def index(self, wavelength_nm):
        lam2 = (np.asarray(wavelength_nm, dtype=float) / 1000.0) ** 2  # um^2
        n2 = 1.0 + sum(bi * lam2 / (lam2 - ci) for bi, ci in zip(self.b, self.c))
        return np.sqrt(n2)


class RelaxedGlass:
    """(n_d, V_d)-parameterized glass, n = a + b / lam^2 (lam in nm).

    ``b`` follows from V_d at the F/C lines, ``a`` anchors n_d at the d line,
    so the model reproduces both defining quantities exactly.  Accepts dual
    numbers for differentiable design.
    """

    __slots__ = ("name", "nd", "vd", "a", "b")

    def __init__(self, nd, vd, name: str = "relaxed"):
        self.name = name
        self.nd = nd
        self.vd = vd
        self.b = ((nd - 1.0) / vd) / _INV_SQ_SPAN  # nm^2
        self.a = nd - self.b / LAMBDA_D_NM**2

    def index(self, wavelength_nm):
        lam = wavelength_nm
        if not isinstance(lam, dm.Dual):
            lam = np.asarray(lam, dtype=float)
        return self.a + self.b / (lam * lam)

    def __repr__(self):
        return (f"RelaxedGlass(nd={dm.value_of(self.nd)!r}, "
                f"vd={dm.value_of(self.vd)!r})")


def refractive_index(glass, wavelength_nm):
    """n(lambda) for any glass model; vacuum (None) has index 1."""
    wl = dm.value_of(wavelength_nm)
    if np.any(wl <= 0):
        raise ValueError("wavelength must be positive")
    if glass is VACUUM:
        return np.ones_like(np.asarray(wl, dtype=float))
    return glass.index(wavelength_nm)


@lru_cache(maxsize=None)
def _catalog_cached(source: str | None) -> tuple[SellmeierGlass, ...]:
    if source is None:
        text = (resources.files("cassim") / "data" / "glasses.csv").read_text()
    else:
        with open(source, "r") as fh:
            text = fh.read()
    glasses = []
    for row in csv.reader(filter(lambda line: line.strip() and not line.startswith("#"),
                                 text.splitlines())):
        name, nd, vd, b1, b2, b3, c1, c2, c3 = [field.strip() for field in row]
        nd, vd = float(nd), float(vd)
        if nd <= 1.0:
            raise ValueError(f"glass {name!r}: nd must be > 1, got {nd}")
        if vd <= 0.0:
            raise ValueError(f"glass {name!r}: vd must be > 0, got {vd}")
        glasses.append(SellmeierGlass(
            name=name, nd=nd, vd=vd,
            b=(float(b1), float(b2), float(b3)),
            c=(float(c1), float(c2), float(c3)),
        ))
    return tuple(glasses)


def load_catalog(path: str | None = None) -> tuple[SellmeierGlass, ...]:
    """The shipped catalog, or one parsed from ``path``."""
    return _catalog_cached(path)


def glass_by_name(name: str, catalog=None) -> SellmeierGlass:
    for g in catalog or load_catalog():
        if g.name == name:
            return g
    raise KeyError(f"unknown glass {name!r}")


def catalog_ranges(catalog=None) -> tuple[float, float]:
    """(nd span, vd span) across the catalog, used to normalize distances."""
    (nd_lo, nd_hi), (vd_lo, vd_hi) = catalog_hull(catalog)
    return nd_hi - nd_lo, vd_hi - vd_lo


def catalog_hull(catalog=None) -> tuple[tuple[float, float], tuple[float, float]]:
    """((nd_min, nd_max), (vd_min, vd_max)) across the catalog."""
    catalog = catalog or load_catalog()
    nds = [g.nd for g in catalog]
    vds = [g.vd for g in catalog]
    return (min(nds), max(nds)), (min(vds), max(vds))


def nearest_glass(nd, vd, catalog=None) -> SellmeierGlass:
    """Catalog entry minimizing the range-normalized squared (nd, vd) distance."""
    catalog = catalog or load_catalog()
    if not catalog:
        raise ValueError("empty glass catalog")
    dn, dv = catalog_ranges(catalog)
    nd, vd = float(dm.value_of(nd)), float(dm.value_of(vd))
    return min(catalog,
               key=lambda g: ((g.nd - nd) / dn) ** 2 + ((g.vd - vd) / dv) ** 2)
