"""Transverse Mercator (UTM) projection on the WGS-84 ellipsoid.

Uses the Krüger series in the third flattening ``n``, carried to sixth order
(Karney 2011), which is accurate to well under a millimetre inside a UTM zone.
"""

from __future__ import annotations

import numpy as np

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
UTM_K0 = 0.9996
FALSE_EASTING = 500000.0
FALSE_NORTHING_SOUTH = 10000000.0

_N = WGS84_F / (2.0 - WGS84_F)
_E = np.sqrt(WGS84_F * (2.0 - WGS84_F))
_A_RECT = WGS84_A / (1.0 + _N) * (1.0 + _N**2 / 4.0 + _N**4 / 64.0 + _N**6 / 256.0)


def _series(n: float) -> tuple[np.ndarray, np.ndarray]:
    n2, n3, n4, n5, n6 = n**2, n**3, n**4, n**5, n**6
    alpha = np.array([
        n / 2 - 2 * n2 / 3 + 5 * n3 / 16 + 41 * n4 / 180 - 127 * n5 / 288 + 7891 * n6 / 37800,
        13 * n2 / 48 - 3 * n3 / 5 + 557 * n4 / 1440 + 281 * n5 / 630 - 1983433 * n6 / 1935360,
        61 * n3 / 240 - 103 * n4 / 140 + 15061 * n5 / 26880 + 167603 * n6 / 181440,
        49561 * n4 / 161280 - 179 * n5 / 168 + 6601661 * n6 / 7257600,
        34729 * n5 / 80640 - 3418889 * n6 / 1995840,
        212378941 * n6 / 319334400,
    ])
    beta = np.array([
        n / 2 - 2 * n2 / 3 + 37 * n3 / 96 - n4 / 360 - 81 * n5 / 512 + 96199 * n6 / 604800,
        n2 / 48 + n3 / 15 - 437 * n4 / 1440 + 46 * n5 / 105 - 1118711 * n6 / 3870720,
        17 * n3 / 480 - 37 * n4 / 840 - 209 * n5 / 4480 + 5569 * n6 / 90720,
        4397 * n4 / 161280 - 11 * n5 / 504 - 830251 * n6 / 7257600,
        4583 * n5 / 161280 - 108847 * n6 / 3991680,
        20648693 * n6 / 638668800,
    ])
    return alpha, beta


_ALPHA, _BETA = _series(_N)
_J2 = 2.0 * np.arange(1, 7)


class ProjectionError(ValueError):
    pass


def central_meridian(zone: int) -> float:
    return -183.0 + 6.0 * zone


def _check_zone(zone: int) -> None:
    if not 1 <= int(zone) <= 60:
        raise ProjectionError(f"UTM zone must be in [1, 60], got {zone}")


def project_to_utm(longitude, latitude, zone: int = 32, north: bool = True):
    """Forward projection of degrees to UTM metres.

    Accepts scalars or arrays; returns ``(easting, northing)`` of the same
    shape. Latitudes outside (-84, 84) are rejected.
    """
    _check_zone(zone)
    lon = np.asarray(longitude, dtype=float)
    lat = np.asarray(latitude, dtype=float)
    if np.any(~np.isfinite(lat)) or np.any(np.abs(lat) >= 84.0):
        raise ProjectionError("latitude must lie strictly inside (-84, 84)")
    if np.any(~np.isfinite(lon)) or np.any(np.abs(lon) > 180.0):
        raise ProjectionError("longitude must lie in [-180, 180]")

    phi = np.radians(lat)
    dlam = np.radians((lon - central_meridian(zone) + 180.0) % 360.0 - 180.0)
    sphi = np.sin(phi)
    tau = np.tan(phi)
    sigma = np.sinh(_E * np.arctanh(_E * sphi))
    taup = tau * np.sqrt(1.0 + sigma**2) - sigma * np.sqrt(1.0 + tau**2)
    xi_p = np.arctan2(taup, np.cos(dlam))
    eta_p = np.arcsinh(np.sin(dlam) / np.sqrt(taup**2 + np.cos(dlam) ** 2))

    xi = xi_p.copy()
    eta = eta_p.copy()
    for j2, a in zip(_J2, _ALPHA):
        xi = xi + a * np.sin(j2 * xi_p) * np.cosh(j2 * eta_p)
        eta = eta + a * np.cos(j2 * xi_p) * np.sinh(j2 * eta_p)

    easting = FALSE_EASTING + UTM_K0 * _A_RECT * eta
    northing = UTM_K0 * _A_RECT * xi
    if not north:
        northing = northing + FALSE_NORTHING_SOUTH
    if easting.ndim == 0:
        return float(easting), float(northing)
    return easting, northing


def _tau_from_taup(taup: np.ndarray) -> np.ndarray:
    e2m = 1.0 - _E**2
    tau = taup / e2m
    for _ in range(8):
        tau1 = np.sqrt(1.0 + tau**2)
        sig = np.sinh(_E * np.arctanh(_E * tau / tau1))
        taupa = np.sqrt(1.0 + sig**2) * tau - sig * tau1
        dtau = (taup - taupa) * (1.0 + e2m * tau**2) / (e2m * tau1 * np.sqrt(1.0 + taupa**2))
        tau = tau + dtau
        if np.all(np.abs(dtau) <= 1e-15 * np.maximum(1.0, np.abs(tau))):
            break
    return tau


def utm_to_lonlat(easting, northing, zone: int = 32, north: bool = True):
    """Inverse of :func:`project_to_utm`."""
    _check_zone(zone)
    x = np.asarray(easting, dtype=float)
    y = np.asarray(northing, dtype=float)
    if not north:
        y = y - FALSE_NORTHING_SOUTH
    xi = y / (UTM_K0 * _A_RECT)
    eta = (x - FALSE_EASTING) / (UTM_K0 * _A_RECT)

    xi_p = xi.copy()
    eta_p = eta.copy()
    for j2, b in zip(_J2, _BETA):
        xi_p = xi_p - b * np.sin(j2 * xi) * np.cosh(j2 * eta)
        eta_p = eta_p - b * np.cos(j2 * xi) * np.sinh(j2 * eta)

    taup = np.sin(xi_p) / np.sqrt(np.sinh(eta_p) ** 2 + np.cos(xi_p) ** 2)
    lam = np.arctan2(np.sinh(eta_p), np.cos(xi_p))
    lat = np.degrees(np.arctan(_tau_from_taup(taup)))
    lon = np.degrees(lam) + central_meridian(zone)
    if lon.ndim == 0:
        return float(lon), float(lat)
    return lon, lat
