"""Second-order polynomial gaze mapping.

Maps the pupil-center image feature (u, v) to gaze angles through two
quadratic polynomials over the basis [1, u, v, uv, u^2, v^2], one per output
axis.  Features are centered on the calibration mean and scaled to unit RMS
before fitting, which keeps the normal equations well conditioned at pixel
scale; predictions are invariant to that normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RankDeficiencyError(ValueError):
    """Calibration features do not span the quadratic basis."""


BASIS_NAMES = ("1", "u", "v", "uv", "u2", "v2")


def _basis(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.stack([np.ones_like(u), u, v, u * v, u * u, v * v], axis=1)


@dataclass(frozen=True)
class PolyMap:
    coeff_h: np.ndarray  # 6 coefficients on the normalized basis
    coeff_v: np.ndarray
    normalization: tuple[float, float, float, float]  # u0, v0, su, sv

    def raw_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients re-expressed on the raw pixel basis [1,u,v,uv,u2,v2]."""
        u0, v0, su, sv = self.normalization
        out = []
        for c in (self.coeff_h, self.coeff_v):
            c0, cu, cv, cuv, cuu, cvv = c
            raw = np.zeros(6)
            raw[0] = (
                c0
                - cu * u0 / su
                - cv * v0 / sv
                + cuv * u0 * v0 / (su * sv)
                + cuu * u0 * u0 / (su * su)
                + cvv * v0 * v0 / (sv * sv)
            )
            raw[1] = cu / su - cuv * v0 / (su * sv) - 2.0 * cuu * u0 / (su * su)
            raw[2] = cv / sv - cuv * u0 / (su * sv) - 2.0 * cvv * v0 / (sv * sv)
            raw[3] = cuv / (su * sv)
            raw[4] = cuu / (su * su)
            raw[5] = cvv / (sv * sv)
            out.append(raw)
        return out[0], out[1]


def fit_poly(samples) -> PolyMap:
    """Least-squares fit from ((u, v), (theta_h, theta_v)) correspondences.

    Solves the normal equations on the normalized basis; an independent
    orthogonal-decomposition solve cross-checks this in the test suite.
    """
    feats = np.array([s[0] for s in samples], dtype=float)
    targets = np.array([s[1] for s in samples], dtype=float)
    if feats.shape[0] < 6:
        raise ValueError("polynomial calibration needs at least 6 samples")

    u0, v0 = feats.mean(axis=0)
    du = feats[:, 0] - u0
    dv = feats[:, 1] - v0
    su = float(np.sqrt(np.mean(du * du)))
    sv = float(np.sqrt(np.mean(dv * dv)))
    if su == 0.0 or sv == 0.0:
        raise RankDeficiencyError("calibration features are degenerate (zero spread)")
    a = _basis(du / su, dv / sv)

    if np.linalg.matrix_rank(a, tol=1e-10 * feats.shape[0]) < 6:
        raise RankDeficiencyError("calibration features are rank deficient in the quadratic basis")

    ata = a.T @ a
    coeffs = np.linalg.solve(ata, a.T @ targets)
    return PolyMap(
        coeff_h=coeffs[:, 0].copy(),
        coeff_v=coeffs[:, 1].copy(),
        normalization=(float(u0), float(v0), su, sv),
    )


def predict_poly(m: PolyMap, feature) -> tuple[float, float]:
    """Gaze angles (degrees) for a pupil-center feature (u, v)."""
    u0, v0, su, sv = m.normalization
    u = (feature[0] - u0) / su
    v = (feature[1] - v0) / sv
    b = np.array([1.0, u, v, u * v, u * u, v * v])
    return float(b @ m.coeff_h), float(b @ m.coeff_v)
