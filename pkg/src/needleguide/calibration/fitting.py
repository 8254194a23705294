"""Sphere and 3D-circle least-squares fits.

These back the needle tip (pivot sweep traces a sphere) and needle axis
(shaft spin traces a circle) calibrations.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ..geometry import Vec3
from .errors import DegenerateInput
from .results import CircleFit3D, SphereFit
from .validation import RANK_RTOL, as_points, canonical_sign


class SphereFitter(BaseEstimator):
    """Least-squares sphere fit.

    Algebraic (linear) seed followed by one Gauss-Newton pass on the
    geometric residual |dist(p, center) - radius|; the pure algebraic fit
    biases the radius under noise.

    Attributes (after ``fit``): ``center_`` (3,), ``radius_``,
    ``rms_residual_``, ``n_points_``.
    """

    def fit(self, X, y=None):
        P = as_points(X, min_points=4, name="sphere points")

        # Linear system: ||p||^2 = 2 c.p + (r^2 - c.c). Coplanar or collinear
        # inputs make [2p | 1] rank-deficient, which is the degeneracy test.
        A = np.hstack([2.0 * P, np.ones((len(P), 1))])
        b = (P**2).sum(axis=1)
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[0] <= 0.0 or sv[-1] / sv[0] < RANK_RTOL:
            raise DegenerateInput(
                "sphere fit is rank-deficient (coplanar or collinear points); "
                "the sweep must pivot about two or more axes"
            )
        sol, *_ = np.linalg.lstsq(A, b, rcond=None)
        center = sol[:3]
        r_sq = sol[3] + center @ center
        if r_sq <= 0.0:
            raise DegenerateInput("sphere fit produced a non-positive radius")
        radius = float(np.sqrt(r_sq))

        # One Gauss-Newton step on the geometric residual
        d = P - center
        dist = np.linalg.norm(d, axis=1)
        if (dist < 1e-12).any():
            raise DegenerateInput("a point coincides with the fitted center")
        res = dist - radius
        J = np.empty((len(P), 4))
        J[:, :3] = -d / dist[:, None]
        J[:, 3] = -1.0
        delta, *_ = np.linalg.lstsq(J, -res, rcond=None)
        center = center + delta[:3]
        radius = float(radius + delta[3])
        if radius <= 0.0:
            raise DegenerateInput("sphere refinement collapsed the radius")

        final = np.linalg.norm(P - center, axis=1) - radius
        self.center_ = center
        self.radius_ = radius
        self.rms_residual_ = float(np.sqrt(np.mean(final**2)))
        self.n_points_ = len(P)
        return self

    def result_(self) -> SphereFit:
        return SphereFit(
            center=Vec3.from_array(self.center_),
            radius=self.radius_,
            rms_residual=self.rms_residual_,
            point_count=self.n_points_,
        )


class CircleFitter3D(BaseEstimator):
    """Circle fit in 3D: plane through the centroid, then an in-plane
    algebraic circle fit.

    The plane normal is the smallest principal direction of the centered
    cloud, sign-canonicalized (largest-magnitude component positive).

    Attributes (after ``fit``): ``center_`` (3,), ``normal_`` (3,),
    ``radius_``, ``rms_residual_``.
    """

    def fit(self, X, y=None):
        P = as_points(X, min_points=3, name="circle points")
        centroid = P.mean(axis=0)
        centered = P - centroid
        _, sv, vt = np.linalg.svd(centered, full_matrices=False)
        if sv[0] <= 0.0 or sv[1] / sv[0] < RANK_RTOL:
            raise DegenerateInput("circle fit needs non-collinear points")
        normal = canonical_sign(vt[2])
        e1, e2 = vt[0], vt[1]

        # 2D Kasa fit: |p|^2 = 2 c.p + k in plane coordinates
        uv = centered @ np.column_stack([e1, e2])
        A = np.hstack([2.0 * uv, np.ones((len(uv), 1))])
        b = (uv**2).sum(axis=1)
        sv2 = np.linalg.svd(A, compute_uv=False)
        if sv2[0] <= 0.0 or sv2[-1] / sv2[0] < RANK_RTOL:
            raise DegenerateInput("in-plane circle fit is rank-deficient")
        sol, *_ = np.linalg.lstsq(A, b, rcond=None)
        c2 = sol[:2]
        r_sq = sol[2] + c2 @ c2
        if r_sq <= 0.0:
            raise DegenerateInput("circle fit produced a non-positive radius")
        radius = float(np.sqrt(r_sq))
        center = centroid + c2[0] * e1 + c2[1] * e2

        # Residual: 3D distance to the circle (in-plane radial + out-of-plane)
        rel = P - center
        h = rel @ normal
        radial = np.linalg.norm(rel - np.outer(h, normal), axis=1) - radius
        self.center_ = center
        self.normal_ = normal
        self.radius_ = radius
        self.rms_residual_ = float(np.sqrt(np.mean(radial**2 + h**2)))
        return self

    def result_(self) -> CircleFit3D:
        return CircleFit3D(
            center=Vec3.from_array(self.center_),
            normal=Vec3.from_array(self.normal_),
            radius=self.radius_,
            rms_residual=self.rms_residual_,
        )


def fit_sphere(points) -> SphereFit:
    """Fit a sphere to >= 4 non-coplanar points."""
    return SphereFitter().fit(points).result_()


def fit_circle_3d(points) -> CircleFit3D:
    """Fit a circle to >= 3 non-collinear points in 3D."""
    return CircleFitter3D().fit(points).result_()
