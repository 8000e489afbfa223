#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "lorentzfm/errors.hpp"

// Hyperboloid-model primitives. Points live in (n+1)-dimensional ambient
// space; component 0 is the time component, components 1..n the spatial
// part. A point x is on the unit hyperboloid iff <x,x>_L = -1 and x0 >= 1,
// which pins x0 = sqrt(1 + |spatial|^2). All functions are pure and take
// arbitrary Eigen vector expressions.

namespace lfm {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Off-manifold inputs are rejected once the constraint residual exceeds
// this; tighter drift (1e-9, 1e-12) is asserted by the test suites.
inline constexpr double kManifoldTol = 1e-6;

// Below this Lorentzian norm the exponential map returns its base point
// (removable sinh(t)/t singularity).
inline constexpr double kExpMapZeroTol = 1e-12;

// Lorentzian inner product <u,v>_L = -u0*v0 + sum_i u_i*v_i. Not positive
// definite: <x,x>_L = -1 on the hyperboloid.
template <typename DU, typename DV>
double lorentz_inner(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v) {
    if (u.size() != v.size()) {
        throw DimensionError("lorentz_inner: length mismatch (" + std::to_string(u.size()) +
                             " vs " + std::to_string(v.size()) + ")");
    }
    if (u.size() < 2) {
        throw DimensionError("lorentz_inner: ambient dimension must be >= 2");
    }
    const Eigen::Index n = u.size() - 1;
    return -u[0] * v[0] + u.tail(n).dot(v.tail(n));
}

// |<x,x>_L + 1|, the unit-hyperboloid constraint residual.
template <typename D>
double hyperboloid_residual(const Eigen::MatrixBase<D>& x) {
    return std::abs(lorentz_inner(x, x) + 1.0);
}

template <typename D>
void require_on_hyperboloid(const Eigen::MatrixBase<D>& x, double tol = kManifoldTol) {
    if (!(x[0] > 0.0) || !(hyperboloid_residual(x) <= tol)) {
        throw DomainError("point is off the hyperboloid (residual " +
                          std::to_string(hyperboloid_residual(x)) + ", x0 " +
                          std::to_string(x[0]) + ")");
    }
}

namespace detail {

// Row and column vector expressions are interchangeable throughout; this
// pins down a concrete column vector wherever one is materialized.
template <typename D>
Vector as_column(const Eigen::MatrixBase<D>& v) {
    return v.reshaped();
}

}  // namespace detail

// Completes spatial coordinates to a hyperboloid point:
// x0 = sqrt(1 + |spatial|^2).
template <typename D>
Vector lift(const Eigen::MatrixBase<D>& spatial) {
    if (!spatial.allFinite()) {
        throw NumericError("lift: non-finite spatial coordinates");
    }
    Vector x(spatial.size() + 1);
    x[0] = std::sqrt(1.0 + spatial.squaredNorm());
    x.tail(spatial.size()) = detail::as_column(spatial);
    return x;
}

// Recomputes the time component of an ambient vector from its spatial part.
// Used as drift repair after optimizer steps.
template <typename D>
Vector relift(const Eigen::MatrixBase<D>& ambient) {
    return lift(ambient.tail(ambient.size() - 1));
}

inline Vector hyperboloid_origin(Eigen::Index ambient_dim) {
    Vector x = Vector::Zero(ambient_dim);
    x[0] = 1.0;
    return x;
}

// Geodesic distance arccosh(-<u,v>_L). The argument is clamped to >= 1
// before arccosh; float rounding puts near-equal points slightly below 1.
// Coincident points short-circuit to zero: a manifold residual of one ulp
// already shifts arccosh near 1 by ~1e-8.
template <typename DU, typename DV>
double geodesic_distance(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v) {
    require_on_hyperboloid(u);
    require_on_hyperboloid(v);
    if (u.size() == v.size() && (detail::as_column(u) - detail::as_column(v)).isZero(0.0)) {
        return 0.0;
    }
    const double a = std::max(1.0, -lorentz_inner(u, v));
    return std::acosh(a);
}

// Squared Lorentz distance -2 - 2<u,v>_L. Unlike the geodesic distance it
// can violate the triangle inequality, which is what the triangle score
// measures.
template <typename DU, typename DV>
double lorentz_sqdist(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v) {
    require_on_hyperboloid(u);
    require_on_hyperboloid(v);
    return -2.0 - 2.0 * lorentz_inner(u, v);
}

namespace detail {

// Core of the triangle score without the manifold check; callers verify
// rows once per instance and then loop over pairs.
template <typename DU, typename DV>
double triangle_score_unchecked(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v) {
    return (1.0 - lorentz_inner(u, v) - u[0] - v[0]) / (u[0] * v[0]);
}

}  // namespace detail

// Normalized triangle-inequality defect of the triangle (origin, u, v) in
// Lorentz distance:
//
//   T(u,v) = (1 - <u,v>_L - u0 - v0) / (u0 * v0)
//
// Positive iff the Lorentz triangle inequality through the origin is
// violated. Bounded in [-0.5, 2] for all dimensions; the minimum is
// attained at u = v with u0 = 2.
template <typename DU, typename DV>
double triangle_score(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v) {
    require_on_hyperboloid(u);
    require_on_hyperboloid(v);
    return detail::triangle_score_unchecked(u, v);
}

// The two halves of the score's decomposition: T = interaction - linear.
template <typename DU, typename DV>
double triangle_interaction_term(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v) {
    return (1.0 - lorentz_inner(u, v)) / (u[0] * v[0]);
}

template <typename DU, typename DV>
double triangle_linear_term(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v) {
    return 1.0 / u[0] + 1.0 / v[0];
}

// Orthogonal projection of an ambient vector onto the tangent space at x:
// g + <x,g>_L * x. The result satisfies <x, result>_L = 0.
template <typename DX, typename DG>
Vector tangent_project(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DG>& g) {
    require_on_hyperboloid(x);
    const Vector xc = detail::as_column(x);
    const Vector gc = detail::as_column(g);
    return gc + lorentz_inner(xc, gc) * xc;
}

// Lorentzian norm sqrt(<v,v>_L) of a tangent vector. Tangent vectors are
// spacelike, so the squared norm is clamped at zero against rounding.
template <typename D>
double tangent_norm(const Eigen::MatrixBase<D>& v) {
    return std::sqrt(std::max(0.0, lorentz_inner(v, v)));
}

// Exponential map: exp_x(v) = cosh(|v|_L) x + sinh(|v|_L) v / |v|_L.
// Maps a tangent vector at x back onto the hyperboloid;
// geodesic_distance(x, exp_x(v)) = |v|_L.
template <typename DX, typename DV>
Vector exp_map(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DV>& v) {
    require_on_hyperboloid(x);
    if (!v.allFinite()) {
        throw NumericError("exp_map: non-finite tangent vector");
    }
    const Vector xc = detail::as_column(x);
    const Vector vc = detail::as_column(v);
    const double xv = lorentz_inner(xc, vc);
    const double scale = std::max(1.0, xc.cwiseAbs().maxCoeff() * vc.cwiseAbs().maxCoeff());
    if (std::abs(xv) > kManifoldTol * scale) {
        throw DomainError("exp_map: vector is not tangent at x (<x,v>_L = " +
                          std::to_string(xv) + ")");
    }
    const double norm = tangent_norm(vc);
    if (norm < kExpMapZeroTol) {
        return xc;
    }
    return std::cosh(norm) * xc + (std::sinh(norm) / norm) * vc;
}

}  // namespace lfm
