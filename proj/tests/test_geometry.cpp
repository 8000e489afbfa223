#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "lorentzfm/geometry.hpp"

using lfm::Vector;

namespace {

Vector vec3(double a, double b, double c) {
    Vector v(3);
    v << a, b, c;
    return v;
}

Vector random_point(std::mt19937_64& rng, int spatial_dim, double lo = -3.0, double hi = 3.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Vector s(spatial_dim);
    for (int i = 0; i < spatial_dim; ++i) s[i] = dist(rng);
    return lfm::lift(s);
}

Vector random_tangent(std::mt19937_64& rng, const Vector& x, double target_norm) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Vector g(x.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = dist(rng);
    Vector v = lfm::tangent_project(x, g);
    const double n = lfm::tangent_norm(v);
    if (n > 1e-12) v *= target_norm / n;
    return v;
}

// Independent route for the triangle score: assembled from the three
// squared Lorentz distances of the (origin, u, v) triangle, normalized by
// 2 * <0,u>_L * <0,v>_L. The implementation uses the simplified algebraic
// form; agreement cross-checks the simplification.
double triangle_score_distance_route(const Vector& u, const Vector& v) {
    const Vector o = lfm::hyperboloid_origin(u.size());
    const double num =
        lfm::lorentz_sqdist(u, v) - lfm::lorentz_sqdist(o, u) - lfm::lorentz_sqdist(o, v);
    const double den = 2.0 * lfm::lorentz_inner(o, u) * lfm::lorentz_inner(o, v);
    return num / den;
}

}  // namespace

TEST_CASE("lorentz_inner on fixed vectors") {
    const Vector origin = lfm::hyperboloid_origin(3);
    CHECK(lfm::lorentz_inner(origin, origin) == doctest::Approx(-1.0).epsilon(1e-15));

    // <0,x>_L = -x0
    const Vector x = vec3(2.0, std::sqrt(3.0), 0.0);
    CHECK(lfm::lorentz_inner(origin, x) == doctest::Approx(-2.0).epsilon(1e-15));

    const Vector u = vec3(std::sqrt(2.0), 1.0, 0.0);
    const Vector v = vec3(std::sqrt(2.0), 0.0, 1.0);
    CHECK(lfm::lorentz_inner(u, v) == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("lorentz_inner is symmetric and bilinear") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-5.0, 5.0);
    for (int trial = 0; trial < 100; ++trial) {
        Vector a(4), b(4), c(4);
        for (int i = 0; i < 4; ++i) {
            a[i] = dist(rng);
            b[i] = dist(rng);
            c[i] = dist(rng);
        }
        const double s = dist(rng);
        CHECK(lfm::lorentz_inner(a, b) == doctest::Approx(lfm::lorentz_inner(b, a)).epsilon(1e-13));
        CHECK(lfm::lorentz_inner((a + s * b).eval(), c) ==
              doctest::Approx(lfm::lorentz_inner(a, c) + s * lfm::lorentz_inner(b, c))
                  .epsilon(1e-10));
    }
}

TEST_CASE("lorentz_inner rejects mismatched lengths") {
    Vector a(3), b(4);
    a.setZero();
    b.setZero();
    CHECK_THROWS_AS((void)lfm::lorentz_inner(a, b), lfm::DimensionError);
    Vector c(1), d(1);
    c.setZero();
    d.setZero();
    CHECK_THROWS_AS((void)lfm::lorentz_inner(c, d), lfm::DimensionError);
}

TEST_CASE("lift completes the time component") {
    Vector z(2);
    z << 0.0, 0.0;
    const Vector o = lfm::lift(z);
    CHECK(o[0] == 1.0);
    CHECK(o[1] == 0.0);
    CHECK(o[2] == 0.0);

    Vector s(2);
    s << std::sqrt(3.0), 0.0;
    CHECK(lfm::lift(s)[0] == doctest::Approx(2.0).epsilon(1e-15));

    Vector ones(3);
    ones << 1.0, 1.0, 1.0;
    CHECK(lfm::lift(ones)[0] == 2.0);  // sqrt(4) is exact

    Vector bad(2);
    bad << 1.0, std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS((void)lfm::lift(bad), lfm::NumericError);
}

TEST_CASE("lift and exp_map outputs stay on the manifold") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const Vector x = random_point(rng, 5, -10.0, 10.0);
        CHECK(lfm::hyperboloid_residual(x) < 1e-9);
        const Vector v = random_tangent(rng, x, 0.5);
        const Vector y = lfm::exp_map(x, v);
        CHECK(lfm::hyperboloid_residual(y) < 1e-9);
    }
}

TEST_CASE("geodesic_distance fixed values") {
    const Vector origin = lfm::hyperboloid_origin(3);
    const Vector x = vec3(2.0, std::sqrt(3.0), 0.0);
    CHECK(lfm::geodesic_distance(origin, x) ==
          doctest::Approx(1.3169578969248166).epsilon(1e-12));  // arccosh(2)
    CHECK(lfm::geodesic_distance(x, x) == 0.0);
    CHECK(lfm::geodesic_distance(origin, origin) == 0.0);
}

TEST_CASE("geodesic_distance is symmetric and rejects off-manifold input") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const Vector u = random_point(rng, 4);
        const Vector v = random_point(rng, 4);
        CHECK(lfm::geodesic_distance(u, v) ==
              doctest::Approx(lfm::geodesic_distance(v, u)).epsilon(1e-12));
    }
    const Vector bad = vec3(1.0, 1.0, 1.0);  // <x,x>_L = 1, nowhere near the manifold
    const Vector ok = lfm::hyperboloid_origin(3);
    CHECK_THROWS_AS((void)lfm::geodesic_distance(bad, ok), lfm::DomainError);
}

TEST_CASE("lorentz_sqdist fixed values") {
    std::mt19937_64 rng(17);
    const Vector u = random_point(rng, 3);
    CHECK(lfm::lorentz_sqdist(u, u) == doctest::Approx(0.0).epsilon(1e-12));

    const Vector origin = lfm::hyperboloid_origin(3);
    const Vector p = vec3(2.0, std::sqrt(3.0), 0.0);
    CHECK(lfm::lorentz_sqdist(origin, p) == doctest::Approx(2.0).epsilon(1e-12));

    const Vector q = vec3(2.0, -std::sqrt(3.0), 0.0);
    CHECK(lfm::lorentz_sqdist(p, q) == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("triangle_score fixed values") {
    const Vector origin = lfm::hyperboloid_origin(3);
    CHECK(lfm::triangle_score(origin, origin) == 0.0);

    // u0 = 2 exactly via spatial (1,1,1); the attained minimum.
    Vector ones(3);
    ones << 1.0, 1.0, 1.0;
    const Vector u = lfm::lift(ones);
    CHECK(lfm::triangle_score(u, u) == -0.5);

    const Vector p = vec3(2.0, std::sqrt(3.0), 0.0);
    const Vector q = vec3(2.0, -std::sqrt(3.0), 0.0);
    CHECK(lfm::triangle_score(p, q) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("triangle_score minimum is attained only at u0 = 2") {
    // T(u,u) = (2 - 2*u0) / u0^2, minimized at u0 = 2.
    for (double u0 : {1.0, 1.5, 3.0, 10.0}) {
        Vector s(2);
        s << std::sqrt(u0 * u0 - 1.0), 0.0;
        const Vector u = lfm::lift(s);
        CHECK(lfm::triangle_score(u, u) > -0.5);
    }
}

TEST_CASE("triangle_score antipodal asymptote 2 - 2/u0") {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> dist(-8.0, 8.0);
    double prev = -1.0;
    for (double scale : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
        Vector s(3);
        for (int i = 0; i < 3; ++i) s[i] = dist(rng);
        s *= scale / s.norm();
        const Vector u = lfm::lift(s);
        const Vector v = lfm::lift((-s).eval());
        const double t = lfm::triangle_score(u, v);
        CHECK(t == doctest::Approx(2.0 - 2.0 / u[0]).epsilon(1e-10));
        CHECK(t < 2.0);
        CHECK(t > prev);  // monotone increasing in u0
        prev = t;
    }
}

TEST_CASE("triangle_score bounded in [-0.5, 2] on sampled points") {
    std::mt19937_64 rng(23);
    for (int spatial_dim : {2, 9}) {
        for (int trial = 0; trial < 20000; ++trial) {
            const Vector u = random_point(rng, spatial_dim, -10.0, 10.0);
            const Vector v = random_point(rng, spatial_dim, -10.0, 10.0);
            const double t = lfm::triangle_score(u, v);
            CHECK(t >= -0.5);
            CHECK(t <= 2.0);
        }
    }
}

TEST_CASE("triangle_score equals the distance route and decomposes") {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 500; ++trial) {
        const Vector u = random_point(rng, 4, -6.0, 6.0);
        const Vector v = random_point(rng, 4, -6.0, 6.0);
        const double t = lfm::triangle_score(u, v);
        CHECK(t == doctest::Approx(triangle_score_distance_route(u, v)).epsilon(1e-10));
        CHECK(t == doctest::Approx(lfm::triangle_interaction_term(u, v) -
                                   lfm::triangle_linear_term(u, v))
                       .epsilon(1e-12));
        CHECK(t == doctest::Approx(lfm::triangle_score(v, u)).epsilon(1e-13));
    }
}

TEST_CASE("triangle_score sign matches the raw triangle-inequality defect") {
    std::mt19937_64 rng(31);
    const Vector o = lfm::hyperboloid_origin(4);
    for (int trial = 0; trial < 500; ++trial) {
        const Vector u = random_point(rng, 3, -4.0, 4.0);
        const Vector v = random_point(rng, 3, -4.0, 4.0);
        const double defect =
            lfm::lorentz_sqdist(u, v) - lfm::lorentz_sqdist(u, o) - lfm::lorentz_sqdist(o, v);
        const double t = lfm::triangle_score(u, v);
        if (defect > 1e-9) CHECK(t > 0.0);
        if (defect < -1e-9) CHECK(t < 0.0);
    }
}

TEST_CASE("tangent_project fixed values and orthogonality") {
    std::mt19937_64 rng(37);
    const Vector x = random_point(rng, 2);
    const Vector zero = lfm::tangent_project(x, x);
    CHECK(zero.cwiseAbs().maxCoeff() < 1e-12);

    const Vector origin = lfm::hyperboloid_origin(3);
    const Vector g = vec3(3.0, 1.0, 2.0);
    const Vector t = lfm::tangent_project(origin, g);
    CHECK(t[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(t[1] == 1.0);
    CHECK(t[2] == 2.0);

    std::uniform_real_distribution<double> dist(-4.0, 4.0);
    for (int trial = 0; trial < 10000; ++trial) {
        const Vector p = random_point(rng, 5);
        Vector h(6);
        for (int i = 0; i < 6; ++i) h[i] = dist(rng);
        const Vector proj = lfm::tangent_project(p, h);
        const double scale = std::max(1.0, p.cwiseAbs().maxCoeff() * h.cwiseAbs().maxCoeff());
        CHECK(std::abs(lfm::lorentz_inner(p, proj)) < 1e-9 * scale);
    }
}

TEST_CASE("exp_map fixed values") {
    std::mt19937_64 rng(41);
    const Vector x = random_point(rng, 4);
    const Vector zero = Vector::Zero(5);
    CHECK((lfm::exp_map(x, zero) - x).cwiseAbs().maxCoeff() == 0.0);

    const Vector origin = lfm::hyperboloid_origin(3);
    for (double t : {0.1, 0.5, 2.0}) {
        const Vector v = vec3(0.0, t, 0.0);
        const Vector y = lfm::exp_map(origin, v);
        CHECK(y[0] == doctest::Approx(std::cosh(t)).epsilon(1e-14));
        CHECK(y[1] == doctest::Approx(std::sinh(t)).epsilon(1e-14));
        CHECK(y[2] == 0.0);
        CHECK(lfm::hyperboloid_residual(y) < 1e-9);
    }
}

TEST_CASE("exp_map distance identity d(x, exp_x(v)) = |v|_L") {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> norm_dist(0.0, 5.0);
    for (int trial = 0; trial < 10000; ++trial) {
        const Vector x = random_point(rng, 5, -2.0, 2.0);
        const double target = norm_dist(rng);
        const Vector v = random_tangent(rng, x, target);
        const double n = lfm::tangent_norm(v);
        const Vector y = lfm::exp_map(x, v);
        CHECK(lfm::geodesic_distance(x, y) == doctest::Approx(n).epsilon(1e-7));
    }
}

TEST_CASE("exp_map rejects non-tangent vectors") {
    const Vector origin = lfm::hyperboloid_origin(3);
    const Vector not_tangent = vec3(1.0, 0.3, 0.0);  // <0, v>_L = -1 != 0
    CHECK_THROWS_AS((void)lfm::exp_map(origin, not_tangent), lfm::DomainError);
}
