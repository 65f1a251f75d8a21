#include <cmath>
#include <random>

#include "doctest.h"
#include "kakeya/geometry.hpp"

using namespace kakeya;

namespace {

Vec3 random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vec3 v{nd(rng), nd(rng), nd(rng)};
    while (v.norm() < 1e-6) v = {nd(rng), nd(rng), nd(rng)};
    return v.normalized();
}

// rotation by angle about a unit axis (Rodrigues)
Vec3 rotate_about(const Vec3& v, const Vec3& axis, double angle) {
    double c = std::cos(angle), s = std::sin(angle);
    return v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c));
}

}  // namespace

TEST_CASE("paraboloid_normal basic values") {
    Vec3 n0 = paraboloid_normal({0, 0});
    CHECK(n0.x == doctest::Approx(0.0));
    CHECK(n0.y == doctest::Approx(0.0));
    CHECK(n0.z == doctest::Approx(-1.0));

    Vec3 n1 = paraboloid_normal({1, 0});
    double s = 1.0 / std::sqrt(2.0);
    CHECK(n1.x == doctest::Approx(s).epsilon(1e-14));
    CHECK(n1.z == doctest::Approx(-s).epsilon(1e-14));

    // direction is parallel to (xi,-1): dot equals |(xi,-1)|
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        Vec2 xi{4.0 * (rng() % 1000) / 1000.0 - 2.0, 4.0 * (rng() % 1000) / 1000.0 - 2.0};
        Vec3 n = paraboloid_normal(xi);
        Vec3 raw{xi.x, xi.y, -1.0};
        CHECK(n.dot(raw) == doctest::Approx(raw.norm()).epsilon(1e-12));
        CHECK(n.norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("paraboloid_normal at xi=m matches the e3 axis direction") {
    Vec2 m{0.3, 0.7};
    Vec3 n = paraboloid_normal(m);
    Vec3 e3 = Vec3{m.x, m.y, -1.0}.normalized();
    CHECK((n - e3).norm() < 1e-14);
}

TEST_CASE("wedge3 basics and the cap-scale determinant") {
    CHECK(wedge3({1, 0, 0}, {0, 1, 0}, {0, 0, 1}) == doctest::Approx(1.0));
    CHECK(wedge3({1, 0, 0}, {0, 1, 0}, {1, 1, 0}) == doctest::Approx(0.0));
    CHECK(wedge3({1, 2, 3}, {2, 4, 6}, {0, 1, 0}) == doctest::Approx(0.0));

    for (int j = 0; j <= 5; ++j)
        for (int r = 0; r <= j; ++r) {
            double a = std::exp2(-j), b = std::exp2(-r);
            double w = wedge3(paraboloid_normal({0, 0}), paraboloid_normal({a, 0}),
                              paraboloid_normal({0, b}));
            // |det| = a*b / (|(a,0,-1)| * |(0,b,-1)|), within factor 4 of 2^-j-r
            double expect = a * b / (std::sqrt(1 + a * a) * std::sqrt(1 + b * b));
            CHECK(w == doctest::Approx(expect).epsilon(1e-12));
            CHECK(w >= a * b / 4.0);
            CHECK(w <= a * b * 4.0);
        }
}

TEST_CASE("wedge3 rotation invariance and per-argument homogeneity") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    for (int it = 0; it < 100; ++it) {
        Vec3 v1{nd(rng), nd(rng), nd(rng)}, v2{nd(rng), nd(rng), nd(rng)},
            v3{nd(rng), nd(rng), nd(rng)};
        Vec3 axis = random_unit(rng);
        double ang = nd(rng);
        double w0 = wedge3(v1, v2, v3);
        double w1 = wedge3(rotate_about(v1, axis, ang), rotate_about(v2, axis, ang),
                           rotate_about(v3, axis, ang));
        CHECK(w1 == doctest::Approx(w0).epsilon(1e-10));
        double k = 1.0 + std::fabs(nd(rng));
        CHECK(wedge3(v1 * k, v2, v3) == doctest::Approx(k * w0).epsilon(1e-10));
        CHECK(wedge3(v1, v2 * k, v3) == doctest::Approx(k * w0).epsilon(1e-10));
        CHECK(wedge3(v1, v2, v3 * k) == doctest::Approx(k * w0).epsilon(1e-10));
    }
}

TEST_CASE("strip membership matches the defining inequality") {
    Strip s{3, Vec2{1, 0}, Vec2{0.5, 0.5}};
    double wdt = std::exp2(-3);
    CHECK(strip_contains(s, s.anchor));
    CHECK(strip_contains(s, s.anchor + s.direction.perp() * (wdt / 2)));
    CHECK(!strip_contains(s, s.anchor + s.direction.perp() * (2 * wdt)));
    // unbounded along the direction
    CHECK(strip_contains(s, s.anchor + s.direction * 100.0));

    // translation invariance of (xi, m) and reflection w -> -w
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (int it = 0; it < 200; ++it) {
        Vec2 w = rotate({1, 0}, nd(rng));
        Vec2 m{nd(rng), nd(rng)}, xi{nd(rng), nd(rng)}, shift{nd(rng), nd(rng)};
        Strip a{2, w, m};
        Strip b{2, w, m + shift};
        Strip c{2, w * -1.0, m};
        CHECK(strip_contains(a, xi) == strip_contains(b, xi + shift));
        CHECK(strip_contains(a, xi) == strip_contains(c, xi));
    }
}

TEST_CASE("tube membership: axis, boundary, off-axis") {
    Tube t{{0, 0, 1}, {0, 0, 0}, 1.0};
    CHECK(tube_contains(t, {0, 0, 5}));
    CHECK(tube_contains(t, {1, 0, -3}));  // closed boundary
    CHECK(tube_contains(t, {0.6, 0.8, 5}));
    CHECK(!tube_contains(t, {0.6, 0.9, 5}));
}

TEST_CASE("make_parallelepiped side exponents") {
    Vec2 w{1, 0}, m{0.25, 0.0};
    auto cube_like = make_parallelepiped(3, 2, w, m, 1.0, 1.0, 0.0, {0, 0, 0});
    CHECK(cube_like.side_exponents[0] == doctest::Approx(5));
    CHECK(cube_like.side_exponents[1] == doctest::Approx(5));
    CHECK(cube_like.side_exponents[2] == doctest::Approx(5));

    auto cell = make_parallelepiped(3, 2, w, m, 0.0, 0.0, 0.0, {0, 0, 0});
    CHECK(cell.side_exponents[0] == doctest::Approx(2));
    CHECK(cell.side_exponents[1] == doctest::Approx(0));
    CHECK(cell.side_exponents[2] == doctest::Approx(5));

    double lam = 1.0 * 3 + 0.5 * 2;  // M*j + N*t
    auto shifted = make_parallelepiped(3, 2, w, m, 0.0, 0.0, lam, {0, 0, 0});
    for (int i = 0; i < 3; ++i)
        CHECK(shifted.side_exponents[i] == doctest::Approx(cell.side_exponents[i] + lam));

    CHECK_THROWS(make_parallelepiped(3, 2, Vec2{2, 0}, m, 0, 0, 0, {0, 0, 0}));
}

TEST_CASE("frame: e2 orthogonal to e1,e3; edge lengths realized") {
    Vec2 w = rotate({1, 0}, 0.35);
    Vec2 m{0.4, 1.1};
    auto p = make_parallelepiped(2, 1, w, m, 0.5, 0.5, 0.0, {1, 2, 3});
    CHECK(std::fabs(p.frame.e1.dot(p.frame.e2)) < 1e-12);
    CHECK(std::fabs(p.frame.e2.dot(p.frame.e3)) < 1e-12);
    // edge along e_i has length 2^{s_i}: walk from face to face
    for (int i = 0; i < 3; ++i) {
        Vec3 u{0, 0, 0};
        if (i == 0) u.x = 1;
        if (i == 1) u.y = 1;
        if (i == 2) u.z = 1;
        Vec3 a = p.center - p.frame.apply(u * p.half_length(i));
        Vec3 b = p.center + p.frame.apply(u * p.half_length(i));
        CHECK((b - a).norm() == doctest::Approx(p.edge_length(i)).epsilon(1e-12));
        CHECK(p.contains(a));
        CHECK(p.contains(b));
    }
}

TEST_CASE("tile: identity, 3-per-axis doubling, cube host") {
    Vec2 w = rotate({1, 0}, 0.2);
    Vec2 m{0.3, 0.2};
    auto proto = make_parallelepiped(1, 1, w, m, 0.0, 0.0, 0.0, {0, 0, 0});

    auto single = tile(proto, proto);
    CHECK(single.size() == 1);
    CHECK((single.cell(0).center - proto.center).norm() < 1e-12);

    auto host = proto;
    for (auto& s : host.side_exponents) s += 1.0;  // double each side
    auto t27 = tile(host, proto);
    CHECK(t27.size() == 27);

    // Q_R by unit cubes, R=4: 9 cells per axis meet the bounding box
    auto unitcube = make_axis_box({0, 0, 0}, {0.5, 0.5, 0.5});
    auto tc = tile_cube(4.0, unitcube);
    CHECK(tc.size() == 9 * 9 * 9);
}

TEST_CASE("tiling disjointness, coverage, center anchoring (randomized)") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 8; ++trial) {
        Vec2 w = rotate({1, 0}, nd(rng));
        Vec2 m{0.5 + 0.2 * nd(rng), 0.5 + 0.2 * nd(rng)};
        int j = static_cast<int>(rng() % 3), t = static_cast<int>(rng() % 3);
        auto proto = make_parallelepiped(j, t, w, m, 0.0, 0.0, 0.0, {0, 0, 0});
        auto host = proto;
        for (auto& s : host.side_exponents) s += 1 + static_cast<int>(rng() % 2);
        host.center = {nd(rng), nd(rng), nd(rng)};
        auto tl = tile(host, proto);

        bool center_anchored = false;
        for (size_t i = 0; i < tl.size(); ++i)
            if ((tl.cell(i).center - host.center).norm() < 1e-12) center_anchored = true;
        CHECK(center_anchored);

        for (int s = 0; s < 1250; ++s) {
            // sample a point of the host uniformly in frame coordinates
            Vec3 u{(2.0 * (rng() % 10000) / 10000.0 - 1.0) * host.half_length(0),
                   (2.0 * (rng() % 10000) / 10000.0 - 1.0) * host.half_length(1),
                   (2.0 * (rng() % 10000) / 10000.0 - 1.0) * host.half_length(2)};
            Vec3 p = host.center + host.frame.apply(u);
            int hits = 0;
            int strict_hits = 0;
            for (size_t i = 0; i < tl.size(); ++i) {
                auto cell = tl.cell(i);
                if (cell.contains(p)) ++hits;
                Vec3 uc = cell.frame.coords(p - cell.center);
                if (std::fabs(uc.x) < cell.half_length(0) - 1e-9 &&
                    std::fabs(uc.y) < cell.half_length(1) - 1e-9 &&
                    std::fabs(uc.z) < cell.half_length(2) - 1e-9)
                    ++strict_hits;
            }
            CHECK(hits >= 1);          // coverage
            CHECK(strict_hits <= 1);   // disjoint interiors
        }
    }
}

TEST_CASE("line-parallelepiped distance: axis cases and boundary") {
    auto box = make_axis_box({0, 0, 0}, {1, 2, 3});
    // line along z offset in x by 5: distance 4
    CHECK(line_parallelepiped_distance({5, 0, 0}, {0, 0, 1}, box) == doctest::Approx(4.0));
    // line through the box: 0
    CHECK(line_parallelepiped_distance({0.5, 0.5, -10}, {0, 0, 1}, box) == doctest::Approx(0.0));
    // diagonal offset
    CHECK(line_parallelepiped_distance({4, 5, 0}, {0, 0, 1}, box) ==
          doctest::Approx(std::hypot(3.0, 3.0)));
    // line at 45 degrees above a corner
    Vec3 d = Vec3{1, 1, 0}.normalized();
    double got = line_parallelepiped_distance({0, 0, 10}, d, box);
    CHECK(got == doctest::Approx(7.0));
}

TEST_CASE("line-parallelepiped distance agrees with dense sampling oracle") {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 60; ++trial) {
        Vec2 w = rotate({1, 0}, nd(rng));
        Vec2 m{0.4 + 0.3 * nd(rng), 0.4 + 0.3 * nd(rng)};
        auto P = make_parallelepiped(static_cast<int>(rng() % 3), static_cast<int>(rng() % 2),
                                     w, m, 0.0, 0.0, 0.0, {nd(rng), nd(rng), nd(rng)});
        Vec3 a{3 * nd(rng), 3 * nd(rng), 3 * nd(rng)};
        Vec3 d = random_unit(rng);
        double exact = line_parallelepiped_distance(a, d, P);

        // oracle: min over dense grid of box points of distance to line
        double best = 1e300;
        int K = 24;
        for (int i0 = 0; i0 <= K; ++i0)
            for (int i1 = 0; i1 <= K; ++i1)
                for (int i2 = 0; i2 <= K; ++i2) {
                    Vec3 u{(2.0 * i0 / K - 1.0) * P.half_length(0),
                           (2.0 * i1 / K - 1.0) * P.half_length(1),
                           (2.0 * i2 / K - 1.0) * P.half_length(2)};
                    Vec3 p = P.center + P.frame.apply(u);
                    best = std::min(best, point_line_distance(p, a, d));
                }
        CHECK(exact <= best + 1e-9);                    // never exceeds any witness
        CHECK(best <= exact + 0.35 * P.edge_length(1)); // grid resolution slack
    }
}

TEST_CASE("parallelepipeds_overlap SAT test") {
    auto a = make_axis_box({0, 0, 0}, {1, 1, 1});
    auto b = make_axis_box({3, 0, 0}, {1, 1, 1});
    CHECK(!parallelepipeds_overlap(a, b));
    auto c = make_axis_box({1.5, 0, 0}, {1, 1, 1});
    CHECK(parallelepipeds_overlap(a, c));
}
