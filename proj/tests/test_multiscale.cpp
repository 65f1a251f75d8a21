#include <cmath>
#include <set>

#include "doctest.h"
#include "kakeya/multiscale.hpp"

using namespace kakeya;

TEST_CASE("build_schedule: single step and increment bounds") {
    auto p = default_params(1, 2, 1);
    // R = 2^{j+t}: no middle scales
    auto s = build_schedule(p, 8.0);
    CHECK(s.S == 2);
    CHECK(s.M[1] == 0.0);
    CHECK(s.N[1] == 0.0);
    CHECK(s.log2R == doctest::Approx(3.0));
    CHECK(validate_schedule(s).empty());

    // R too small: still a two-scale schedule, R rounded up
    auto tiny = build_schedule(p, 2.0);
    CHECK(tiny.S == 2);
    CHECK(tiny.log2R == doctest::Approx(3.0));
    CHECK(validate_schedule(tiny).empty());

    // bigger R forces middle scales with snapped increments
    auto s3 = build_schedule(p, 32.0);
    CHECK(s3.S >= 3);
    CHECK(validate_schedule(s3).empty());
    CHECK(s3.log2R >= std::log2(32.0) - 1e-9);

    auto p2 = default_params(2, 4, 2);
    p2.epsilon = 0.5;
    auto s4 = build_schedule(p2, std::exp2(12));
    CHECK(validate_schedule(s4).empty());
    for (int k = 1; k <= s4.S - 2; ++k) {
        double dM = s4.M[static_cast<size_t>(k + 1)] - s4.M[static_cast<size_t>(k)];
        CHECK(dM >= 0.5 - 1e-12);
        CHECK(dM <= 1.0 + 1e-12);
    }
}

TEST_CASE("dyadic anchors: 5,9,17 -> 4,8,16") {
    CHECK(dyadic_anchor(5) == 4);
    CHECK(dyadic_anchor(9) == 8);
    CHECK(dyadic_anchor(17) == 16);
    CHECK(dyadic_anchor(1) == 1);
    CHECK(dyadic_anchor(0) == 0);
}

TEST_CASE("bucket_cells: populations partition the tiling") {
    auto p = default_params(1, 2, 1);
    auto f = sample_family(p, {20, 20, 20}, 8.0, 51);
    auto fr = make_frame(p.w, p.m);
    Parallelepiped unit;
    unit.frame = fr;
    unit.side_exponents = {0, 0, 0};
    unit.center = {0, 0, 0};
    auto U = tile_cube(8.0, unit);
    auto b = bucket_cells(f, U);
    std::size_t total = 0;
    for (const auto& [key, ids] : b.buckets) total += ids.size();
    CHECK(total == U.size());
    // every member really has counts within factor 2 of its anchors
    for (const auto& [key, ids] : b.buckets) {
        if (key[0] == 0) continue;
        for (auto id : ids)
            for (int n = 0; n < 3; ++n) {
                CHECK(b.counts[id][static_cast<size_t>(n)] >= key[static_cast<size_t>(n)]);
                CHECK(b.counts[id][static_cast<size_t>(n)] < 2 * key[static_cast<size_t>(n)]);
            }
    }
}

TEST_CASE("bucket_cells: a bush through one tile") {
    // all tubes pass через the central tile
    TriFamily f;
    f.params = default_params(0, 0, 0);
    for (int n = 0; n < 3; ++n)
        for (int i = 0; i < 7; ++i) {
            Vec3 d = n == 0 ? Vec3{1, 0, 0} : (n == 1 ? Vec3{0, 1, 0} : Vec3{0, 0, 1});
            f.families[static_cast<size_t>(n)].push_back(Tube{d, {0, 0, 0}, 0.2});
        }
    auto box = make_axis_box({0, 0, 0}, {2, 2, 2});
    Parallelepiped proto = make_axis_box({0, 0, 0}, {2.0, 2.0, 2.0});
    auto U = tile(box, proto);  // single tile
    auto b = bucket_cells(f.families, U);
    REQUIRE(b.buckets.count({4, 4, 4}) == 1);
    CHECK(b.buckets.at({4, 4, 4}).size() == 1);
}

TEST_CASE("measure_mu: maximal, singleton and half-density censuses") {
    int j = 2, t = 1, r = 1;
    auto fr = Frame::axis_aligned();
    Parallelepiped pproto;
    pproto.frame = fr;
    pproto.side_exponents = {static_cast<double>(t), 0, static_cast<double>(j + t)};
    pproto.center = {0, 0, 0};
    auto PT = tile(make_axis_box({0, 0, 0}, {1.0, 0.5, 4.0}), pproto);  // single P
    REQUIRE(PT.size() == 1);

    // fully occupied: mu = (2^{2t}, 2^{j-r}, 2^r) at E=F=1
    auto mc = measure_mu(PT, fr, 0, j, t, r, 1.0, 1.0,
                         [](const Parallelepiped&) { return true; });
    CHECK(mc.mu1 == doctest::Approx(std::exp2(2 * t)));
    CHECK(mc.mu2 == doctest::Approx(std::exp2(j - r)));
    CHECK(mc.mu3 == doctest::Approx(std::exp2(r)));
    CHECK(mc.qualifying.size() == 1);

    // single occupied unit cell
    auto mc1 = measure_mu(PT, fr, 0, j, t, r, 1.0, 1.0, [](const Parallelepiped& c) {
        return (c.center - Vec3{0.5, 0.0, 0.5}).norm() < 0.25;
    });
    CHECK(mc1.mu1 == doctest::Approx(1.0));
    CHECK(mc1.mu2 == doctest::Approx(1.0));
    CHECK(mc1.mu3 == doctest::Approx(1.0));

    // half density: occupied iff the unit z-slot is even; hand enumeration
    // gives per-P2 count 1 (mu3=1), per-P1 qualifying P2s = 2^{j-r} (mu2=2),
    // per-P qualifying P1s = 2^{2t} (mu1=4)
    auto mc2 = measure_mu(PT, fr, 0, j, t, r, 1.0, 1.0, [](const Parallelepiped& c) {
        long zslot = std::lround(std::floor(c.center.z + 4.0));
        return zslot % 2 == 0;
    });
    CHECK(mc2.mu3 == doctest::Approx(1.0));
    CHECK(mc2.mu2 == doctest::Approx(std::exp2(j - r)));
    CHECK(mc2.mu1 == doctest::Approx(std::exp2(2 * t)));

    // empty census: zero sentinel
    auto mc0 = measure_mu(PT, fr, 0, j, t, r, 1.0, 1.0,
                          [](const Parallelepiped&) { return false; });
    CHECK(mc0.mu3 == 0.0);
    CHECK(mc0.qualifying.empty());
}

TEST_CASE("measure_beta: full target, empty target, empty P") {
    auto p = default_params(1, 2, 1);
    auto f = sample_family(p, {10, 10, 10}, 4.0, 8);
    auto P = make_axis_cube(4.0);
    std::vector<Parallelepiped> cover = {make_axis_cube(64.0)};
    auto b1 = measure_beta(f.families, P, cover);
    CHECK(b1[0] == doctest::Approx(1.0));
    CHECK(b1[1] == doctest::Approx(1.0));
    CHECK(b1[2] == doctest::Approx(1.0));
    auto b0 = measure_beta(f.families, P, {});
    CHECK(b0[0] == 0.0);
    auto farP = make_axis_box({900, 900, 900}, {1, 1, 1});
    CHECK_THROWS(measure_beta(f.families, farP, cover));
}

TEST_CASE("compute_L: basics and range flag") {
    std::vector<Tube> fam;
    for (int i = 0; i < 8; ++i) fam.push_back(Tube{{0, 0, 1}, {2.5 * i, 0, 0}, 1.0});
    std::vector<Parallelepiped> B = {make_axis_box({0, 0, 0}, {1, 1, 4})};
    auto lv = compute_L(fam, B, 1.0, 4.0);
    CHECK(lv.L == doctest::Approx(1.0));  // only the first tube meets B
    CHECK(lv.in_range);
    std::vector<Parallelepiped> Bwide = {make_axis_box({0, 0, 0}, {100, 1, 4})};
    auto lw = compute_L(fam, Bwide, 1.0, 4.0);
    CHECK(lw.L == doctest::Approx(8.0));
    CHECK(!lw.in_range);  // above the cap: flagged, not clamped
    CHECK_THROWS(compute_L(fam, B, 0.0, 4.0));
}

TEST_CASE("build_Bsets on a uniform arrangement: caps, betas near 1, nesting") {
    auto p = default_params(1, 2, 1);
    auto f = sample_family(p, {90, 90, 90}, 8.0, 1234);
    auto sched = build_schedule(p, 8.0);
    REQUIRE(sched.S == 2);
    auto [bs, prof] = build_Bsets(f, sched);
    REQUIRE(!bs.truncated);
    CHECK(prof.cap_violations().empty());
    // uniform: hitting fractions close to 1 (allow one dyadic class down)
    for (int n = 0; n < 3; ++n) CHECK(prof.at(1).beta1[n] >= 0.5);
    CHECK(!bs.B_cells.empty());

    // B-cells are unit cells fully inside exactly one A1 cell and one A2 cell
    for (const auto& u : bs.B_cells) {
        int in1 = 0, in2 = 0;
        for (const auto& c : bs.A1[0])
            if (cell_inside(u, c)) ++in1;
        for (const auto& c : bs.A2[0])
            if (cell_inside(u, c)) ++in2;
        CHECK(in1 == 1);
        CHECK(in2 == 1);
    }

    // theorem bound: rhs <= C^{|I|} * theta^{-1/2} anchor within the dyadic slack
    auto rb = theorem_rhs(prof, 4.0);
    double anchor = std::exp2(0.5 * (p.j + p.r + p.t));
    CHECK(rb.rhs <= std::pow(4.0, static_cast<double>(rb.I.size())) * anchor * 2.0);
    CHECK(rb.I.back() == sched.S);

    // Remark invariant: S(1) * S(S) <= 2 * theta^{-1/2}
    double s1 = refinement_factor(prof, 1);
    double sS = refinement_factor(prof, sched.S);
    CHECK(s1 * sS <= 2.0 * anchor);
}

TEST_CASE("build_Bsets with a three-scale schedule") {
    auto p = default_params(1, 2, 1);
    auto f = sample_family(p, {110, 110, 110}, 16.0, 777);
    auto sched = build_schedule(p, 16.0);
    REQUIRE(sched.S == 3);
    auto [bs, prof] = build_Bsets(f, sched);
    if (!bs.truncated) {
        CHECK(prof.cap_violations().empty());
        CHECK(prof.at(2).populated);
        // middle factor carries the min clamp
        CHECK(refinement_factor(prof, 2) <= 1.0 + 1e-12);
        auto rb = theorem_rhs(prof, 4.0);
        CHECK(rb.rhs > 0.0);
    } else {
        MESSAGE("three-scale chain truncated: ", bs.note);
        CHECK(!bs.note.empty());
    }
}

TEST_CASE("sparse base selection drops the refinement factor") {
    auto p = default_params(1, 2, 1);
    auto f = sample_family(p, {90, 90, 90}, 8.0, 1234);
    auto sched = build_schedule(p, 8.0);
    auto [bs_full, prof_full] = build_Bsets(f, sched);
    BSetOptions opt;
    opt.keep_every_col = 2;
    opt.keep_every_p2 = 2;
    opt.keep_every_unit = 2;
    auto [bs_sparse, prof_sparse] = build_Bsets(f, sched, opt);
    REQUIRE(!bs_full.truncated);
    REQUIRE(!bs_sparse.truncated);
    CHECK(bs_sparse.B_cells.size() < bs_full.B_cells.size());
    CHECK(refinement_factor(prof_sparse, 1) < refinement_factor(prof_full, 1));
}

TEST_CASE("refinement_factor formulas") {
    // hand-built maximal profile: S(1) = 2^{(j+r+t)/2} = theta^{-1/2}
    DensityProfile prof;
    prof.params = default_params(1, 3, 2);
    prof.schedule = build_schedule(prof.params, std::exp2(5));
    REQUIRE(prof.schedule.S == 2);
    prof.scales.resize(2);
    for (int s = 1; s <= 2; ++s) {
        auto& sd = prof.at(s);
        sd.s = s;
        sd.populated = true;
        sd.E = prof.schedule.E[static_cast<size_t>(s)];
        sd.F = prof.schedule.F[static_cast<size_t>(s)];
    }
    auto& s1 = prof.at(1);
    s1.mu[0] = std::exp2(2 * 2);      // 2^{2t}
    s1.mu[1] = std::exp2(3 - 1);      // 2^{j-r}
    s1.mu[2] = std::exp2(1);          // 2^r
    for (int n = 0; n < 3; ++n) s1.beta1[n] = 1.0;
    CHECK(refinement_factor(prof, 1) ==
          doctest::Approx(std::exp2(0.5 * (3 + 1 + 2))).epsilon(1e-12));

    // beta halved in one family at s=1: S scales by 2^{-1/2}
    s1.beta1[0] = 0.5;
    CHECK(refinement_factor(prof, 1) ==
          doctest::Approx(std::exp2(0.5 * 6) * std::exp2(-0.5)).epsilon(1e-12));
    s1.beta1[0] = 1.0;

    auto& s2 = prof.at(2);
    s2.mu[3] = 1.0;
    s2.mu[4] = 1.0;
    for (int n = 0; n < 3; ++n) s2.beta2[n] = 1.0;
    CHECK(refinement_factor(prof, 2) == doctest::Approx(1.0));

    // middle-scale clamp: raw product >= 1 gives exactly 1
    DensityProfile prof3 = prof;
    prof3.schedule = build_schedule(prof.params, std::exp2(10));
    REQUIRE(prof3.schedule.S >= 3);
    prof3.scales.resize(static_cast<size_t>(prof3.schedule.S));
    for (int s = 1; s <= prof3.schedule.S; ++s) {
        auto& sd = prof3.at(s);
        sd.s = s;
        sd.populated = true;
        sd.mu[0] = 4;
        sd.mu[1] = 2;
        sd.mu[2] = 2;
        sd.mu[3] = 1;
        sd.mu[4] = 1;
        for (int n = 0; n < 3; ++n) {
            sd.beta1[n] = 1.0;
            sd.beta2[n] = 1.0;
        }
    }
    CHECK(refinement_factor(prof3, 2) == doctest::Approx(1.0));

    // theorem_rhs with all middle factors 1 and C > 1: I = {S}
    auto rb = theorem_rhs(prof3, 4.0);
    CHECK(rb.I.size() == 1);
    CHECK(rb.I[0] == prof3.schedule.S);
    // |I| = 1: rhs = C * S(1)
    CHECK(rb.rhs == doctest::Approx(4.0 * refinement_factor(prof3, 1)).epsilon(1e-12));
}

TEST_CASE("directional closure: parallel lattice covers the anchor tile") {
    auto p = default_params(0, 1, 0);
    auto f = sample_family(p, {3, 3, 3}, 4.0, 2);
    Parallelepiped proto = make_axis_box({0, 0, 0}, {2, 2, 2});
    auto A = tile_cube(4.0, proto);
    auto fat = directional_closure(f, 1.0, A);
    for (int n = 0; n < 3; ++n) {
        CHECK(!fat[static_cast<size_t>(n)].empty());
        for (const auto& tb : fat[static_cast<size_t>(n)]) CHECK(tb.radius == doctest::Approx(2.0));
        // each original tube's own lattice cell is represented: some fat tube
        // with the same direction covers the original anchor tile
        for (const auto& orig : f.families[static_cast<size_t>(n)]) {
            bool covered = false;
            for (const auto& tb : fat[static_cast<size_t>(n)]) {
                if ((tb.direction - orig.direction).norm() > 1e-12) continue;
                if (point_line_distance(orig.anchor, tb.anchor, tb.direction) <=
                    tb.radius + 2.0 * std::sqrt(3.0))
                    covered = true;
            }
            CHECK(covered);
        }
    }
}

TEST_CASE("profile reports render") {
    auto p = default_params(1, 2, 1);
    auto f = sample_family(p, {60, 60, 60}, 8.0, 10);
    auto sched = build_schedule(p, 8.0);
    auto [bs, prof] = build_Bsets(f, sched);
    auto txt = profile_text_report(prof);
    CHECK(txt.find("scale s=1") != std::string::npos);
    auto csv = profile_csv(prof);
    CHECK(csv.find("s,M,N,E,F,") == 0);
    // one header + S rows
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + sched.S);
}
