#include "kakeya/family.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace kakeya {

namespace {

constexpr double kDomainLo = 0.0, kDomainHi = 2.0;

bool in_domain(const Vec2& xi) {
    return xi.x >= kDomainLo && xi.x <= kDomainHi && xi.y >= kDomainLo && xi.y <= kDomainHi;
}

// axis-aligned rectangle, used for clipped-cap separation checks
struct Rect {
    double x0, y0, x1, y1;
    bool empty() const { return x1 <= x0 || y1 <= y0; }
};

Rect clip_cap(const Cap& c) {
    double a = c.side();
    return {std::max(c.corner.x, kDomainLo), std::max(c.corner.y, kDomainLo),
            std::min(c.corner.x + a, kDomainHi), std::min(c.corner.y + a, kDomainHi)};
}

double rect_distance(const Rect& a, const Rect& b) {
    double dx = std::max({0.0, b.x0 - a.x1, a.x0 - b.x1});
    double dy = std::max({0.0, b.y0 - a.y1, a.y0 - b.y1});
    return std::hypot(dx, dy);
}

Vec2 sample_xi(const Region& rg, std::mt19937_64& rng) {
    Vec2 perp = rg.line_dir.perp();
    for (int it = 0; it < 20000; ++it) {
        double u = next_in(rng, -rg.along_half, rg.along_half);
        double v = next_in(rng, -rg.trans_half, rg.trans_half);
        Vec2 xi = rg.line_anchor + rg.line_dir * u + perp * v;
        if (rg.cap.contains(xi) && in_domain(xi)) return xi;
    }
    throw std::runtime_error("region sampling failed: clipped region too thin");
}

}  // namespace

void TypeParams::validate() const {
    if (r < 0 || j < 0 || t < 0) throw std::invalid_argument("r,j,t must be non-negative");
    if (r > j) throw std::invalid_argument("r <= j violated");
    if (std::fabs(w.norm() - 1.0) > 1e-9) throw std::invalid_argument("w must be unit");
    if (!in_domain(m)) throw std::invalid_argument("m must lie in [0,2]^2");
    if (!(epsilon > 0.0) || epsilon > 1.0) throw std::invalid_argument("epsilon must be in (0,1]");
}

TypeParams default_params(int r, int j, int t, double epsilon) {
    TypeParams p;
    p.r = r;
    p.j = j;
    p.t = t;
    p.epsilon = epsilon;
    // m close to the origin keeps e3 near the vertical axis, so adapted cells
    // have small axis-aligned bounding boxes
    p.w = Vec2{0.0, 1.0};
    p.m = Vec2{std::exp2(-j - 1), 0.0};
    return p;
}

bool Region::contains(const Vec2& xi) const {
    return cap.contains(xi) && strip_contains(strip, xi) && in_domain(xi);
}

bool Region::band_contains(const Vec2& xi) const {
    Vec2 d = xi - line_anchor;
    double u = d.dot(line_dir);
    double v = d.dot(line_dir.perp());
    return std::fabs(u) <= along_half + 1e-12 && std::fabs(v) <= trans_half + 1e-12 &&
           cap.contains(xi) && in_domain(xi);
}

std::array<Region, 3> make_regions(const TypeParams& params) {
    params.validate();
    const int r = params.r, j = params.j, t = params.t;
    const double bj = std::exp2(-j);  // fine cap side
    const double ar = std::exp2(-r);  // coarse cap side
    // |w - w'| = 2^-t exactly
    const double rot_angle = 2.0 * std::asin(std::min(1.0, std::exp2(-t)) / 2.0);

    auto build = [&](double c3_mult, int rot_sign) -> std::array<Region, 3> {
        std::array<Region, 3> rg;
        Vec2 wp = rotate(params.w, rot_sign * rot_angle);

        for (int n = 0; n < 2; ++n) {
            Region& g = rg[n];
            g.line_dir = params.w;
            g.line_anchor = (n == 0) ? params.m : params.m + params.w * (2.0 * bj);
            g.cap.side_exponent = j;
            g.cap.corner = g.line_anchor - Vec2{bj / 2, bj / 2};
            g.strip = Strip{j + t, params.w, params.m};
            g.along_half = bj / 4.0;
            g.trans_half = g.strip.width() / 8.0;
        }
        Region& g3 = rg[2];
        g3.line_dir = wp;
        g3.line_anchor = params.m + wp * (c3_mult * ar);
        g3.cap.side_exponent = r;
        g3.cap.corner = g3.line_anchor - Vec2{ar / 2, ar / 2};
        g3.strip = Strip{r + t, wp, params.m};
        g3.along_half = ar / 4.0;
        g3.trans_half = g3.strip.width() / 4.0;
        return rg;
    };

    auto validate_placement = [&](const std::array<Region, 3>& rg, std::string& why) -> bool {
        Rect rects[3];
        for (int n = 0; n < 3; ++n) {
            rects[n] = clip_cap(rg[n].cap);
            if (rects[n].empty()) {
                why = "cap for family " + std::to_string(n + 1) + " leaves [0,2]^2";
                return false;
            }
        }
        // separations at the transversality comparability factor C_w = 8
        const double cw = 8.0;
        double d12 = rect_distance(rects[0], rects[1]);
        if (d12 < bj / cw || d12 > cw * bj) {
            why = "separation d(tau_k, tau_k') !~ 2^-j";
            return false;
        }
        for (int n = 0; n < 2; ++n) {
            double d = rect_distance(rects[n], rects[2]);
            if (d < ar / cw || d > cw * ar) {
                why = "separation d(tau, tau'') !~ 2^-r";
                return false;
            }
        }
        // wedge precheck on deterministic region samples
        std::mt19937_64 rng(0x6b616b65u);
        std::array<std::vector<Vec3>, 3> dirs;
        try {
            for (int n = 0; n < 3; ++n)
                for (int i = 0; i < 8; ++i) dirs[n].push_back(paraboloid_normal(sample_xi(rg[n], rng)));
        } catch (const std::exception&) {
            why = "region empty after clipping";
            return false;
        }
        double anchor = params.theta_anchor();
        double th = wedge3(paraboloid_normal(rg[0].representative()),
                           paraboloid_normal(rg[1].representative()),
                           paraboloid_normal(rg[2].representative()));
        if (th < anchor / 8 || th > anchor * 8) {
            why = "representative wedge !~ 2^-(j+r+t)";
            return false;
        }
        for (auto& d1 : dirs[0])
            for (auto& d2 : dirs[1])
                for (auto& d3 : dirs[2]) {
                    double wv = wedge3(d1, d2, d3);
                    if (wv < th / 8 || wv > th * 8) {
                        why = "sampled wedge leaves the factor-8 window";
                        return false;
                    }
                }
        return true;
    };

    static const std::array<double, 6> c3_candidates = {2, -2, 4, -4, 6, -6};
    std::string last_reason = "no candidate placement";
    for (double c3 : c3_candidates) {
        for (int rs : {-1, 1}) {
            auto rg = build(c3, rs);
            std::string why;
            if (validate_placement(rg, why)) return rg;
            last_reason = why;
        }
    }
    throw std::runtime_error("infeasible TypeParams (r=" + std::to_string(r) +
                             ",j=" + std::to_string(j) + ",t=" + std::to_string(t) +
                             "): " + last_reason);
}

TriFamily sample_family(const TypeParams& params, const std::array<int, 3>& counts,
                        double box_R, std::uint64_t seed) {
    for (int c : counts)
        if (c < 1) throw std::invalid_argument("counts must be >= 1");
    TriFamily f;
    f.regions = make_regions(params);
    f.params = params;
    f.params.theta = wedge3(paraboloid_normal(f.regions[0].representative()),
                            paraboloid_normal(f.regions[1].representative()),
                            paraboloid_normal(f.regions[2].representative()));
    f.R = box_R;
    f.seed = seed;
    std::mt19937_64 rng(seed);
    for (int n = 0; n < 3; ++n) {
        f.families[n].reserve(static_cast<size_t>(counts[n]));
        for (int i = 0; i < counts[n]; ++i) {
            Vec2 xi = sample_xi(f.regions[n], rng);
            Tube tb;
            tb.direction = paraboloid_normal(xi);
            tb.anchor = Vec3{next_in(rng, -box_R, box_R), next_in(rng, -box_R, box_R),
                             next_in(rng, -box_R, box_R)};
            tb.radius = 1.0;
            f.families[n].push_back(tb);
            f.source_xi[n].push_back(xi);
        }
    }
    return f;
}

Certificate certify(const TriFamily& f, long long max_triples) {
    Certificate c;
    c.theta = f.params.theta;
    const auto& fam = f.families;
    long long n1 = static_cast<long long>(fam[0].size());
    long long n2 = static_cast<long long>(fam[1].size());
    long long n3 = static_cast<long long>(fam[2].size());
    if (n1 == 0 || n2 == 0 || n3 == 0) return c;
    long long total = n1 * n2 * n3;
    double mn = std::numeric_limits<double>::infinity(), mx = 0.0;
    if (total <= max_triples) {
        for (const auto& t1 : fam[0])
            for (const auto& t2 : fam[1])
                for (const auto& t3 : fam[2]) {
                    double wv = wedge3(t1.direction, t2.direction, t3.direction);
                    mn = std::min(mn, wv);
                    mx = std::max(mx, wv);
                }
        c.sampled_triples = total;
    } else {
        std::mt19937_64 rng(0x77656467u);
        for (long long i = 0; i < max_triples; ++i) {
            const auto& t1 = fam[0][rng() % static_cast<std::uint64_t>(n1)];
            const auto& t2 = fam[1][rng() % static_cast<std::uint64_t>(n2)];
            const auto& t3 = fam[2][rng() % static_cast<std::uint64_t>(n3)];
            double wv = wedge3(t1.direction, t2.direction, t3.direction);
            mn = std::min(mn, wv);
            mx = std::max(mx, wv);
        }
        c.sampled_triples = max_triples;
    }
    c.min_wedge = mn;
    c.max_wedge = mx;
    c.pass = mn > 0.0 && mx / mn <= 64.0 && mn >= c.theta / 8.0 && mx <= c.theta * 8.0;
    return c;
}

std::vector<TriFamily> decompose_subfamilies(const TriFamily& f, int lambda) {
    if (lambda < 0) throw std::invalid_argument("lambda must be >= 0");
    struct Key {
        long p, q;
        bool operator<(const Key& o) const { return p != o.p ? p < o.p : q < o.q; }
    };
    std::map<Key, TriFamily> parts;

    for (int n = 0; n < 3; ++n) {
        const Region& rg = f.regions[n];
        int capexp = rg.cap.side_exponent + lambda;
        int wexp = rg.strip.width_exponent + lambda;
        double cu = std::exp2(-capexp), cv = std::exp2(-wexp);
        Vec2 perp = rg.line_dir.perp();
        for (size_t i = 0; i < f.families[n].size(); ++i) {
            Vec2 d = f.source_xi[n][i] - rg.line_anchor;
            double u = d.dot(rg.line_dir), v = d.dot(perp);
            Key k{static_cast<long>(std::floor((v + rg.trans_half) / cv)),
                  static_cast<long>(std::floor((u + rg.along_half) / cu))};
            auto it = parts.find(k);
            if (it == parts.end()) {
                TriFamily sub;
                sub.params = f.params;
                sub.R = f.R;
                sub.seed = f.seed;
                for (int nn = 0; nn < 3; ++nn) {
                    const Region& base = f.regions[nn];
                    Region s = base;
                    int ce = base.cap.side_exponent + lambda;
                    int we = base.strip.width_exponent + lambda;
                    double scu = std::exp2(-ce), scv = std::exp2(-we);
                    double uc = -base.along_half + (k.q + 0.5) * scu;
                    double vc = -base.trans_half + (k.p + 0.5) * scv;
                    s.line_anchor = base.line_anchor + base.line_dir * uc +
                                    base.line_dir.perp() * vc;
                    s.along_half = scu / 2;
                    s.trans_half = scv / 2;
                    // bounding refined cap: one dyadic level coarser than the band
                    s.cap.side_exponent = std::max(0, ce - 1);
                    double side = s.cap.side();
                    s.cap.corner = s.line_anchor - Vec2{side / 2, side / 2};
                    s.strip = Strip{we, base.strip.direction,
                                    base.line_anchor + base.line_dir.perp() * vc};
                    sub.regions[nn] = s;
                }
                it = parts.emplace(k, std::move(sub)).first;
            }
            it->second.families[n].push_back(f.families[n][i]);
            it->second.source_xi[n].push_back(f.source_xi[n][i]);
        }
    }

    std::vector<TriFamily> out;
    out.reserve(parts.size());
    for (auto& [k, sub] : parts) out.push_back(std::move(sub));
    return out;
}

// ---------------------------------------------------------------------------
// Arrangement file
// ---------------------------------------------------------------------------

namespace {
std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace

void write_arrangement(std::ostream& os, const TriFamily& f) {
    os << f.params.r << ' ' << f.params.j << ' ' << f.params.t << ' ' << fmt17(f.params.w.x)
       << ' ' << fmt17(f.params.w.y) << ' ' << fmt17(f.params.m.x) << ' '
       << fmt17(f.params.m.y) << ' ' << fmt17(f.params.epsilon) << ' ' << f.seed << ' '
       << fmt17(f.R) << '\n';
    for (int n = 0; n < 3; ++n) {
        for (size_t i = 0; i < f.families[n].size(); ++i) {
            const Tube& tb = f.families[n][i];
            const Vec2& xi = f.source_xi[n][i];
            os << (n + 1) << ' ' << fmt17(tb.direction.x) << ' ' << fmt17(tb.direction.y)
               << ' ' << fmt17(tb.direction.z) << ' ' << fmt17(tb.anchor.x) << ' '
               << fmt17(tb.anchor.y) << ' ' << fmt17(tb.anchor.z) << ' ' << fmt17(tb.radius)
               << ' ' << fmt17(xi.x) << ' ' << fmt17(xi.y) << '\n';
        }
    }
}

void write_arrangement_file(const std::string& path, const TriFamily& f) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_arrangement(os, f);
}

TriFamily read_arrangement(std::istream& is) {
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw std::runtime_error("arrangement parse error at line " + std::to_string(lineno) +
                                 ": " + msg);
    };
    if (!std::getline(is, line)) {
        lineno = 1;
        fail("missing header");
    }
    ++lineno;
    TriFamily f;
    {
        std::istringstream ss(line);
        if (!(ss >> f.params.r >> f.params.j >> f.params.t >> f.params.w.x >> f.params.w.y >>
              f.params.m.x >> f.params.m.y >> f.params.epsilon >> f.seed >> f.R))
            fail("malformed header record");
    }
    f.regions = make_regions(f.params);
    f.params.theta = wedge3(paraboloid_normal(f.regions[0].representative()),
                            paraboloid_normal(f.regions[1].representative()),
                            paraboloid_normal(f.regions[2].representative()));
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        int n;
        Tube tb;
        Vec2 xi;
        if (!(ss >> n >> tb.direction.x >> tb.direction.y >> tb.direction.z >> tb.anchor.x >>
              tb.anchor.y >> tb.anchor.z >> tb.radius >> xi.x >> xi.y))
            fail("malformed tube record");
        if (n < 1 || n > 3) fail("family index out of range");
        f.families[static_cast<size_t>(n - 1)].push_back(tb);
        f.source_xi[static_cast<size_t>(n - 1)].push_back(xi);
    }
    return f;
}

TriFamily read_arrangement_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_arrangement(is);
}

}  // namespace kakeya
