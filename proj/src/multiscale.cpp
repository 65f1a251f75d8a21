#include "kakeya/multiscale.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>

namespace kakeya {

// ---------------------------------------------------------------------------
// Scale schedule
// ---------------------------------------------------------------------------

ScaleSchedule build_schedule(const TypeParams& params, double R) {
    params.validate();
    if (R <= 0) throw std::invalid_argument("R must be positive");
    ScaleSchedule s;
    s.j = params.j;
    s.t = params.t;
    s.r = params.r;
    s.epsilon = params.epsilon;

    // increments snapped so E*j and F*t are integers (keeps cell lattices nested)
    double dM = 1.0, dN = 1.0;
    if (s.j >= 1)
        dM = std::min(1.0, std::max(std::ceil(params.epsilon * s.j), static_cast<double>(s.r)) / s.j);
    if (s.t >= 1) dN = std::min(1.0, std::ceil(params.epsilon * s.t) / s.t);

    double want = std::log2(R);
    std::vector<double> M{0.0}, N{0.0};  // M_1 = N_1 = 0
    double per_step = dM * s.j + dN * s.t;
    // middle scales until the final unit increments reach log2 R
    while (M.back() * s.j + N.back() * s.t + s.j + s.t < want - 1e-9) {
        if (per_step <= 0) {
            s.truncated = true;  // j = t = 0: the schedule cannot grow
            break;
        }
        M.push_back(M.back() + dM);
        N.push_back(N.back() + dN);
    }
    // final scale: E_S = F_S = 1
    M.push_back(M.back() + 1.0);
    N.push_back(N.back() + 1.0);
    s.S = static_cast<int>(M.size());

    s.M.assign(static_cast<size_t>(s.S) + 1, 0.0);
    s.N.assign(static_cast<size_t>(s.S) + 1, 0.0);
    s.E.assign(static_cast<size_t>(s.S) + 1, 1.0);
    s.F.assign(static_cast<size_t>(s.S) + 1, 1.0);
    for (int k = 1; k <= s.S; ++k) {
        s.M[static_cast<size_t>(k)] = M[static_cast<size_t>(k - 1)];
        s.N[static_cast<size_t>(k)] = N[static_cast<size_t>(k - 1)];
    }
    for (int k = 2; k <= s.S; ++k) {
        s.E[static_cast<size_t>(k)] = s.M[static_cast<size_t>(k)] - s.M[static_cast<size_t>(k - 1)];
        s.F[static_cast<size_t>(k)] = s.N[static_cast<size_t>(k)] - s.N[static_cast<size_t>(k - 1)];
    }
    s.log2R = s.lambda(s.S);  // M_{S-1} j + N_{S-1} t + (j+t): requested R rounded up
    return s;
}

std::vector<std::string> validate_schedule(const ScaleSchedule& s) {
    std::vector<std::string> bad;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) bad.push_back(what);
    };
    expect(s.S >= 2, "S >= 2");
    expect(s.M[1] == 0.0 && s.N[1] == 0.0, "M_1 = N_1 = 0");
    expect(s.E[1] == 1.0 && s.F[1] == 1.0, "E_1 = F_1 = 1");
    expect(s.E[static_cast<size_t>(s.S)] == 1.0 && s.F[static_cast<size_t>(s.S)] == 1.0,
           "E_S = F_S = 1");
    double floorM = s.j >= 1 ? std::max(s.epsilon, static_cast<double>(s.r) / s.j) : 0.0;
    for (int k = 1; k <= s.S - 2; ++k) {
        double dM = s.M[static_cast<size_t>(k + 1)] - s.M[static_cast<size_t>(k)];
        double dN = s.N[static_cast<size_t>(k + 1)] - s.N[static_cast<size_t>(k)];
        if (s.j >= 1)
            expect(dM >= floorM - 1e-12 && dM <= 1.0 + 1e-12,
                   "max(eps,r/j) <= M_{s+1}-M_s <= 1");
        if (s.t >= 1)
            expect(dN >= s.epsilon - 1e-12 && dN <= 1.0 + 1e-12, "eps <= N_{s+1}-N_s <= 1");
    }
    for (int k = 2; k <= s.S; ++k) {
        expect(std::fabs(s.E[static_cast<size_t>(k)] * s.j -
                         std::round(s.E[static_cast<size_t>(k)] * s.j)) < 1e-9,
               "E_s * j integral");
        expect(std::fabs(s.F[static_cast<size_t>(k)] * s.t -
                         std::round(s.F[static_cast<size_t>(k)] * s.t)) < 1e-9,
               "F_s * t integral");
    }
    double top = s.M[static_cast<size_t>(s.S - 1)] * s.j +
                 s.N[static_cast<size_t>(s.S - 1)] * s.t + s.j + s.t;
    expect(std::fabs(top - s.log2R) < 1e-9, "M_{S-1} j + N_{S-1} t + (j+t) = log2 R");
    return bad;
}

// ---------------------------------------------------------------------------
// Tile counting and buckets
// ---------------------------------------------------------------------------

std::vector<std::array<long, 3>> count_tiles(const std::array<std::vector<Tube>, 3>& fams,
                                             const Tiling& tiling) {
    std::vector<std::array<long, 3>> out(tiling.size(), {0, 0, 0});
    double rho = tiling.prototype.bounding_radius();
    for (std::size_t i = 0; i < tiling.size(); ++i) {
        Parallelepiped cell = tiling.cell(i);
        for (int n = 0; n < 3; ++n) {
            long c = 0;
            for (const Tube& tb : fams[static_cast<size_t>(n)]) {
                if (point_line_distance(cell.center, tb.anchor, tb.direction) > rho + tb.radius)
                    continue;
                if (line_parallelepiped_distance(tb.anchor, tb.direction, cell) <= tb.radius) ++c;
            }
            out[i][static_cast<size_t>(n)] = c;
        }
    }
    return out;
}

DyadicBuckets bucket_cells(const std::array<std::vector<Tube>, 3>& fams, const Tiling& tiling) {
    DyadicBuckets b;
    b.tiling = tiling;
    b.counts = count_tiles(fams, tiling);
    for (std::size_t i = 0; i < b.counts.size(); ++i) {
        const auto& c = b.counts[i];
        std::array<long, 3> key;
        if (c[0] == 0 || c[1] == 0 || c[2] == 0)
            key = {0, 0, 0};  // reserved empty bucket
        else
            key = {dyadic_anchor(c[0]), dyadic_anchor(c[1]), dyadic_anchor(c[2])};
        b.buckets[key].push_back(i);
    }
    return b;
}

const std::array<long, 3>* DyadicBuckets::modal_anchor() const {
    const std::array<long, 3>* best = nullptr;
    std::size_t best_n = 0;
    for (const auto& [key, ids] : buckets) {
        if (key[0] == 0) continue;
        if (ids.size() > best_n) {
            best_n = ids.size();
            best = &key;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Directional closure
// ---------------------------------------------------------------------------

std::array<std::vector<Tube>, 3> directional_closure(const TriFamily& f, double lambda,
                                                     const Tiling& A, const Parallelepiped* B) {
    std::array<std::vector<Tube>, 3> out;
    const double radius = std::exp2(lambda);
    // essentially-distinct translates sit one diameter apart
    const double pitch = 2.0 * radius;
    double rho = A.prototype.bounding_radius();

    for (int n = 0; n < 3; ++n) {
        std::map<std::array<double, 3>, int> dir_id;
        std::unordered_map<long long, char> emitted;
        auto pack = [](int d, long k1, long k2) {
            return ((static_cast<long long>(d) & 0xffff) << 44) |
                   ((k1 + (1L << 20)) << 22) | (k2 + (1L << 20));
        };

        for (std::size_t ti = 0; ti < A.size(); ++ti) {
            Parallelepiped cell = A.cell(ti);
            if (B && !half_open_center_in(*B, cell.center)) continue;
            for (const Tube& tb : f.families[static_cast<size_t>(n)]) {
                if (point_line_distance(cell.center, tb.anchor, tb.direction) > rho + tb.radius)
                    continue;
                if (line_parallelepiped_distance(tb.anchor, tb.direction, cell) > tb.radius)
                    continue;
                const Vec3 d = tb.direction;
                auto it = dir_id.emplace(std::array<double, 3>{d.x, d.y, d.z},
                                         static_cast<int>(dir_id.size())).first;
                int id = it->second;
                // global transverse lattice for this direction
                Vec3 ref = std::fabs(d.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
                Vec3 b1 = d.cross(ref).normalized();
                Vec3 b2 = d.cross(b1);
                double c1 = cell.center.dot(b1), c2 = cell.center.dot(b2);
                long k1c = std::lround(c1 / pitch), k2c = std::lround(c2 / pitch);
                long reach = static_cast<long>(std::ceil(rho / pitch)) + 2;
                for (long k1 = k1c - reach; k1 <= k1c + reach; ++k1)
                    for (long k2 = k2c - reach; k2 <= k2c + reach; ++k2) {
                        long long key = pack(id, k1, k2);
                        if (emitted.count(key)) continue;
                        Tube fat{d, b1 * (static_cast<double>(k1) * pitch) +
                                        b2 * (static_cast<double>(k2) * pitch),
                                 radius};
                        if (line_parallelepiped_distance(fat.anchor, fat.direction, cell) >
                            fat.radius)
                            continue;
                        emitted[key] = 1;
                        out[static_cast<size_t>(n)].push_back(fat);
                    }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Census primitives
// ---------------------------------------------------------------------------

namespace {

long modal_anchor_of(const std::vector<long>& values) {
    std::map<long, std::size_t> pop;
    for (long v : values)
        if (v > 0) ++pop[dyadic_anchor(v)];
    long best = 0;
    std::size_t best_n = 0;
    for (const auto& [a, nn] : pop)
        if (nn > best_n) {
            best_n = nn;
            best = a;
        }
    return best;
}

int ratio_class_exp(double x) {
    if (x <= 0) return -1;
    return static_cast<int>(std::floor(-std::log2(std::min(1.0, x)) + 1e-12));
}

double modal_ratio_class(const std::vector<double>& ratios) {
    std::map<int, std::size_t> pop;
    for (double x : ratios) {
        int k = ratio_class_exp(x);
        if (k >= 0) ++pop[k];
    }
    int best = -1;
    std::size_t best_n = 0;
    for (const auto& [k, nn] : pop)
        if (nn > best_n) {
            best_n = nn;
            best = k;
        }
    return best < 0 ? 0.0 : std::exp2(-best);
}

Parallelepiped shape_cell(const Frame& fr, double e1exp, double e2exp, double e3exp,
                          const Vec3& center) {
    Parallelepiped p;
    p.frame = fr;
    p.side_exponents = {e1exp, e2exp, e3exp};
    p.center = center;
    return p;
}

}  // namespace

MuCensus measure_mu(const Tiling& Ptiling, const Frame& fr, double lambda, int j, int t, int r,
                    double E_s, double F_s,
                    const std::function<bool(const Parallelepiped&)>& occupied,
                    const std::vector<std::size_t>* candidates) {
    MuCensus out;
    std::vector<char> active(Ptiling.size(), candidates ? 0 : 1);
    if (candidates)
        for (std::size_t id : *candidates) active[id] = 1;
    struct P1Data {
        std::vector<long> p2_counts;
    };
    struct PData {
        std::vector<P1Data> p1s;
    };
    std::vector<PData> data(Ptiling.size());
    std::vector<long> all_p2_counts;

    Parallelepiped p1proto = shape_cell(fr, lambda, lambda, j + lambda, {0, 0, 0});
    Parallelepiped p2proto = shape_cell(fr, lambda, lambda, r + lambda, {0, 0, 0});
    Parallelepiped ppproto = shape_cell(fr, lambda, lambda, lambda, {0, 0, 0});

    for (std::size_t pi = 0; pi < Ptiling.size(); ++pi) {
        if (!active[pi]) continue;
        Parallelepiped P = Ptiling.cell(pi);
        Tiling t1 = subdivide(P, p1proto);
        PData pd;
        for (std::size_t i1 = 0; i1 < t1.size(); ++i1) {
            Parallelepiped P1 = t1.cell(i1);
            Tiling t2 = subdivide(P1, p2proto);
            P1Data d1;
            for (std::size_t i2 = 0; i2 < t2.size(); ++i2) {
                Parallelepiped P2 = t2.cell(i2);
                Tiling tp = subdivide(P2, ppproto);
                long c = 0;
                for (std::size_t ip = 0; ip < tp.size(); ++ip)
                    if (occupied(tp.cell(ip))) ++c;
                d1.p2_counts.push_back(c);
                if (c > 0) {
                    all_p2_counts.push_back(c);
                    out.occupied_cells += c;
                }
            }
            pd.p1s.push_back(std::move(d1));
        }
        data[pi] = std::move(pd);
    }

    long mu3cls = modal_anchor_of(all_p2_counts);
    if (mu3cls == 0) return out;  // empty census: mu = 0 sentinel

    std::vector<long> all_p1_counts;
    for (auto& pd : data)
        for (auto& d1 : pd.p1s) {
            long c2 = 0;
            for (long c : d1.p2_counts)
                if (c > 0 && dyadic_anchor(c) == mu3cls) ++c2;
            if (c2 > 0) all_p1_counts.push_back(c2);
        }
    long mu2cls = modal_anchor_of(all_p1_counts);

    std::vector<long> per_p(Ptiling.size(), 0);
    std::vector<long> all_p_counts;
    for (std::size_t pi = 0; pi < Ptiling.size(); ++pi) {
        if (!active[pi]) continue;
        long c1 = 0;
        for (auto& d1 : data[pi].p1s) {
            long c2 = 0;
            for (long c : d1.p2_counts)
                if (c > 0 && dyadic_anchor(c) == mu3cls) ++c2;
            if (c2 > 0 && dyadic_anchor(c2) == mu2cls) ++c1;
        }
        per_p[pi] = c1;
        if (c1 > 0) all_p_counts.push_back(c1);
    }
    long mu1cls = modal_anchor_of(all_p_counts);
    for (std::size_t pi = 0; pi < Ptiling.size(); ++pi)
        if (per_p[pi] > 0 && dyadic_anchor(per_p[pi]) == mu1cls) out.qualifying.push_back(pi);
    out.per_p_count = per_p;

    out.mu3 = static_cast<double>(mu3cls);
    out.mu2 = static_cast<double>(mu2cls) / std::exp2(j * (1.0 - E_s));
    out.mu1 = static_cast<double>(mu1cls) / std::exp2(2.0 * t * (1.0 - F_s));
    return out;
}

std::array<double, 3> measure_beta(const std::array<std::vector<Tube>, 3>& fams,
                                   const Parallelepiped& P,
                                   const std::vector<Parallelepiped>& target_cells) {
    std::array<double, 3> out{0, 0, 0};
    double rho = P.bounding_radius();
    for (int n = 0; n < 3; ++n) {
        long denom = 0, num = 0;
        for (const Tube& tb : fams[static_cast<size_t>(n)]) {
            if (point_line_distance(P.center, tb.anchor, tb.direction) > rho + tb.radius)
                continue;
            if (line_parallelepiped_distance(tb.anchor, tb.direction, P) > tb.radius) continue;
            ++denom;
            for (const auto& cell : target_cells) {
                if (point_line_distance(cell.center, tb.anchor, tb.direction) >
                    cell.bounding_radius() + tb.radius)
                    continue;
                if (line_parallelepiped_distance(tb.anchor, tb.direction, cell) <= tb.radius) {
                    ++num;
                    break;
                }
            }
        }
        if (denom == 0) throw std::runtime_error("measure_beta: no tubes meet P");
        out[static_cast<size_t>(n)] = static_cast<double>(num) / static_cast<double>(denom);
    }
    return out;
}

LValue compute_L(const std::vector<Tube>& fam3, const std::vector<Parallelepiped>& B, double R32,
                 double cap) {
    if (R32 <= 0) throw std::invalid_argument("compute_L: R_{3,2,s} must be positive");
    long cnt = 0;
    for (const Tube& tb : fam3) {
        for (const auto& cell : B) {
            if (point_line_distance(cell.center, tb.anchor, tb.direction) >
                cell.bounding_radius() + tb.radius)
                continue;
            if (line_parallelepiped_distance(tb.anchor, tb.direction, cell) <= tb.radius) {
                ++cnt;
                break;
            }
        }
    }
    LValue v;
    v.L = static_cast<double>(cnt) / R32;
    v.in_range = v.L >= 1.0 - 1e-9 && v.L <= cap * (1.0 + 1e-9);
    return v;
}

// ---------------------------------------------------------------------------
// build_Bsets
// ---------------------------------------------------------------------------

namespace {

struct UnitIndexSet {
    std::unordered_set<long long> keys;
    const Frame* fr = nullptr;
    static long long pack(long a, long b, long c) {
        return ((a + (1LL << 20)) << 42) | ((b + (1LL << 20)) << 21) | (c + (1LL << 20));
    }
    long long key_of(const Vec3& center) const {
        Vec3 u = fr->coords(center);
        return pack(std::lround(u.x), std::lround(u.y), std::lround(u.z));
    }
    bool contains(const Vec3& center) const { return keys.count(key_of(center)) > 0; }

    // does a unit-sized frame cell centered here overlap (with interior) any
    // selected unit cell of the global lattice?  The two lattices may be offset
    // by half a cell, so up to eight neighbours qualify.
    bool overlaps_unit_cell(const Vec3& center) const {
        Vec3 u = fr->coords(center);
        long base_k[3] = {static_cast<long>(std::floor(u.x)), static_cast<long>(std::floor(u.y)),
                          static_cast<long>(std::floor(u.z))};
        for (long dx = 0; dx <= 1; ++dx)
            for (long dy = 0; dy <= 1; ++dy)
                for (long dz = 0; dz <= 1; ++dz) {
                    long kx = base_k[0] + dx, ky = base_k[1] + dy, kz = base_k[2] + dz;
                    if (!keys.count(pack(kx, ky, kz))) continue;
                    if (std::fabs(u.x - kx) < 1.0 - 1e-9 && std::fabs(u.y - ky) < 1.0 - 1e-9 &&
                        std::fabs(u.z - kz) < 1.0 - 1e-9)
                        return true;
                }
        return false;
    }
};

bool cell_overlaps_any(const Parallelepiped& c, const std::vector<Parallelepiped>& cells) {
    for (const auto& o : cells) {
        if ((c.center - o.center).norm() > c.bounding_radius() + o.bounding_radius()) continue;
        if (parallelepipeds_overlap(c, o)) return true;
    }
    return false;
}

}  // namespace

std::pair<BSets, DensityProfile> build_Bsets(const TriFamily& f, const ScaleSchedule& sched,
                                             const BSetOptions& opt) {
    const int S = sched.S;
    const int j = sched.j, t = sched.t, r = sched.r;
    const Frame fr = make_frame(f.params.w, f.params.m);
    const double Rbox = sched.R();

    BSets bs;
    bs.s0 = opt.s0;
    DensityProfile profile;
    profile.params = f.params;
    profile.schedule = sched;
    profile.scales.resize(static_cast<size_t>(S));
    for (int s = 1; s <= S; ++s) {
        ScaleData& sd = profile.at(s);
        sd.s = s;
        sd.M = sched.M[static_cast<size_t>(s)];
        sd.N = sched.N[static_cast<size_t>(s)];
        sd.E = sched.E[static_cast<size_t>(s)];
        sd.F = sched.F[static_cast<size_t>(s)];
        sd.lambda = sched.lambda(s);
    }
    bs.A1.resize(static_cast<size_t>(S));
    bs.A2.resize(static_cast<size_t>(S));

    auto fail = [&](int s, const std::string& why) {
        bs.truncated = true;
        bs.note = "truncated at scale " + std::to_string(s) + ": " + why;
        profile.at(s).note = why;
        profile.at(s).populated = false;
    };

    // ---- scale 1 base selection: unit cells -------------------------------
    Parallelepiped unit_proto = shape_cell(fr, 0, 0, 0, {0, 0, 0});
    Tiling U = tile_cube(Rbox, unit_proto);
    DyadicBuckets ub = bucket_cells(f.families, U);
    const auto* modal1 = ub.modal_anchor();
    if (!modal1) {
        fail(1, "all unit buckets empty");
        return {bs, profile};
    }
    for (int n = 0; n < 3; ++n)
        profile.at(1).R1[static_cast<size_t>(n)] = static_cast<double>((*modal1)[static_cast<size_t>(n)]);

    const long pe1 = 1L << t, pe3 = 1L << (j + t), p1e3 = 1L << j, p2e3 = 1L << r;
    (void)pe3;
    auto keep_unit = [&](const std::array<int64_t, 3>& k) {
        auto mod = [](long a, long m) { return m <= 1 ? 0L : ((a % m) + m) % m; };
        long e1pos = mod(k[0], pe1);
        long p2 = mod(k[2], p1e3) / p2e3;
        long uin = mod(k[2], p2e3);
        return e1pos % opt.keep_every_col == 0 && p2 % opt.keep_every_p2 == 0 &&
               uin % opt.keep_every_unit == 0;
    };
    UnitIndexSet base;
    base.fr = &fr;
    for (std::size_t id : ub.buckets.at(*modal1)) {
        if (!keep_unit(U.indices[id])) continue;
        bs.A2[0].push_back(U.cell(id));
        base.keys.insert(
            UnitIndexSet::pack(U.indices[id][0], U.indices[id][1], U.indices[id][2]));
    }
    if (bs.A2[0].empty()) {
        fail(1, "base selection A*[1] empty");
        return {bs, profile};
    }

    std::vector<Tiling> Ptil(static_cast<size_t>(S) + 1);
    std::vector<std::array<std::vector<Tube>, 3>> fams_s(static_cast<size_t>(S) + 1);
    fams_s[1] = f.families;  // lambda_1 = 0

    // Running intersection mass: the unit cells of the chain built so far.
    // Every pigeonhole below picks the dyadic class carrying the most of this
    // mass, which keeps the chain nonempty whenever the base selection is.
    std::vector<Parallelepiped> cur_B = bs.A2[0];
    auto weight_of = [&](const Parallelepiped& cell) -> long {
        long w = 0;
        for (const auto& u : cur_B)
            if (cell_inside(u, cell)) ++w;
        return w;
    };
    auto restrict_cur_B = [&](const std::vector<Parallelepiped>& cells) {
        std::vector<Parallelepiped> next;
        for (const auto& u : cur_B)
            for (const auto& c : cells)
                if (cell_inside(u, c)) {
                    next.push_back(u);
                    break;
                }
        cur_B = std::move(next);
    };

    // ---- A_{1,s}: sequential mass-weighted pigeonholing over P cells.  For
    // s = S the selection is Q_R itself and the census is informational only.
    auto build_A1 = [&](int s, bool soft) -> bool {
        double lam = sched.lambda(s);
        Parallelepiped pproto = shape_cell(fr, t + lam, lam, j + t + lam, {0, 0, 0});
        Ptil[static_cast<size_t>(s)] = tile_cube(Rbox, pproto);
        const Tiling& PT = Ptil[static_cast<size_t>(s)];
        ScaleData& sd = profile.at(s);
        auto bail = [&](const std::string& why) {
            if (soft) {
                sd.note = why + " (top-scale census, informational)";
                return true;
            }
            fail(s, why);
            return false;
        };

        const auto& A2s = bs.A2[static_cast<size_t>(s - 1)];
        std::function<bool(const Parallelepiped&)> occ;
        if (s == 1)
            occ = [&](const Parallelepiped& c) { return base.overlaps_unit_cell(c.center); };
        else
            occ = [&](const Parallelepiped& c) { return cell_overlaps_any(c, A2s); };

        // stage 0: P cells carrying chain mass
        std::vector<long> wt(PT.size(), 0);
        std::vector<std::size_t> survivors;
        for (std::size_t pi = 0; pi < PT.size(); ++pi) {
            wt[pi] = weight_of(PT.cell(pi));
            if (wt[pi] > 0) survivors.push_back(pi);
        }
        if (survivors.empty()) return bail("no P cell carries chain mass");

        // stage 1: nested census against A_{2,s}; the final level is re-chosen
        // weighted by chain mass
        MuCensus mc = measure_mu(PT, fr, lam, j, t, r, sd.E, sd.F, occ, &survivors);
        if (mc.mu3 == 0) return bail("empty mu census");
        {
            std::map<long, long> classw;
            for (std::size_t pi : survivors)
                if (mc.per_p_count[pi] > 0) classw[dyadic_anchor(mc.per_p_count[pi])] += wt[pi];
            if (classw.empty()) return bail("mu1 census empty");
            long mu1cls = classw.begin()->first;
            long bw = 0;
            for (auto& [cls, w] : classw)
                if (w > bw) {
                    bw = w;
                    mu1cls = cls;
                }
            sd.mu[0] = static_cast<double>(mu1cls) / std::exp2(2.0 * t * (1.0 - sd.F));
            sd.mu[1] = mc.mu2;
            sd.mu[2] = mc.mu3;
            std::vector<std::size_t> next;
            for (std::size_t pi : survivors)
                if (mc.per_p_count[pi] > 0 && dyadic_anchor(mc.per_p_count[pi]) == mu1cls)
                    next.push_back(pi);
            survivors = std::move(next);
        }

        // stage 2: per-family beta_{n,1,s} classes, one family at a time
        std::vector<std::array<double, 3>> per_p(PT.size(), {-1, -1, -1});
        for (std::size_t pi : survivors) {
            Parallelepiped P = PT.cell(pi);
            std::vector<Parallelepiped> inside;
            for (const auto& c : A2s)
                if (half_open_center_in(P, c.center)) inside.push_back(c);
            try {
                per_p[pi] = measure_beta(f.families, P, inside);
            } catch (const std::runtime_error&) {
            }
        }
        for (int n = 0; n < 3; ++n) {
            std::map<int, long> classw;
            for (std::size_t pi : survivors) {
                int e = ratio_class_exp(per_p[pi][static_cast<size_t>(n)]);
                if (e >= 0) classw[e] += wt[pi];
            }
            if (classw.empty()) return bail("beta_{n,1} census empty");
            int cls = classw.begin()->first;
            long bw = 0;
            for (auto& [e, w] : classw)
                if (w > bw) {
                    bw = w;
                    cls = e;
                }
            sd.beta1[n] = std::exp2(-cls);
            std::vector<std::size_t> next;
            for (std::size_t pi : survivors)
                if (ratio_class_exp(per_p[pi][static_cast<size_t>(n)]) == cls) next.push_back(pi);
            survivors = std::move(next);
        }

        // stage 3: P*[s] bucket from the scale-s (fattened) counts; anchors are
        // recorded at every scale, the filter applies for s >= 2 only
        {
            auto fcounts = count_tiles(fams_s[static_cast<size_t>(s)], PT);
            std::map<std::array<long, 3>, long> classw;
            for (std::size_t pi : survivors) {
                const auto& c = fcounts[pi];
                if (c[0] == 0 || c[1] == 0 || c[2] == 0) continue;
                classw[{dyadic_anchor(c[0]), dyadic_anchor(c[1]), dyadic_anchor(c[2])}] += wt[pi];
            }
            if (classw.empty()) return bail("P-cell bucket empty among survivors");
            std::array<long, 3> modal = classw.begin()->first;
            long bw = 0;
            for (auto& [key, w] : classw)
                if (w > bw) {
                    bw = w;
                    modal = key;
                }
            for (int n = 0; n < 3; ++n)
                sd.R2[static_cast<size_t>(n)] = static_cast<double>(modal[static_cast<size_t>(n)]);
            if (s >= 2) {
                std::vector<std::size_t> next;
                for (std::size_t pi : survivors) {
                    const auto& c = fcounts[pi];
                    if (c[0] > 0 && c[1] > 0 && c[2] > 0 &&
                        std::array<long, 3>{dyadic_anchor(c[0]), dyadic_anchor(c[1]),
                                            dyadic_anchor(c[2])} == modal)
                        next.push_back(pi);
                }
                survivors = std::move(next);
            }
        }

        for (std::size_t pi : survivors) bs.A1[static_cast<size_t>(s - 1)].push_back(PT.cell(pi));
        if (!soft) sd.populated = true;
        if (s <= S - 1) {
            if (bs.A1[static_cast<size_t>(s - 1)].empty()) return bail("A_{1,s} empty");
            restrict_cur_B(bs.A1[static_cast<size_t>(s - 1)]);
            if (cur_B.empty()) return bail("chain mass lost at A_{1,s}");
        }
        return true;
    };

    // ---- A_{2,s+1}: same scheme over midcells ---------------------------------
    auto build_A2 = [&](int snext) -> bool {
        int s = snext - 1;
        double lamprev = sched.lambda(s), lamnext = sched.lambda(snext);
        double Ej = sched.E[static_cast<size_t>(snext)] * j;
        double Ft = sched.F[static_cast<size_t>(snext)] * t;
        Parallelepiped midproto =
            shape_cell(fr, Ej + t + lamprev, Ej + Ft + lamprev, j + t + lamprev, {0, 0, 0});
        Tiling MT;
        if (snext == S) {
            // the top scale is Q_R itself: one frame-aligned cell covering the box
            Parallelepiped top = shape_cell(fr, j + t + lamprev + 1, j + t + lamprev + 1,
                                            j + t + lamprev + 1, {0, 0, 0});
            MT.prototype = top;
            MT.host_center = {0, 0, 0};
            MT.offsets = {Vec3{0, 0, 0}};
            MT.indices = {{0, 0, 0}};
        } else {
            MT = tile_cube(Rbox, midproto);
        }
        ScaleData& sd = profile.at(snext);

        fams_s[static_cast<size_t>(snext)] = directional_closure(f, lamnext, MT);

        std::vector<long> wt(MT.size(), 0);
        std::vector<std::size_t> survivors;
        for (std::size_t mi = 0; mi < MT.size(); ++mi) {
            wt[mi] = weight_of(MT.cell(mi));
            if (wt[mi] > 0) survivors.push_back(mi);
        }
        if (survivors.empty()) {
            fail(snext, "no midcell carries chain mass");
            return false;
        }

        // stage 1: L census over the P4 slabs of surviving midcells
        const auto& A1s = bs.A1[static_cast<size_t>(s - 1)];
        double R32 = profile.at(s).R2[2];
        double Lcap = std::exp2(Ej + r);
        // the P4 slabs split the midcell along e2 into 2^{F t} pieces
        Parallelepiped p4proto = MT.prototype;
        p4proto.side_exponents[1] -= Ft;
        auto Lexp = [](double L) { return static_cast<int>(std::floor(std::log2(L) + 1e-12)); };
        std::vector<std::vector<double>> p3L(MT.size());
        std::map<int, long> Lpop;  // class -> chain mass of the holding midcell
        for (std::size_t mi : survivors) {
            Parallelepiped P3 = MT.cell(mi);
            Tiling T4 = subdivide(P3, p4proto);
            for (std::size_t i4 = 0; i4 < T4.size(); ++i4) {
                Parallelepiped P4 = T4.cell(i4);
                std::vector<Parallelepiped> B;
                for (const auto& c : A1s)
                    if (half_open_center_in(P4, c.center)) B.push_back(c);
                if (B.empty()) continue;
                LValue lv = compute_L(fams_s[static_cast<size_t>(s)][2], B, R32, Lcap);
                if (lv.L <= 0) continue;
                if (!lv.in_range) sd.L_flagged = true;
                p3L[mi].push_back(lv.L);
                sd.L_values.push_back(lv.L);
                Lpop[Lexp(lv.L)] += std::max(1L, wt[mi]);
            }
        }
        if (Lpop.empty()) {
            fail(snext, "empty L census");
            return false;
        }
        int mu5exp = Lpop.begin()->first;
        long mu5w = 0;
        for (const auto& [e, w] : Lpop)
            if (w > mu5w) {
                mu5w = w;
                mu5exp = e;
            }
        std::vector<long> per_p3(MT.size(), 0);
        std::map<long, long> mu4w;
        for (std::size_t mi : survivors) {
            long c = 0;
            for (double L : p3L[mi])
                if (Lexp(L) == mu5exp) ++c;
            per_p3[mi] = c;
            if (c > 0) mu4w[dyadic_anchor(c)] += wt[mi];
        }
        if (mu4w.empty()) {
            fail(snext, "mu4 census empty");
            return false;
        }
        long mu4cls = mu4w.begin()->first;
        long bw4 = 0;
        for (auto& [cls, w] : mu4w)
            if (w > bw4) {
                bw4 = w;
                mu4cls = cls;
            }
        sd.mu[4] = std::exp2(mu5exp);
        sd.mu[3] = static_cast<double>(mu4cls);
        {
            std::vector<std::size_t> next;
            for (std::size_t mi : survivors)
                if (per_p3[mi] > 0 && dyadic_anchor(per_p3[mi]) == mu4cls) next.push_back(mi);
            survivors = std::move(next);
        }

        // stage 2: beta_{n,2,s+1}, one family at a time
        std::vector<std::array<double, 3>> per_m(MT.size(), {-1, -1, -1});
        for (std::size_t mi : survivors) {
            Parallelepiped P3 = MT.cell(mi);
            std::vector<Parallelepiped> inside;
            for (const auto& c : A1s)
                if (half_open_center_in(P3, c.center)) inside.push_back(c);
            try {
                per_m[mi] = measure_beta(f.families, P3, inside);
            } catch (const std::runtime_error&) {
            }
        }
        for (int n = 0; n < 3; ++n) {
            std::map<int, long> classw;
            for (std::size_t mi : survivors) {
                int e = ratio_class_exp(per_m[mi][static_cast<size_t>(n)]);
                if (e >= 0) classw[e] += wt[mi];
            }
            if (classw.empty()) {
                fail(snext, "beta_{n,2} census empty");
                return false;
            }
            int cls = classw.begin()->first;
            long bw = 0;
            for (auto& [e, w] : classw)
                if (w > bw) {
                    bw = w;
                    cls = e;
                }
            sd.beta2[n] = std::exp2(-cls);
            std::vector<std::size_t> next;
            for (std::size_t mi : survivors)
                if (ratio_class_exp(per_m[mi][static_cast<size_t>(n)]) == cls) next.push_back(mi);
            survivors = std::move(next);
        }

        // stage 3: A*[s+1] bucket class from the fattened counts
        {
            auto fcounts = count_tiles(fams_s[static_cast<size_t>(snext)], MT);
            std::map<std::array<long, 3>, long> classw;
            for (std::size_t mi : survivors) {
                const auto& c = fcounts[mi];
                if (c[0] == 0 || c[1] == 0 || c[2] == 0) continue;
                classw[{dyadic_anchor(c[0]), dyadic_anchor(c[1]), dyadic_anchor(c[2])}] += wt[mi];
            }
            if (classw.empty()) {
                fail(snext, "midcell bucket empty among survivors");
                return false;
            }
            std::array<long, 3> modal = classw.begin()->first;
            long bw = 0;
            for (auto& [key, w] : classw)
                if (w > bw) {
                    bw = w;
                    modal = key;
                }
            for (int n = 0; n < 3; ++n)
                sd.R1[static_cast<size_t>(n)] = static_cast<double>(modal[static_cast<size_t>(n)]);
            std::vector<std::size_t> next;
            for (std::size_t mi : survivors) {
                const auto& c = fcounts[mi];
                if (c[0] > 0 && c[1] > 0 && c[2] > 0 &&
                    std::array<long, 3>{dyadic_anchor(c[0]), dyadic_anchor(c[1]),
                                        dyadic_anchor(c[2])} == modal)
                    next.push_back(mi);
            }
            survivors = std::move(next);
        }

        for (std::size_t mi : survivors)
            bs.A2[static_cast<size_t>(snext - 1)].push_back(MT.cell(mi));
        if (bs.A2[static_cast<size_t>(snext - 1)].empty()) {
            fail(snext, "A_{2,s+1} empty");
            return false;
        }
        restrict_cur_B(bs.A2[static_cast<size_t>(snext - 1)]);
        if (cur_B.empty()) {
            fail(snext, "chain mass lost at A_{2,s+1}");
            return false;
        }
        if (snext == S) sd.populated = true;  // S(beta,mu,S) inputs are complete
        return true;
    };

    // ---- chain ---------------------------------------------------------------
    if (!build_A1(1, false)) return {bs, profile};
    for (int s = 1; s <= S - 1; ++s) {
        if (!build_A2(s + 1)) return {bs, profile};
        if (!build_A1(s + 1, s + 1 == S)) return {bs, profile};
    }

    // ---- emit B_{s0} as unit cells --------------------------------------------
    for (std::size_t ui = 0; ui < U.size(); ++ui) {
        Parallelepiped ucell = U.cell(ui);
        bool inside = true;
        for (int s = opt.s0; s <= S && inside; ++s) {
            if (s <= S - 1) {  // A_{1,S} = Q_R is automatic
                bool in1 = false;
                for (const auto& cell : bs.A1[static_cast<size_t>(s - 1)])
                    if (cell_inside(ucell, cell)) {
                        in1 = true;
                        break;
                    }
                if (!in1) {
                    inside = false;
                    break;
                }
            }
            bool in2 = false;
            if (s == 1)
                in2 = base.contains(ucell.center);
            else
                for (const auto& cell : bs.A2[static_cast<size_t>(s - 1)])
                    if (cell_inside(ucell, cell)) {
                        in2 = true;
                        break;
                    }
            if (!in2) inside = false;
        }
        if (inside) bs.B_cells.push_back(ucell);
    }
    return {bs, profile};
}

// ---------------------------------------------------------------------------
// Remark caps, refinement factors, theorem rhs
// ---------------------------------------------------------------------------

std::vector<std::string> DensityProfile::cap_violations() const {
    std::vector<std::string> bad;
    for (const auto& sd : scales) {
        if (!sd.populated) continue;
        auto chk = [&](bool ok, const char* what) {
            if (!ok) bad.push_back("s=" + std::to_string(sd.s) + ": " + what);
        };
        double tol = 1e-9;
        chk(sd.mu[0] <= std::exp2(2.0 * sd.F * schedule.t) + tol, "mu1 <= 2^{2 F_s t}");
        chk(sd.mu[1] <= std::exp2(sd.E * schedule.j - schedule.r) + tol, "mu2 <= 2^{E_s j - r}");
        chk(sd.mu[2] <= std::exp2(schedule.r) + tol, "mu3 <= 2^r");
        if (sd.s >= 2) {
            chk(sd.mu[3] <= std::exp2(sd.F * schedule.t) + tol, "mu4 <= 2^{F_s t}");
            chk(sd.mu[4] <= std::exp2(sd.E * schedule.j + schedule.r) + tol,
                "mu5 <= 2^{E_s j + r}");
        }
        for (int n = 0; n < 3; ++n) {
            chk(sd.beta1[n] <= 1.0 + tol, "beta_{n,1} <= 1");
            chk(sd.beta2[n] <= 1.0 + tol, "beta_{n,2} <= 1");
        }
    }
    return bad;
}

double refinement_factor(const DensityProfile& profile, int s) {
    const ScaleData& sd = profile.at(s);
    if (!sd.populated) throw std::runtime_error("refinement_factor: scale not populated");
    double b1 = sd.beta1[0] * sd.beta1[1] * sd.beta1[2];
    double b2 = sd.beta2[0] * sd.beta2[1] * sd.beta2[2];
    double mu_part = std::pow(sd.mu[0], 0.25) * std::sqrt(sd.mu[1]) * sd.mu[2];
    int S = profile.schedule.S;
    if (s == 1) return std::sqrt(b1) * mu_part;
    if (sd.mu[3] <= 0 || sd.mu[4] <= 0)
        throw std::runtime_error("refinement_factor: mu4/mu5 vanish at a dividing scale");
    double tail = 1.0 / (std::sqrt(sd.mu[3]) * std::sqrt(sd.mu[4]));
    if (s == S) return std::sqrt(b2) * tail;
    return std::min(1.0, std::sqrt(b1) * std::sqrt(b2) * mu_part * tail);
}

RefinementBound theorem_rhs(const DensityProfile& profile, double C) {
    RefinementBound rb;
    rb.C = C;
    int S = profile.schedule.S;
    rb.S_factors.resize(static_cast<size_t>(S));
    for (int s = 1; s <= S; ++s)
        rb.S_factors[static_cast<size_t>(s - 1)] = refinement_factor(profile, s);
    for (int s = 1; s <= S - 1; ++s)
        if (rb.S_factors[static_cast<size_t>(s)] <= 1.0 / C) rb.I.push_back(s);
    rb.I.push_back(S);
    double rhs = std::pow(C, static_cast<double>(rb.I.size())) * rb.S_factors[0];
    for (int si : rb.I)
        if (si != S) rhs *= rb.S_factors[static_cast<size_t>(si)];  // S(beta, mu, s_i + 1)
    rb.rhs = rhs;
    return rb;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::string profile_text_report(const DensityProfile& p) {
    std::ostringstream os;
    os << "density profile: r=" << p.params.r << " j=" << p.params.j << " t=" << p.params.t
       << " S=" << p.schedule.S << " log2R=" << p.schedule.log2R << "\n";
    for (const auto& sd : p.scales) {
        os << "scale s=" << sd.s << (sd.populated ? "" : " (unpopulated)") << "\n";
        if (!sd.note.empty()) os << "  note: " << sd.note << "\n";
        char buf[512];
        std::snprintf(buf, sizeof(buf), "  M=%g N=%g E=%g F=%g lambda=%g\n", sd.M, sd.N, sd.E,
                      sd.F, sd.lambda);
        os << buf;
        std::snprintf(buf, sizeof(buf), "  R1=(%g,%g,%g) R2=(%g,%g,%g)\n", sd.R1[0], sd.R1[1],
                      sd.R1[2], sd.R2[0], sd.R2[1], sd.R2[2]);
        os << buf;
        std::snprintf(buf, sizeof(buf), "  mu=(%g,%g,%g,%g,%g)\n", sd.mu[0], sd.mu[1], sd.mu[2],
                      sd.mu[3], sd.mu[4]);
        os << buf;
        std::snprintf(buf, sizeof(buf), "  beta1=(%g,%g,%g) beta2=(%g,%g,%g)  L_census=%zu%s\n",
                      sd.beta1[0], sd.beta1[1], sd.beta1[2], sd.beta2[0], sd.beta2[1],
                      sd.beta2[2], sd.L_values.size(), sd.L_flagged ? " [L flagged]" : "");
        os << buf;
        if (sd.populated) {
            std::snprintf(buf, sizeof(buf), "  S_factor=%g\n", refinement_factor(p, sd.s));
            os << buf;
        }
    }
    return os.str();
}

std::string profile_csv(const DensityProfile& p) {
    std::ostringstream os;
    os << "s,M,N,E,F,R11,R21,R31,R12,R22,R32,mu1,mu2,mu3,mu4,mu5,"
          "beta11,beta21,beta31,beta12,beta22,beta32,S_factor\n";
    for (const auto& sd : p.scales) {
        double sf = sd.populated ? refinement_factor(p, sd.s) : 0.0;
        char buf[768];
        std::snprintf(buf, sizeof(buf),
                      "%d,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g\n",
                      sd.s, sd.M, sd.N, sd.E, sd.F, sd.R1[0], sd.R1[1], sd.R1[2], sd.R2[0],
                      sd.R2[1], sd.R2[2], sd.mu[0], sd.mu[1], sd.mu[2], sd.mu[3], sd.mu[4],
                      sd.beta1[0], sd.beta1[1], sd.beta1[2], sd.beta2[0], sd.beta2[1],
                      sd.beta2[2], sf);
        os << buf;
    }
    return os.str();
}

}  // namespace kakeya
