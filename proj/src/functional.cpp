#include "kakeya/functional.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace kakeya {

int worker_count() {
    if (const char* env = std::getenv("KAKEYA_LAB_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

Grid make_grid(const Parallelepiped& region, double h, double pad, std::size_t voxel_budget) {
    if (h <= 0) throw std::invalid_argument("voxel size must be positive");
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (const Vec3& v : region.vertices()) {
        lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
        hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
    }
    lo = lo - Vec3{pad, pad, pad};
    hi = hi + Vec3{pad, pad, pad};
    Grid g;
    g.voxel_size = h;
    g.origin = lo;
    double ext[3] = {hi.x - lo.x, hi.y - lo.y, hi.z - lo.z};
    for (int i = 0; i < 3; ++i)
        g.dims[static_cast<size_t>(i)] = std::max(1, static_cast<int>(std::ceil(ext[i] / h - 1e-9)));
    if (g.total() > voxel_budget)
        throw std::runtime_error("voxel budget exceeded: need " + std::to_string(g.total()) +
                                 " voxels, budget " + std::to_string(voxel_budget));
    return g;
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

namespace {

inline double axis_component(const Vec3& v, int a) {
    return a == 0 ? v.x : (a == 1 ? v.y : v.z);
}

// Paint one tube into `out` restricted to slabs [slab_lo, slab_hi) along axis
// `dom`.  Candidate voxels come from the tube's slab crossing inflated by
// radius*sqrt(3)+h; membership is the exact center-in-tube predicate.
void paint_tube(const Tube& tb, const Grid& g, int dom, int slab_lo, int slab_hi,
                std::vector<std::uint32_t>& out) {
    const double h = g.voxel_size;
    const int a1 = (dom + 1) % 3, a2 = (dom + 2) % 3;
    const double dird = axis_component(tb.direction, dom);
    // slab cross-section is an ellipse with semi-major radius/|d_dom|
    const double margin = tb.radius / std::max(0.2, std::fabs(dird)) + h;
    for (int k = slab_lo; k < slab_hi; ++k) {
        double c = axis_component(g.origin, dom) + h * (k + 0.5);
        double s = (c - axis_component(tb.anchor, dom)) / dird;
        Vec3 p = tb.anchor + tb.direction * s;
        double p1 = axis_component(p, a1), p2 = axis_component(p, a2);
        int lo1 = std::max(0, static_cast<int>(std::floor((p1 - margin - axis_component(g.origin, a1)) / h - 0.5)));
        int hi1 = std::min(g.dims[static_cast<size_t>(a1)] - 1,
                           static_cast<int>(std::ceil((p1 + margin - axis_component(g.origin, a1)) / h - 0.5)));
        int lo2 = std::max(0, static_cast<int>(std::floor((p2 - margin - axis_component(g.origin, a2)) / h - 0.5)));
        int hi2 = std::min(g.dims[static_cast<size_t>(a2)] - 1,
                           static_cast<int>(std::ceil((p2 + margin - axis_component(g.origin, a2)) / h - 0.5)));
        int idx[3];
        idx[dom] = k;
        for (int i1 = lo1; i1 <= hi1; ++i1) {
            idx[a1] = i1;
            for (int i2 = lo2; i2 <= hi2; ++i2) {
                idx[a2] = i2;
                Vec3 ctr = g.center(idx[0], idx[1], idx[2]);
                if (tube_contains(tb, ctr)) ++out[g.index(idx[0], idx[1], idx[2])];
            }
        }
    }
}

int dominant_axis(const Vec3& d) {
    double ax = std::fabs(d.x), ay = std::fabs(d.y), az = std::fabs(d.z);
    if (ax >= ay && ax >= az) return 0;
    return ay >= az ? 1 : 2;
}

}  // namespace

CountField rasterize(const TriFamily& f, const Grid& g) {
    CountField cf;
    cf.grid = g;
    for (auto& c : cf.counts) c.assign(g.total(), 0);

    int nthreads = std::max(1, worker_count());
    for (int n = 0; n < 3; ++n) {
        // group tubes by dominant axis; within a phase threads own disjoint
        // slab ranges, so increments never race and results are exact
        std::array<std::vector<const Tube*>, 3> groups;
        for (const Tube& tb : f.families[static_cast<size_t>(n)])
            groups[static_cast<size_t>(dominant_axis(tb.direction))].push_back(&tb);
        for (int dom = 0; dom < 3; ++dom) {
            const auto& grp = groups[static_cast<size_t>(dom)];
            if (grp.empty()) continue;
            int slabs = g.dims[static_cast<size_t>(dom)];
            int workers = std::min(nthreads, slabs);
            std::vector<std::thread> pool;
            auto run = [&](int w) {
                int lo = static_cast<int>(static_cast<long long>(slabs) * w / workers);
                int hi = static_cast<int>(static_cast<long long>(slabs) * (w + 1) / workers);
                for (const Tube* tb : grp)
                    paint_tube(*tb, g, dom, lo, hi, cf.counts[static_cast<size_t>(n)]);
            };
            if (workers == 1) {
                run(0);
            } else {
                pool.reserve(static_cast<size_t>(workers));
                for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
                for (auto& th : pool) th.join();
            }
        }
    }
    return cf;
}

// ---------------------------------------------------------------------------
// Integrals
// ---------------------------------------------------------------------------

namespace {

// sqrt lookup for small counts; the integrand is sqrt(c1*c2*c3)
struct SqrtTable {
    std::vector<double> v;
    SqrtTable() {
        v.resize(4096);
        for (size_t i = 0; i < v.size(); ++i) v[i] = std::sqrt(static_cast<double>(i));
    }
    double operator()(std::uint32_t c) const {
        return c < v.size() ? v[c] : std::sqrt(static_cast<double>(c));
    }
};
const SqrtTable kSqrt;

}  // namespace

IntegralResult trilinear_integral(const CountField& cf, const Parallelepiped* region) {
    const Grid& g = cf.grid;
    Kahan acc;
    double vol_acc = 0.0;
    std::size_t idx = 0;
    for (int iz = 0; iz < g.dims[2]; ++iz)
        for (int iy = 0; iy < g.dims[1]; ++iy)
            for (int ix = 0; ix < g.dims[0]; ++ix, ++idx) {
                if (region && !region->contains(g.center(ix, iy, iz))) continue;
                vol_acc += 1.0;
                std::uint32_t c1 = cf.counts[0][idx];
                if (!c1) continue;
                std::uint32_t c2 = cf.counts[1][idx];
                if (!c2) continue;
                std::uint32_t c3 = cf.counts[2][idx];
                if (!c3) continue;
                acc.add(kSqrt(c1) * kSqrt(c2) * kSqrt(c3));
            }
    IntegralResult r;
    double h3 = g.voxel_size * g.voxel_size * g.voxel_size;
    r.value = acc.get() * h3;
    r.region_volume = vol_acc * h3;
    r.grid = g;
    return r;
}

double bilinear_integral(const CountField& cf, int fam_a, int fam_b,
                         const Parallelepiped* region) {
    const Grid& g = cf.grid;
    Kahan acc;
    std::size_t idx = 0;
    for (int iz = 0; iz < g.dims[2]; ++iz)
        for (int iy = 0; iy < g.dims[1]; ++iy)
            for (int ix = 0; ix < g.dims[0]; ++ix, ++idx) {
                if (region && !region->contains(g.center(ix, iy, iz))) continue;
                double ca = cf.counts[static_cast<size_t>(fam_a)][idx];
                double cb = cf.counts[static_cast<size_t>(fam_b)][idx];
                if (ca > 0 && cb > 0) acc.add(ca * cb);
            }
    return acc.get() * g.voxel_size * g.voxel_size * g.voxel_size;
}

IntegralResult integral_over_Bsets(const CountField& cf,
                                   const std::vector<Parallelepiped>& cells) {
    // reject overlapping cells (face contact is fine: cell interiors must be disjoint)
    for (size_t i = 0; i < cells.size(); ++i)
        for (size_t k = i + 1; k < cells.size(); ++k) {
            Parallelepiped a = cells[i], b = cells[k];
            for (auto& s : a.side_exponents) s += std::log2(1.0 - 1e-9);
            for (auto& s : b.side_exponents) s += std::log2(1.0 - 1e-9);
            if (parallelepipeds_overlap(a, b))
                throw std::invalid_argument("integral_over_Bsets: cells overlap");
        }
    IntegralResult total;
    total.grid = cf.grid;
    Kahan vsum, volsum;
    for (const auto& cell : cells) {
        IntegralResult r = trilinear_integral(cf, &cell);
        vsum.add(r.value);
        volsum.add(r.region_volume);
    }
    total.value = vsum.get();
    total.region_volume = volsum.get();
    return total;
}

std::array<long, 3> restricted_tube_count(const std::array<std::vector<Tube>, 3>& fams,
                                          const Parallelepiped& region) {
    std::array<long, 3> out{0, 0, 0};
    for (int n = 0; n < 3; ++n)
        for (const Tube& tb : fams[static_cast<size_t>(n)])
            if (tube_meets(tb, region)) ++out[static_cast<size_t>(n)];
    return out;
}

std::array<long, 3> restricted_tube_count(const TriFamily& f, const Parallelepiped& region) {
    return restricted_tube_count(f.families, region);
}

// ---------------------------------------------------------------------------
// Binary count dump
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'K', 'A', 'K', 'C', 'N', 'T', '0', '1'};

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void get(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
}
}  // namespace

void export_counts(const CountField& cf, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(kMagic, 8);
    for (int d : cf.grid.dims) put(os, static_cast<std::int32_t>(d));
    put(os, cf.grid.voxel_size);
    put(os, cf.grid.origin.x);
    put(os, cf.grid.origin.y);
    put(os, cf.grid.origin.z);
    for (const auto& arr : cf.counts)
        os.write(reinterpret_cast<const char*>(arr.data()),
                 static_cast<std::streamsize>(arr.size() * sizeof(std::uint32_t)));
}

CountField import_counts(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("bad count dump magic");
    CountField cf;
    for (auto& d : cf.grid.dims) {
        std::int32_t v;
        get(is, v);
        d = v;
    }
    get(is, cf.grid.voxel_size);
    get(is, cf.grid.origin.x);
    get(is, cf.grid.origin.y);
    get(is, cf.grid.origin.z);
    for (auto& arr : cf.counts) {
        arr.resize(cf.grid.total());
        is.read(reinterpret_cast<char*>(arr.data()),
                static_cast<std::streamsize>(arr.size() * sizeof(std::uint32_t)));
    }
    if (!is) throw std::runtime_error("truncated count dump");
    return cf;
}

}  // namespace kakeya
