#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kakeya/geometry.hpp"

namespace kakeya {

// ---------------------------------------------------------------------------
// Transversality certificate parameters
// ---------------------------------------------------------------------------

struct TypeParams {
    int r = 0, j = 0, t = 0;  // r <= j
    Vec2 w{1.0, 0.0};         // unit strip direction
    Vec2 m{0.5, 0.5};         // strip anchor in [0,2]^2
    double epsilon = 0.5;     // scale-schedule increment floor
    double theta = 1.0;       // derived wedge anchor

    void validate() const;
    double theta_anchor() const { return std::exp2(-(j + r + t)); }
};

// Placement that keeps the adapted parallelepiped close to axis-aligned, so
// downstream voxel grids stay small.
TypeParams default_params(int r, int j, int t, double epsilon = 0.5);

// One family's frequency region: nominal cap-and-strip pair plus the central
// band actually sampled (cap shrunk to its middle half, strip narrowed) so
// that every direction triple certifies.
struct Region {
    Cap cap;
    Strip strip;
    Vec2 line_anchor;   // point of the strip center line the band straddles
    Vec2 line_dir;      // unit, equals strip.direction
    double along_half = 0.0;
    double trans_half = 0.0;

    bool contains(const Vec2& xi) const;         // cap ∩ strip ∩ [0,2]^2
    bool band_contains(const Vec2& xi) const;    // the sampled sub-region
    Vec2 representative() const { return line_anchor; }
};

struct TriFamily {
    std::array<std::vector<Tube>, 3> families;
    std::array<std::vector<Vec2>, 3> source_xi;  // per-tube frequency points
    std::array<Region, 3> regions;
    TypeParams params;
    double R = 0.0;  // Q_R radius the anchors were drawn from
    std::uint64_t seed = 0;

    std::array<std::size_t, 3> sizes() const {
        return {families[0].size(), families[1].size(), families[2].size()};
    }
};

struct Certificate {
    double min_wedge = 0.0;
    double max_wedge = 0.0;
    long long sampled_triples = 0;
    double theta = 0.0;
    bool pass = false;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Deterministic placement of the three cap/strip regions.  Searches a small
// candidate list (coarse-cap side and rotation sign) and returns the first
// placement whose separations and wedge precheck pass; throws with the failed
// constraint named otherwise.
std::array<Region, 3> make_regions(const TypeParams& params);

// counts[n] tubes per family, directions from region samples, anchors uniform
// in Q_R.  Bit-identical output for a fixed seed.
TriFamily sample_family(const TypeParams& params, const std::array<int, 3>& counts,
                        double box_R, std::uint64_t seed);

Certificate certify(const TriFamily& f, long long max_triples = 2'000'000);

// Partition by refined caps/strips at refinement depth lambda; sub-regions are
// paired across families by their shared band index.
std::vector<TriFamily> decompose_subfamilies(const TriFamily& f, int lambda);

// ---------------------------------------------------------------------------
// Arrangement file (line-oriented text, 17 significant digits)
// ---------------------------------------------------------------------------

void write_arrangement(std::ostream& os, const TriFamily& f);
void write_arrangement_file(const std::string& path, const TriFamily& f);
TriFamily read_arrangement(std::istream& is);
TriFamily read_arrangement_file(const std::string& path);

// Deterministic uniform double in [0,1) from a standard mt19937_64 stream.
inline double next_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1p-53;
}
inline double next_in(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * next_unit(rng);
}

}  // namespace kakeya
