#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kakeya/family.hpp"
#include "kakeya/geometry.hpp"

namespace kakeya {

// ---------------------------------------------------------------------------
// Grid and count field
// ---------------------------------------------------------------------------

struct Grid {
    Vec3 origin;             // minimum corner; voxel centers at origin + h*(i+1/2)
    double voxel_size = 0.25;
    std::array<int, 3> dims{1, 1, 1};

    std::size_t total() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]);
    }
    // ix fastest, iz slowest
    std::size_t index(int ix, int iy, int iz) const {
        return (static_cast<std::size_t>(iz) * static_cast<std::size_t>(dims[1]) +
                static_cast<std::size_t>(iy)) *
                   static_cast<std::size_t>(dims[0]) +
               static_cast<std::size_t>(ix);
    }
    Vec3 center(int ix, int iy, int iz) const {
        return {origin.x + voxel_size * (ix + 0.5), origin.y + voxel_size * (iy + 0.5),
                origin.z + voxel_size * (iz + 0.5)};
    }
};

// Grid covering the axis-aligned bounding box of `region`, padded by `pad`.
Grid make_grid(const Parallelepiped& region, double h, double pad = 0.0,
               std::size_t voxel_budget = std::size_t(1) << 24);

struct CountField {
    Grid grid;
    std::array<std::vector<std::uint32_t>, 3> counts;
};

struct IntegralResult {
    double value = 0.0;
    double region_volume = 0.0;
    Grid grid;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Number of worker threads: KAKEYA_LAB_THREADS when set, else hardware count.
int worker_count();

// Voxel-center membership counts per family.  Slab-bucketed along each tube's
// dominant axis; cost is proportional to tube-voxel incidences.
CountField rasterize(const TriFamily& f, const Grid& g);

// h^3 * sum over voxels of prod_n counts[n]^{1/2}, compensated summation.
// When `region` is non-null only voxels whose centers lie inside it count.
IntegralResult trilinear_integral(const CountField& cf, const Parallelepiped* region = nullptr);

// Bilinear variant used by the cord-lemma ingredient checks.
double bilinear_integral(const CountField& cf, int fam_a, int fam_b,
                         const Parallelepiped* region = nullptr);

// Sum of the trilinear integral over pairwise-disjoint cells.
IntegralResult integral_over_Bsets(const CountField& cf,
                                   const std::vector<Parallelepiped>& cells);

// |T_n(region)| by exact tube-parallelepiped distance tests.
std::array<long, 3> restricted_tube_count(const TriFamily& f, const Parallelepiped& region);
std::array<long, 3> restricted_tube_count(const std::array<std::vector<Tube>, 3>& fams,
                                          const Parallelepiped& region);

// Binary dump: magic, dims, h, origin, then three row-major u32-LE arrays.
void export_counts(const CountField& cf, const std::string& path);
CountField import_counts(const std::string& path);

// Neumaier compensated accumulator.
struct Kahan {
    double sum = 0.0, comp = 0.0;
    void add(double v) {
        double t = sum + v;
        if (std::fabs(sum) >= std::fabs(v))
            comp += (sum - t) + v;
        else
            comp += (v - t) + sum;
        sum = t;
    }
    double get() const { return sum + comp; }
};

}  // namespace kakeya
