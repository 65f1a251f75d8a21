#pragma once

// Test-only brute-force counterparts of the production rasterizer.  Kept
// independent of the slab-bucketed path on purpose: the only shared code is
// the point-in-tube predicate itself.

#include "kakeya/functional.hpp"

namespace kakeya::oracle {

inline CountField naive_rasterize(const TriFamily& f, const Grid& g) {
    CountField cf;
    cf.grid = g;
    for (auto& c : cf.counts) c.assign(g.total(), 0);
    for (int n = 0; n < 3; ++n) {
        for (const Tube& tb : f.families[static_cast<size_t>(n)]) {
            std::size_t idx = 0;
            for (int iz = 0; iz < g.dims[2]; ++iz)
                for (int iy = 0; iy < g.dims[1]; ++iy)
                    for (int ix = 0; ix < g.dims[0]; ++ix, ++idx)
                        if (tube_contains(tb, g.center(ix, iy, iz)))
                            ++cf.counts[static_cast<size_t>(n)][idx];
        }
    }
    return cf;
}

// plain left-to-right summation, no compensation
inline double naive_trilinear(const CountField& cf, const Parallelepiped* region = nullptr) {
    const Grid& g = cf.grid;
    double sum = 0.0;
    std::size_t idx = 0;
    for (int iz = 0; iz < g.dims[2]; ++iz)
        for (int iy = 0; iy < g.dims[1]; ++iy)
            for (int ix = 0; ix < g.dims[0]; ++ix, ++idx) {
                if (region && !region->contains(g.center(ix, iy, iz))) continue;
                sum += std::sqrt(static_cast<double>(cf.counts[0][idx])) *
                       std::sqrt(static_cast<double>(cf.counts[1][idx])) *
                       std::sqrt(static_cast<double>(cf.counts[2][idx]));
            }
    return sum * g.voxel_size * g.voxel_size * g.voxel_size;
}

}  // namespace kakeya::oracle
