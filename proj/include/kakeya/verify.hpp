#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kakeya/family.hpp"
#include "kakeya/functional.hpp"
#include "kakeya/multiscale.hpp"

namespace kakeya {

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct CheckReport {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double implied_constant = 0.0;  // lhs / rhs
    bool pass = false;
    bool vacuous = false;
    Grid grid;
    std::uint64_t seed = 0;
    std::string notes;
};

std::string render_report(const CheckReport& r);

struct SweepRow {
    int r = 0, j = 0, t = 0;
    double R = 0, theta = 0;
    std::uint64_t seed = 0;
    double lhs = 0, normalizer = 0, ratio = 0;
    double grid_h = 0;
    double runtime_ms = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    double slope = 0, intercept = 0, residual = 0;
    std::vector<std::string> gaps;  // skipped cells and why
};

std::string sweep_csv(const SweepResult& s);

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

// Three single-direction families packing [0, N]^3.  With the default spacing
// and radius the h = 1/4 voxel-centre counts are exactly 1 per family, so the
// orthonormal pack realizes the base-case equality.
TriFamily make_lw_pack(int N, const Vec3& v1, const Vec3& v2, const Vec3& v3,
                       double spacing = 1.0, double radius = 0.55);

// Tubes anchored uniformly inside the adapted cell P(j,t)[lambda0] centred at
// the origin; this is the concentration profile that saturates the
// theta^{-1/2} bound.  lambda0 >= 1 keeps the cell's thin axis wider than the
// tube diameter; counts are chosen so per-voxel depth stays a few units.
TriFamily make_structured_family(const TypeParams& params, std::uint64_t seed,
                                 int depth = 12, int lambda0 = 1);
// Axis-aligned integration box for the structured family (cell bbox + padding).
Parallelepiped structured_region(const TypeParams& params, double pad = 2.0, int lambda0 = 1);

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

// Loomis-Whitney base case over the pack's box.  Requires single-direction
// families; rejects zero wedge.
CheckReport check_loomis_whitney(const TriFamily& f, const Parallelepiped& box, double h,
                                 double ceiling = 2.0);

// Lemma-level chain at scale s: the cord inequality on the measured profile
// plus the three bilinear ingredient relations verified by direct integration
// over a representative selected P cell.
CheckReport check_cord(const TriFamily& f, const BSets& bsets, const DensityProfile& profile,
                       int s, double h, double ceiling = 64.0);

// Refined bound: lhs = sum over B_1 cells of the trilinear integral,
// normalized by prod |T_n|^{1/2}; rhs = theorem right-hand side at constant C.
CheckReport check_gtem(const TriFamily& f, const BSets& bsets, const DensityProfile& profile,
                       double C, double h);

struct SweepSpec {
    int j_lo = 0, j_hi = 5;
    int r_lo = 0, r_hi = 2;
    int t_lo = 0, t_hi = 3;
    int trials = 3;
    std::uint64_t seed = 1;
    double h = 0.25;
    double R_cap_log2 = 2.0;  // R <= 2^{j+t+R_cap_log2}
    std::size_t voxel_budget = std::size_t(1) << 24;
};

SweepResult sweep_theta(const SweepSpec& spec);

struct InductionReport {
    CheckReport m_ratio;    // M(s+lambda) <= ceiling * M(s)
    CheckReport tubr;       // the rescaled-count identity within factor 8
    CheckReport covering;   // translate covering with |A| <= ceiling
};

InductionReport check_induction_step(const TriFamily& f, int s, int lambda, double h,
                                     double m_ceiling = 4.0, double tubr_factor = 8.0,
                                     int cover_ceiling = 27);

// max over scale-s tiles of the normalized trilinear integral (the M(s)
// estimator; tiles that meet no tubes contribute zero)
double estimate_M(const TriFamily& f, int s, double h, int extra_random_tiles = 32,
                  std::uint64_t seed = 17);

}  // namespace kakeya
