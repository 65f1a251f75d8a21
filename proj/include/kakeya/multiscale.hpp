#pragma once

#include <functional>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "kakeya/family.hpp"
#include "kakeya/functional.hpp"
#include "kakeya/geometry.hpp"

namespace kakeya {

// ---------------------------------------------------------------------------
// Scale schedule
// ---------------------------------------------------------------------------

// 1-based arrays of length S+1 (index 0 unused).  M,N are the cumulative
// rescaling exponents; E,F the per-step increments.  Increments are snapped so
// that E_s*j and F_s*t are integers, which keeps every cell lattice nested.
struct ScaleSchedule {
    int S = 2;
    std::vector<double> M, N, E, F;
    double log2R = 0.0;  // realized top scale (requested R rounded up)
    int j = 0, t = 0, r = 0;
    double epsilon = 0.5;
    bool truncated = false;  // requested R was not reachable

    double lambda(int s) const { return M[static_cast<size_t>(s)] * j + N[static_cast<size_t>(s)] * t; }
    double R() const { return std::exp2(log2R); }
};

ScaleSchedule build_schedule(const TypeParams& params, double R);
// re-validation of every schedule invariant; returns human-readable violations
std::vector<std::string> validate_schedule(const ScaleSchedule& s);

// ---------------------------------------------------------------------------
// Dyadic buckets
// ---------------------------------------------------------------------------

inline long dyadic_anchor(long count) {
    if (count <= 0) return 0;
    long a = 1;
    while (a * 2 <= count) a *= 2;
    return a;
}

struct DyadicBuckets {
    Tiling tiling;
    std::vector<std::array<long, 3>> counts;  // per tile
    // anchor triple -> tile ids; {0,0,0} is the reserved empty bucket for
    // tiles with any zero count
    std::map<std::array<long, 3>, std::vector<std::size_t>> buckets;

    // most populous bucket among those with all anchors positive; ties break
    // toward the lexicographically smallest anchor
    const std::array<long, 3>* modal_anchor() const;
};

DyadicBuckets bucket_cells(const std::array<std::vector<Tube>, 3>& fams, const Tiling& tiling);
inline DyadicBuckets bucket_cells(const TriFamily& f, const Tiling& tiling) {
    return bucket_cells(f.families, tiling);
}

// per-tile |T_n(C)| with a line-walk prefilter; exact tube_meets decides
std::vector<std::array<long, 3>> count_tiles(const std::array<std::vector<Tube>, 3>& fams,
                                             const Tiling& tiling);

// ---------------------------------------------------------------------------
// Directional closure (fattened tube families)
// ---------------------------------------------------------------------------

// Realizes T_n[lambda](A, B): for each tile of A (meeting B when B is given)
// and each family tube meeting it, every radius-2^lambda translate of the
// tube's direction on the global 2^lambda lattice that still meets the tile.
std::array<std::vector<Tube>, 3> directional_closure(const TriFamily& f, double lambda,
                                                     const Tiling& A,
                                                     const Parallelepiped* B = nullptr);

// ---------------------------------------------------------------------------
// Density profile
// ---------------------------------------------------------------------------

struct ScaleData {
    int s = 0;
    double M = 0, N = 0, E = 1, F = 1, lambda = 0;
    double mu[5] = {1, 1, 1, 1, 1};
    double beta1[3] = {1, 1, 1};
    double beta2[3] = {1, 1, 1};  // defined for s >= 2
    double R1[3] = {0, 0, 0};
    double R2[3] = {0, 0, 0};
    std::vector<double> L_values;  // census L(B) histogram at this scale
    bool L_flagged = false;        // some L left [1, 2^{E j + r}]
    bool populated = false;
    std::string note;
};

struct DensityProfile {
    TypeParams params;
    ScaleSchedule schedule;
    std::vector<ScaleData> scales;  // index s-1

    const ScaleData& at(int s) const { return scales[static_cast<size_t>(s - 1)]; }
    ScaleData& at(int s) { return scales[static_cast<size_t>(s - 1)]; }
    // Remark caps; empty when all hold
    std::vector<std::string> cap_violations() const;
};

struct BSets {
    // selected cells per scale, index s-1; A1 at s = S is conceptually Q_R and
    // kept empty here
    std::vector<std::vector<Parallelepiped>> A1, A2;
    std::vector<Parallelepiped> B_cells;  // the emitted unit-cell union
    int s0 = 1;
    bool truncated = false;
    std::string note;
};

struct BSetOptions {
    int s0 = 1;
    double C = 4.0;  // threshold constant used by the refinement index set
    // deterministic census-coordinate sparsifier for the base selection
    // A*[1]; 1 keeps everything
    int keep_every_col = 1;   // P1 columns along e1
    int keep_every_p2 = 1;    // P2 slabs along e3
    int keep_every_unit = 1;  // unit cells inside a P2
};

std::pair<BSets, DensityProfile> build_Bsets(const TriFamily& f, const ScaleSchedule& sched,
                                             const BSetOptions& opt = {});

// ---------------------------------------------------------------------------
// Census primitives (also used standalone by tests)
// ---------------------------------------------------------------------------

struct MuCensus {
    double mu1 = 0, mu2 = 0, mu3 = 0;
    std::vector<std::size_t> qualifying;  // P-cell ids matching all modal classes
    long occupied_cells = 0;              // P' cells meeting the target set
    std::vector<long> per_p_count;        // per P: count of mu2-class P1 cells
};

// Three-level nested census of P in 'Ptiling' against 'occupied' (the
// intersection test with the current A_{2,s} region).  When `candidates` is
// given, only those P cells enter the census populations and the qualifying
// set; the modal classes are then conditional on the candidate set.
MuCensus measure_mu(const Tiling& Ptiling, const Frame& fr, double lambda, int j, int t, int r,
                    double E_s, double F_s,
                    const std::function<bool(const Parallelepiped&)>& occupied,
                    const std::vector<std::size_t>* candidates = nullptr);

// tube-hitting ratio per family: tubes meeting P and target / tubes meeting P
std::array<double, 3> measure_beta(const std::array<std::vector<Tube>, 3>& fams,
                                   const Parallelepiped& P,
                                   const std::vector<Parallelepiped>& target_cells);

struct LValue {
    double L = 0.0;
    bool in_range = true;
};
LValue compute_L(const std::vector<Tube>& fam3, const std::vector<Parallelepiped>& B,
                 double R32, double cap);

// ---------------------------------------------------------------------------
// Refinement factors and the theorem right-hand side
// ---------------------------------------------------------------------------

double refinement_factor(const DensityProfile& profile, int s);

struct RefinementBound {
    std::vector<double> S_factors;  // index s-1
    std::vector<int> I;             // ordered, last element S
    double rhs = 0.0;
    double C = 4.0;
};

RefinementBound theorem_rhs(const DensityProfile& profile, double C);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::string profile_text_report(const DensityProfile& p);
std::string profile_csv(const DensityProfile& p);

}  // namespace kakeya
