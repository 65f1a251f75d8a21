#include "kakeya/geometry.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

namespace kakeya {

bool strip_contains(const Strip& s, const Vec2& xi) {
    Vec2 d = xi - s.anchor;
    Vec2 rej = d - s.direction * d.dot(s.direction);
    return rej.norm() <= s.width();
}

Vec3 paraboloid_normal(const Vec2& xi) {
    Vec3 v{xi.x, xi.y, -1.0};
    return v.normalized();
}

double wedge3(const Vec3& v1, const Vec3& v2, const Vec3& v3) {
    return std::fabs(v1.dot(v2.cross(v3)));
}

double point_line_distance(const Vec3& p, const Vec3& anchor, const Vec3& dir) {
    Vec3 d = p - anchor;
    Vec3 rej = d - dir * d.dot(dir);
    return rej.norm();
}

bool tube_contains(const Tube& t, const Vec3& p) {
    return point_line_distance(p, t.anchor, t.direction) <= t.radius;
}

// ---------------------------------------------------------------------------
// Frame
// ---------------------------------------------------------------------------

static void invert3x3(const Vec3& a, const Vec3& b, const Vec3& c, double inv[3][3]) {
    // columns a,b,c
    double m[3][3] = {{a.x, b.x, c.x}, {a.y, b.y, c.y}, {a.z, b.z, c.z}};
    double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                 m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                 m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if (std::fabs(det) < 1e-12) throw std::invalid_argument("degenerate frame");
    double id = 1.0 / det;
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * id;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * id;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * id;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * id;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * id;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * id;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * id;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * id;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * id;
}

Frame Frame::from_axes(const Vec3& a, const Vec3& b, const Vec3& c) {
    Frame f;
    f.e1 = a.normalized();
    f.e2 = b.normalized();
    f.e3 = c.normalized();
    invert3x3(f.e1, f.e2, f.e3, f.inv);
    return f;
}

Frame Frame::axis_aligned() {
    return from_axes({1, 0, 0}, {0, 1, 0}, {0, 0, 1});
}

Vec3 Frame::coords(const Vec3& p) const {
    return {inv[0][0] * p.x + inv[0][1] * p.y + inv[0][2] * p.z,
            inv[1][0] * p.x + inv[1][1] * p.y + inv[1][2] * p.z,
            inv[2][0] * p.x + inv[2][1] * p.y + inv[2][2] * p.z};
}

Vec3 Frame::apply(const Vec3& u) const {
    return e1 * u.x + e2 * u.y + e3 * u.z;
}

double Frame::det() const {
    return e1.dot(e2.cross(e3));
}

Frame make_frame(const Vec2& w, const Vec2& m) {
    double wn = w.norm();
    if (std::fabs(wn - 1.0) > 1e-9) throw std::invalid_argument("w must be a unit vector");
    Vec3 e1{w.x, w.y, 0.0};
    Vec3 e3raw{m.x, m.y, -1.0};
    Vec3 e2raw = e1.cross(e3raw);
    if (e2raw.norm() < 1e-12) throw std::invalid_argument("degenerate frame: e2 vanishes");
    return Frame::from_axes(e1, e2raw, e3raw);
}

// ---------------------------------------------------------------------------
// Parallelepiped
// ---------------------------------------------------------------------------

double Parallelepiped::volume() const {
    return edge_length(0) * edge_length(1) * edge_length(2) * std::fabs(frame.det());
}

double Parallelepiped::bounding_radius() const {
    double r = 0.0;
    for (int sx = -1; sx <= 1; sx += 2)
        for (int sy = -1; sy <= 1; sy += 2)
            for (int sz = -1; sz <= 1; sz += 2) {
                Vec3 v = frame.e1 * (sx * half_length(0)) + frame.e2 * (sy * half_length(1)) +
                         frame.e3 * (sz * half_length(2));
                r = std::max(r, v.norm());
            }
    return r;
}

bool Parallelepiped::contains(const Vec3& p) const {
    Vec3 u = frame.coords(p - center);
    // closed box with a roundoff allowance on the faces
    auto inside = [](double v, double h) { return std::fabs(v) <= h * (1.0 + 1e-12) + 1e-12; };
    return inside(u.x, half_length(0)) && inside(u.y, half_length(1)) &&
           inside(u.z, half_length(2));
}

std::array<Vec3, 8> Parallelepiped::vertices() const {
    std::array<Vec3, 8> out;
    int k = 0;
    for (int sx = -1; sx <= 1; sx += 2)
        for (int sy = -1; sy <= 1; sy += 2)
            for (int sz = -1; sz <= 1; sz += 2)
                out[k++] = center + frame.e1 * (sx * half_length(0)) +
                           frame.e2 * (sy * half_length(1)) + frame.e3 * (sz * half_length(2));
    return out;
}

Parallelepiped Parallelepiped::translated(const Vec3& offset) const {
    Parallelepiped p = *this;
    p.center = center + offset;
    return p;
}

Parallelepiped Parallelepiped::rescaled(double lambda_shift) const {
    Parallelepiped p = *this;
    for (auto& s : p.side_exponents) s += lambda_shift;
    return p;
}

Parallelepiped make_parallelepiped(int j, int t, const Vec2& w, const Vec2& m, double E,
                                   double F, double lambda, const Vec3& a) {
    if (j < 0 || t < 0) throw std::invalid_argument("j,t must be non-negative");
    if (E < 0.0 || E > 1.0 || F < 0.0 || F > 1.0)
        throw std::invalid_argument("E,F must lie in [0,1]");
    Parallelepiped p;
    p.frame = make_frame(w, m);
    p.side_exponents = {E * j + t + lambda, E * j + F * t + lambda, j + t + lambda};
    p.center = a;
    return p;
}

Parallelepiped make_axis_cube(double R, const Vec3& center) {
    return make_axis_box(center, {R, R, R});
}

Parallelepiped make_axis_box(const Vec3& center, const Vec3& he) {
    if (he.x <= 0 || he.y <= 0 || he.z <= 0)
        throw std::invalid_argument("half extents must be positive");
    Parallelepiped p;
    p.frame = Frame::axis_aligned();
    p.side_exponents = {std::log2(2.0 * he.x), std::log2(2.0 * he.y), std::log2(2.0 * he.z)};
    p.center = center;
    return p;
}

// ---------------------------------------------------------------------------
// Line-parallelepiped distance (active-set enumeration of the convex QP)
// ---------------------------------------------------------------------------

namespace {

// least squares min |q + M x|^2 for an n x k matrix M (k <= 4), via normal
// equations with partial pivoting; returns false when singular.
bool solve_ls(const double M[3][4], int k, const Vec3& q, double* x) {
    double A[4][5];
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            A[i][j] = M[0][i] * M[0][j] + M[1][i] * M[1][j] + M[2][i] * M[2][j];
        }
        A[i][k] = -(M[0][i] * q.x + M[1][i] * q.y + M[2][i] * q.z);
    }
    for (int col = 0; col < k; ++col) {
        int piv = col;
        for (int r = col + 1; r < k; ++r)
            if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
        if (std::fabs(A[piv][col]) < 1e-13) return false;
        if (piv != col)
            for (int c = col; c <= k; ++c) std::swap(A[piv][c], A[col][c]);
        for (int r = 0; r < k; ++r) {
            if (r == col) continue;
            double f = A[r][col] / A[col][col];
            for (int c = col; c <= k; ++c) A[r][c] -= f * A[col][c];
        }
    }
    for (int i = 0; i < k; ++i) x[i] = A[i][k] / A[i][i];
    return true;
}

}  // namespace

double line_parallelepiped_distance(const Vec3& a, const Vec3& d, const Parallelepiped& P) {
    const Vec3 axes[3] = {P.frame.e1, P.frame.e2, P.frame.e3};
    const double h[3] = {P.half_length(0), P.half_length(1), P.half_length(2)};
    Vec3 b0 = a - P.center;

    double best = std::numeric_limits<double>::infinity();
    // clamp state per u_i: 0 free, 1 low, 2 high
    for (int c0 = 0; c0 < 3; ++c0)
        for (int c1 = 0; c1 < 3; ++c1)
            for (int c2 = 0; c2 < 3; ++c2) {
                int state[3] = {c0, c1, c2};
                double M[3][4];
                int k = 0;
                // column 0: direction
                M[0][k] = d.x;
                M[1][k] = d.y;
                M[2][k] = d.z;
                ++k;
                Vec3 q = b0;
                int freeIdx[3];
                int nfree = 0;
                for (int i = 0; i < 3; ++i) {
                    if (state[i] == 0) {
                        M[0][k] = -axes[i].x;
                        M[1][k] = -axes[i].y;
                        M[2][k] = -axes[i].z;
                        freeIdx[nfree++] = i;
                        ++k;
                    } else {
                        double ui = (state[i] == 1) ? -h[i] : h[i];
                        q = q - axes[i] * ui;
                    }
                }
                double x[4];
                if (!solve_ls(M, k, q, x)) continue;
                bool ok = true;
                for (int f = 0; f < nfree; ++f) {
                    double ui = x[f + 1];
                    if (ui < -h[freeIdx[f]] - 1e-9 || ui > h[freeIdx[f]] + 1e-9) {
                        ok = false;
                        break;
                    }
                }
                if (!ok) continue;
                Vec3 r = q + d * x[0];
                for (int f = 0; f < nfree; ++f) r = r - axes[freeIdx[f]] * x[f + 1];
                best = std::min(best, r.dot(r));
            }
    return std::sqrt(std::max(0.0, best));
}

bool tube_meets(const Tube& t, const Parallelepiped& P) {
    // bounding-sphere prefilter
    double dc = point_line_distance(P.center, t.anchor, t.direction);
    if (dc > P.bounding_radius() + t.radius) return false;
    return line_parallelepiped_distance(t.anchor, t.direction, P) <= t.radius;
}

// ---------------------------------------------------------------------------
// SAT overlap for parallelepipeds
// ---------------------------------------------------------------------------

namespace {

void project_onto(const Parallelepiped& P, const Vec3& axis, double& lo, double& hi) {
    double c = P.center.dot(axis);
    double r = std::fabs(P.frame.e1.dot(axis)) * P.half_length(0) +
               std::fabs(P.frame.e2.dot(axis)) * P.half_length(1) +
               std::fabs(P.frame.e3.dot(axis)) * P.half_length(2);
    lo = c - r;
    hi = c + r;
}

bool separated_on(const Parallelepiped& A, const Parallelepiped& B, const Vec3& axis) {
    double n = axis.norm();
    if (n < 1e-12) return false;
    Vec3 ax = axis * (1.0 / n);
    double alo, ahi, blo, bhi;
    project_onto(A, ax, alo, ahi);
    project_onto(B, ax, blo, bhi);
    // face contact is separation: lattice neighbours must not register as
    // overlapping
    double tol = 1e-9 * (1.0 + std::fabs(ahi) + std::fabs(bhi));
    return ahi < blo + tol || bhi < alo + tol;
}

}  // namespace

bool parallelepipeds_overlap(const Parallelepiped& A, const Parallelepiped& B) {
    const Vec3 ea[3] = {A.frame.e1, A.frame.e2, A.frame.e3};
    const Vec3 eb[3] = {B.frame.e1, B.frame.e2, B.frame.e3};
    // face normals: for spanned box along (a_i), faces are orthogonal to a_j x a_k
    for (int i = 0; i < 3; ++i) {
        if (separated_on(A, B, ea[(i + 1) % 3].cross(ea[(i + 2) % 3]))) return false;
        if (separated_on(A, B, eb[(i + 1) % 3].cross(eb[(i + 2) % 3]))) return false;
    }
    for (auto& u : ea)
        for (auto& v : eb)
            if (separated_on(A, B, u.cross(v))) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Tilings
// ---------------------------------------------------------------------------

static bool same_frame(const Frame& a, const Frame& b) {
    return (a.e1 - b.e1).norm() < 1e-9 && (a.e2 - b.e2).norm() < 1e-9 &&
           (a.e3 - b.e3).norm() < 1e-9;
}

Tiling tile(const Parallelepiped& host, const Parallelepiped& proto) {
    if (!same_frame(host.frame, proto.frame))
        throw std::invalid_argument("tile: host and prototype must share a frame");
    Tiling out;
    out.prototype = proto;
    out.host_center = host.center;
    const double L[3] = {proto.edge_length(0), proto.edge_length(1), proto.edge_length(2)};
    const double H[3] = {host.half_length(0), host.half_length(1), host.half_length(2)};
    // translate k covers frame-interval [k*L - L/2, k*L + L/2]; it meets the
    // host interval [-H, H] iff |k*L| < H + L/2 (open: skip measure-zero touch)
    int64_t kmax[3];
    for (int i = 0; i < 3; ++i) {
        kmax[i] = static_cast<int64_t>(std::floor((H[i] + L[i] / 2.0) / L[i] - 1e-12));
        if (kmax[i] < 0) kmax[i] = 0;
    }
    for (int64_t k0 = -kmax[0]; k0 <= kmax[0]; ++k0)
        for (int64_t k1 = -kmax[1]; k1 <= kmax[1]; ++k1)
            for (int64_t k2 = -kmax[2]; k2 <= kmax[2]; ++k2) {
                Vec3 off = proto.frame.e1 * (k0 * L[0]) + proto.frame.e2 * (k1 * L[1]) +
                           proto.frame.e3 * (k2 * L[2]);
                out.offsets.push_back(off);
                out.indices.push_back({k0, k1, k2});
            }
    return out;
}

Tiling subdivide(const Parallelepiped& host, const Parallelepiped& proto) {
    if (!same_frame(host.frame, proto.frame))
        throw std::invalid_argument("subdivide: host and prototype must share a frame");
    long q[3];
    for (int i = 0; i < 3; ++i) {
        double ratio = host.edge_length(i) / proto.edge_length(i);
        q[i] = std::lround(ratio);
        if (q[i] < 1 || std::fabs(ratio - q[i]) > 1e-9)
            throw std::invalid_argument("subdivide: edge ratios must be integers");
    }
    Tiling out;
    out.prototype = proto;
    out.host_center = host.center;
    const Frame& fr = proto.frame;
    for (long k0 = 0; k0 < q[0]; ++k0)
        for (long k1 = 0; k1 < q[1]; ++k1)
            for (long k2 = 0; k2 < q[2]; ++k2) {
                Vec3 off = fr.e1 * ((k0 + 0.5) * proto.edge_length(0) - host.half_length(0)) +
                           fr.e2 * ((k1 + 0.5) * proto.edge_length(1) - host.half_length(1)) +
                           fr.e3 * ((k2 + 0.5) * proto.edge_length(2) - host.half_length(2));
                out.offsets.push_back(off);
                out.indices.push_back({k0, k1, k2});
            }
    return out;
}

bool half_open_center_in(const Parallelepiped& cell, const Vec3& p) {
    Vec3 u = cell.frame.coords(p - cell.center);
    const double tol = 1e-9;
    return u.x >= -cell.half_length(0) - tol && u.x < cell.half_length(0) - tol &&
           u.y >= -cell.half_length(1) - tol && u.y < cell.half_length(1) - tol &&
           u.z >= -cell.half_length(2) - tol && u.z < cell.half_length(2) - tol;
}

bool cell_inside(const Parallelepiped& inner, const Parallelepiped& outer) {
    Vec3 u = outer.frame.coords(inner.center - outer.center);
    const double tol = 1e-9;
    // inner is frame-aligned with outer in every use; compare extents per axis
    return std::fabs(u.x) <= outer.half_length(0) - inner.half_length(0) + tol &&
           std::fabs(u.y) <= outer.half_length(1) - inner.half_length(1) + tol &&
           std::fabs(u.z) <= outer.half_length(2) - inner.half_length(2) + tol;
}

Tiling tile_cube(double R, const Parallelepiped& proto, const Vec3& cube_center) {
    Tiling out;
    out.prototype = proto;
    out.host_center = cube_center;
    const double L[3] = {proto.edge_length(0), proto.edge_length(1), proto.edge_length(2)};
    Parallelepiped cube = make_axis_cube(R, cube_center);
    double reach = R * std::sqrt(3.0) + proto.bounding_radius();
    int64_t kmax[3];
    for (int i = 0; i < 3; ++i)
        kmax[i] = static_cast<int64_t>(std::floor(reach / L[i])) + 1;
    for (int64_t k0 = -kmax[0]; k0 <= kmax[0]; ++k0)
        for (int64_t k1 = -kmax[1]; k1 <= kmax[1]; ++k1)
            for (int64_t k2 = -kmax[2]; k2 <= kmax[2]; ++k2) {
                Vec3 off = proto.frame.e1 * (k0 * L[0]) + proto.frame.e2 * (k1 * L[1]) +
                           proto.frame.e3 * (k2 * L[2]);
                Parallelepiped c = proto;
                c.center = cube_center + off;
                if (!parallelepipeds_overlap(c, cube)) continue;
                out.offsets.push_back(off);
                out.indices.push_back({k0, k1, k2});
            }
    return out;
}

}  // namespace kakeya
