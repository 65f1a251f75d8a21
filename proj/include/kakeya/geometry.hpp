#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace kakeya {

// ---------------------------------------------------------------------------
// Vectors
// ---------------------------------------------------------------------------

struct Vec2 {
    double x = 0.0, y = 0.0;

    constexpr Vec2() = default;
    constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

    constexpr Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    constexpr Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
    constexpr double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
    // counterclockwise perpendicular
    constexpr Vec2 perp() const { return {-y, x}; }
};

inline Vec2 rotate(const Vec2& v, double angle) {
    double c = std::cos(angle), s = std::sin(angle);
    return {v.x * c - v.y * s, v.x * s + v.y * c};
}

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    constexpr Vec3() = default;
    constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    constexpr Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        if (n == 0.0) throw std::invalid_argument("cannot normalize zero vector");
        return *this * (1.0 / n);
    }
};

// ---------------------------------------------------------------------------
// Frequency-plane objects: caps and strips
// ---------------------------------------------------------------------------

// Dyadic square of side 2^-side_exponent with lower-left vertex at `corner`.
struct Cap {
    Vec2 corner;
    int side_exponent = 0;

    double side() const { return std::ldexp(1.0, -side_exponent); }
    bool contains(const Vec2& xi) const {
        double a = side();
        return xi.x >= corner.x && xi.x <= corner.x + a && xi.y >= corner.y &&
               xi.y <= corner.y + a;
    }
};

// Planar slab of width 2^-width_exponent through `anchor` in direction `direction`.
struct Strip {
    int width_exponent = 0;
    Vec2 direction;  // unit
    Vec2 anchor;

    double width() const { return std::ldexp(1.0, -width_exponent); }
};

// Membership is the defining inequality only; the [0,2]^2 domain is enforced
// by region construction, not here.
bool strip_contains(const Strip& s, const Vec2& xi);

// ---------------------------------------------------------------------------
// Tubes
// ---------------------------------------------------------------------------

// Infinite cylinder: axis line {anchor + s*direction}, closed boundary.
struct Tube {
    Vec3 direction;  // unit
    Vec3 anchor;
    double radius = 1.0;
};

Vec3 paraboloid_normal(const Vec2& xi);
double wedge3(const Vec3& v1, const Vec3& v2, const Vec3& v3);
bool tube_contains(const Tube& t, const Vec3& p);
double point_line_distance(const Vec3& p, const Vec3& anchor, const Vec3& dir);

// ---------------------------------------------------------------------------
// Oriented parallelepipeds
// ---------------------------------------------------------------------------

// Normalized spanning frame e1=(w,0), e2=(w,0)x(m,-1), e3=(m,-1).  e2 is
// orthogonal to e1 and e3; e1,e3 are generally not orthogonal to each other.
struct Frame {
    Vec3 e1, e2, e3;     // unit spanning vectors
    double inv[3][3];    // inverse of the column matrix [e1 e2 e3]

    static Frame from_axes(const Vec3& a, const Vec3& b, const Vec3& c);
    static Frame axis_aligned();

    // coordinates u with p = u1*e1 + u2*e2 + u3*e3
    Vec3 coords(const Vec3& p) const;
    Vec3 apply(const Vec3& u) const;
    double det() const;
};

struct Parallelepiped {
    Frame frame;
    std::array<double, 3> side_exponents{0, 0, 0};  // edge length along e_i is 2^s_i
    Vec3 center;

    double edge_length(int i) const { return std::exp2(side_exponents[static_cast<size_t>(i)]); }
    double half_length(int i) const { return 0.5 * edge_length(i); }
    // Euclidean volume (accounts for frame shear)
    double volume() const;
    double bounding_radius() const;
    bool contains(const Vec3& p) const;
    std::array<Vec3, 8> vertices() const;
    Parallelepiped translated(const Vec3& offset) const;
    Parallelepiped rescaled(double lambda_shift) const;
};

// Frame construction per the (w,m) convention; rejects degenerate input.
Frame make_frame(const Vec2& w, const Vec2& m);

// Oriented box with side exponents (E*j+t+lambda, E*j+F*t+lambda, j+t+lambda).
Parallelepiped make_parallelepiped(int j, int t, const Vec2& w, const Vec2& m, double E,
                                   double F, double lambda, const Vec3& a);

// Axis cube [-R,R]^3 realizing Q_R.
Parallelepiped make_axis_cube(double R, const Vec3& center = {});
// Axis box with the given half-extents.
Parallelepiped make_axis_box(const Vec3& center, const Vec3& half_extents);

// Exact distance from the solid parallelepiped to the line {a + s*d}.
double line_parallelepiped_distance(const Vec3& a, const Vec3& d, const Parallelepiped& P);
bool tube_meets(const Tube& t, const Parallelepiped& P);
// Separating-axis overlap test for two parallelepipeds (closed; touching counts).
bool parallelepipeds_overlap(const Parallelepiped& A, const Parallelepiped& B);

// ---------------------------------------------------------------------------
// Tilings
// ---------------------------------------------------------------------------

// Disjoint lattice of translates of `prototype` covering `host`, with one
// translate centered at the host's center.  Offsets are relative to that
// center; translates may overhang the host boundary.
struct Tiling {
    Parallelepiped prototype;
    Vec3 host_center;
    std::vector<Vec3> offsets;            // translate centers = host_center + offset
    std::vector<std::array<int64_t, 3>> indices;  // lattice index of each translate

    size_t size() const { return offsets.size(); }
    Parallelepiped cell(size_t i) const {
        Parallelepiped c = prototype;
        c.center = host_center + offsets[i];
        return c;
    }
};

// host and proto must share the same frame; use tile_cube for Q_R hosts.
Tiling tile(const Parallelepiped& host, const Parallelepiped& proto);
Tiling tile_cube(double R, const Parallelepiped& proto, const Vec3& cube_center = {});

// Exact corner-aligned partition of host into proto-shaped cells.  Requires
// integer edge ratios; the cell count equals the product of the ratios.  Used
// by the nested census levels, where the dyadic occupancy caps must be exact.
Tiling subdivide(const Parallelepiped& host, const Parallelepiped& proto);

// half-open membership of a point in the frame box: used when assigning
// objects of one lattice to cells of a misaligned coarser lattice
bool half_open_center_in(const Parallelepiped& cell, const Vec3& p);
// closed full containment of `inner` in `outer` (same frame assumed)
bool cell_inside(const Parallelepiped& inner, const Parallelepiped& outer);

}  // namespace kakeya
