#ifndef DSCMP_GEOMETRY_HPP_
#define DSCMP_GEOMETRY_HPP_

#include <cmath>
#include <vector>

#include "dscmp/numkit/tensor.hpp"

namespace dscmp {

/// A planar position or displacement.
struct Point {
    Real x = 0;
    Real y = 0;

    Point& operator+=(Point o) noexcept {
        x += o.x;
        y += o.y;
        return *this;
    }
    Point& operator-=(Point o) noexcept {
        x -= o.x;
        y -= o.y;
        return *this;
    }
    friend Point operator+(Point a, Point b) noexcept { return a += b; }
    friend Point operator-(Point a, Point b) noexcept { return a -= b; }
    friend Point operator*(Real s, Point p) noexcept { return {s * p.x, s * p.y}; }
    friend bool operator==(Point, Point) = default;
};

inline Real distance(Point a, Point b) noexcept {
    return std::hypot(a.x - b.x, a.y - b.y);
}

/// Per-frame positions (or displacements) of one agent.
using Track = std::vector<Point>;

}  // namespace dscmp

#endif  // DSCMP_GEOMETRY_HPP_
