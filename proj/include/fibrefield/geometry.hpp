#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <vector>

namespace fibrefield {

using Point2 = Eigen::Vector2d;

struct WindowRect {
    double xmin = 0;
    double ymin = 0;
    double xmax = 1;
    double ymax = 1;

    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
    double area() const { return width() * height(); }
    bool valid() const { return xmax > xmin && ymax > ymin; }

    bool contains(const Point2& p) const {
        return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax;
    }
};

/// Observed points together with the observation window.
struct PointPattern {
    std::vector<Point2> points;
    WindowRect window;

    std::size_t size() const { return points.size(); }
};

inline double squared_distance_to_segment(const Point2& p, const Point2& a, const Point2& b,
                                          double* t_out = nullptr) {
    const Point2 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = 0;
    if (len2 > 0) t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    if (t_out) *t_out = t;
    return (a + t * ab - p).squaredNorm();
}

} // namespace fibrefield
