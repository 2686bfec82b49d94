#include "fibrefield/field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "fibrefield/error.hpp"

namespace fibrefield {

namespace {

int node_count(double extent, double spacing) {
    const int n = static_cast<int>(std::ceil(extent / spacing - 1e-9)) + 1;
    return std::max(n, 2);
}

/// Uniform bucket grid over the window for radius queries.
class PointBuckets {
public:
    PointBuckets(std::span<const Point2> points, const WindowRect& w, double cell)
        : xmin_(w.xmin), ymin_(w.ymin), cell_(cell) {
        nx_ = std::max(1, static_cast<int>(std::ceil(w.width() / cell)));
        ny_ = std::max(1, static_cast<int>(std::ceil(w.height() / cell)));
        buckets_.resize(static_cast<std::size_t>(nx_) * ny_);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto [bx, by] = bucket_of(points[i]);
            buckets_[static_cast<std::size_t>(by) * nx_ + bx].push_back(i);
        }
    }

    template <typename Fn>
    void for_each_near(const Point2& x, Fn&& fn) const {
        const auto [bx, by] = bucket_of(x);
        for (int y = std::max(0, by - 1); y <= std::min(ny_ - 1, by + 1); ++y)
            for (int xx = std::max(0, bx - 1); xx <= std::min(nx_ - 1, bx + 1); ++xx)
                for (std::size_t i : buckets_[static_cast<std::size_t>(y) * nx_ + xx]) fn(i);
    }

private:
    std::pair<int, int> bucket_of(const Point2& p) const {
        const int bx = static_cast<int>(std::floor((p.x() - xmin_) / cell_));
        const int by = static_cast<int>(std::floor((p.y() - ymin_) / cell_));
        return {std::clamp(bx, 0, nx_ - 1), std::clamp(by, 0, ny_ - 1)};
    }

    double xmin_, ymin_, cell_;
    int nx_ = 1, ny_ = 1;
    std::vector<std::vector<std::size_t>> buckets_;
};

} // namespace

OrientationGrid::OrientationGrid(WindowRect window, double spacing)
    : window_(window), origin_(window.xmin, window.ymin), spacing_(spacing) {
    if (!window.valid()) throw Error(ErrorKind::InvalidArgument, "grid: empty window");
    if (!(spacing > 0)) throw Error(ErrorKind::InvalidArgument, "grid: spacing must be positive");
    nx_ = node_count(window.width(), spacing);
    ny_ = node_count(window.height(), spacing);
    cells_.assign(static_cast<std::size_t>(nx_) * ny_, FieldCell{});
}

OrientationGrid OrientationGrid::from_function(WindowRect window, double spacing,
                                               const std::function<FieldCell(const Point2&)>& fn) {
    OrientationGrid g(window, spacing);
    for (int iy = 0; iy < g.ny_; ++iy)
        for (int ix = 0; ix < g.nx_; ++ix) g.cell(ix, iy) = fn(g.node(ix, iy));
    return g;
}

std::pair<int, int> OrientationGrid::nearest_node(const Point2& x) const {
    if (!window_.contains(x)) throw Error(ErrorKind::OutsideWindow, "query point outside window");
    // ceil(u - 1/2) rounds half-way cases down.
    const double u = (x.x() - origin_.x()) / spacing_;
    const double v = (x.y() - origin_.y()) / spacing_;
    const int ix = std::clamp(static_cast<int>(std::ceil(u - 0.5)), 0, nx_ - 1);
    const int iy = std::clamp(static_cast<int>(std::ceil(v - 0.5)), 0, ny_ - 1);
    return {ix, iy};
}

std::size_t OrientationGrid::singular_count() const {
    return static_cast<std::size_t>(
        std::count_if(cells_.begin(), cells_.end(), [](const FieldCell& c) { return c.singular; }));
}

SymTensor2 local_tensor(std::size_t j, std::span<const Point2> points, std::span<const double> eps,
                        double sigma_fo) {
    if (points.size() < 2) throw Error(ErrorKind::EmptyPattern, "local_tensor: need two points");
    if (!(sigma_fo > 0)) throw Error(ErrorKind::InvalidArgument, "local_tensor: sigma_fo <= 0");
    const double inv2s2 = 1.0 / (2 * sigma_fo * sigma_fo);
    SymTensor2 t = SymTensor2::zero();
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (i == j) continue;
        const double w = eps.empty() ? 1.0 : eps[i];
        if (w == 0) continue;
        const Point2 v = points[i] - points[j];
        const double r2 = v.squaredNorm();
        if (r2 == 0) continue;  // coincident points carry no direction
        const Point2 vt = (std::exp(-r2 * inv2s2) / std::sqrt(r2)) * v;
        t += w * SymTensor2::outer(vt);
    }
    return is_positive_definite(t) ? t : SymTensor2::identity();
}

OrientationGrid estimate_field(std::span<const Point2> points, std::span<const double> eps,
                               const WindowRect& window, const FieldParams& params) {
    if (points.size() < 2)
        throw Error(ErrorKind::EmptyPattern, "estimate_field: need at least two points");
    if (!(params.h_fo > 0)) throw Error(ErrorKind::InvalidArgument, "estimate_field: h_fo <= 0");
    if (!eps.empty() && eps.size() != points.size())
        throw Error(ErrorKind::InvalidArgument, "estimate_field: eps size mismatch");

    std::vector<SymTensor2> logs(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
        logs[i] = tensor_log(local_tensor(i, points, eps, params.sigma_fo));

    OrientationGrid grid(window, params.spacing);
    const double radius = params.kernel_cutoff * params.h_fo;
    const double r2max = radius * radius;
    const double inv2h2 = 1.0 / (2 * params.h_fo * params.h_fo);
    const PointBuckets buckets(points, window, radius);

    for (int iy = 0; iy < grid.ny(); ++iy) {
        for (int ix = 0; ix < grid.nx(); ++ix) {
            const Point2 x = grid.node(ix, iy);
            SymTensor2 acc = SymTensor2::zero();
            double total = 0;
            buckets.for_each_near(x, [&](std::size_t i) {
                const double w0 = eps.empty() ? 1.0 : eps[i];
                if (w0 == 0) return;
                const double d2 = (points[i] - x).squaredNorm();
                if (d2 > r2max) return;
                const double w = w0 * std::exp(-d2 * inv2h2);
                acc += w * logs[i];
                total += w;
            });
            FieldCell& cell = grid.cell(ix, iy);
            if (!(total > params.weight_floor)) {
                cell = FieldCell{Orientation(0), true, 1.0};
                continue;
            }
            const auto e = eigendecompose(tensor_exp((1.0 / total) * acc));
            cell = FieldCell{e.theta1, e.indeterminate, e.lambda1 / e.lambda2};
        }
    }
    return grid;
}

OrientationSample orientation_at(const OrientationGrid& grid, const Point2& x) {
    const FieldCell& c = grid.at(x);
    return {c.theta, c.singular};
}

Point2 Fibre::point_at(double s) const {
    if (vertices.empty()) return omega;
    if (vertices.size() == 1 || s <= 0) return vertices.front();
    if (s >= arc.back()) return vertices.back();
    const auto it = std::upper_bound(arc.begin(), arc.end(), s);
    const std::size_t k = static_cast<std::size_t>(it - arc.begin()) - 1;
    const double seg = arc[k + 1] - arc[k];
    const double t = seg > 0 ? (s - arc[k]) / seg : 0.0;
    return vertices[k] + t * (vertices[k + 1] - vertices[k]);
}

std::pair<double, double> Fibre::project(const Point2& y) const {
    if (vertices.size() < 2)
        return {0.0, vertices.empty() ? (y - omega).squaredNorm() : (y - vertices[0]).squaredNorm()};
    double best = std::numeric_limits<double>::infinity();
    double best_s = 0;
    for (std::size_t k = 0; k + 1 < vertices.size(); ++k) {
        double t = 0;
        const double d2 = squared_distance_to_segment(y, vertices[k], vertices[k + 1], &t);
        if (d2 < best) {
            best = d2;
            best_s = arc[k] + t * (arc[k + 1] - arc[k]);
        }
    }
    return {best_s, best};
}

namespace {

struct Branch {
    std::vector<Point2> points;  // excludes the start point
    double length = 0;
    bool truncated = false;
};

/// Largest t in [0, h] with p + t d inside w.
double exit_parameter(const WindowRect& w, const Point2& p, const Point2& d, double h) {
    double t = h;
    auto clip = [&](double pos, double dir, double lo, double hi) {
        if (dir > 0) t = std::min(t, (hi - pos) / dir);
        else if (dir < 0) t = std::min(t, (lo - pos) / dir);
    };
    clip(p.x(), d.x(), w.xmin, w.xmax);
    clip(p.y(), d.y(), w.ymin, w.ymax);
    return std::max(t, 0.0);
}

Branch trace_branch(const OrientationGrid& grid, const Point2& start, const Point2& dir0,
                    double length, double step) {
    Branch b;
    const WindowRect& w = grid.window();
    const auto full_steps = static_cast<long>(std::floor(length / step));
    double remainder = length - static_cast<double>(full_steps) * step;
    if (remainder <= 1e-12 * std::max(1.0, length)) remainder = 0;
    const long total_steps = full_steps + (remainder > 0 ? 1 : 0);

    Point2 pos = start;
    Point2 prev = dir0;
    for (long n = 0; n < total_steps; ++n) {
        Point2 d = dir0;
        if (n > 0) {
            const FieldCell& c = grid.at(pos);
            if (c.singular) {
                b.truncated = true;
                break;
            }
            const double th = c.theta.value();
            d = Point2(std::cos(th), std::sin(th));
            if (d.dot(prev) < 0) d = -d;
        }
        const double h = n < full_steps ? step : remainder;
        Point2 next = pos + h * d;
        if (!w.contains(next)) {
            const double t = exit_parameter(w, pos, d, h);
            if (t > 0) {
                next = pos + t * d;
                // keep the clipped vertex exactly on the boundary
                next.x() = std::clamp(next.x(), w.xmin, w.xmax);
                next.y() = std::clamp(next.y(), w.ymin, w.ymax);
                b.points.push_back(next);
                b.length += t;
            }
            b.truncated = true;
            break;
        }
        b.points.push_back(next);
        b.length += h;
        pos = next;
        prev = d;
    }
    return b;
}

} // namespace

Fibre trace_fibre(const OrientationGrid& grid, const Point2& omega, double l1, double l2,
                  double step) {
    if (!(step > 0)) throw Error(ErrorKind::InvalidArgument, "trace_fibre: step must be positive");
    if (!(l1 >= 0) || !(l2 >= 0))
        throw Error(ErrorKind::InvalidArgument, "trace_fibre: negative length");
    const FieldCell& start = grid.at(omega);  // throws OutsideWindow
    if (start.singular) throw Error(ErrorKind::SingularStart, "trace_fibre: singular reference point");

    const double th = start.theta.value();
    const Point2 forward(std::cos(th), std::sin(th));
    const Branch back = trace_branch(grid, omega, -forward, l1, step);
    const Branch fwd = trace_branch(grid, omega, forward, l2, step);

    Fibre f;
    f.omega = omega;
    f.l1 = l1;
    f.l2 = l2;
    f.vertices.reserve(back.points.size() + fwd.points.size() + 1);
    f.vertices.assign(back.points.rbegin(), back.points.rend());
    f.omega_index = f.vertices.size();
    f.vertices.push_back(omega);
    f.vertices.insert(f.vertices.end(), fwd.points.begin(), fwd.points.end());
    f.arc.resize(f.vertices.size());
    f.arc[0] = 0;
    for (std::size_t k = 1; k < f.vertices.size(); ++k)
        f.arc[k] = f.arc[k - 1] + (f.vertices[k] - f.vertices[k - 1]).norm();
    f.l1_realized = back.length;
    f.l2_realized = fwd.length;
    f.truncated = back.truncated || fwd.truncated;
    return f;
}

void write_grid_csv(std::ostream& out, const OrientationGrid& grid) {
    out << "ix,iy,x,y,theta,singular,anisotropy\n";
    out.precision(17);
    for (int iy = 0; iy < grid.ny(); ++iy) {
        for (int ix = 0; ix < grid.nx(); ++ix) {
            const Point2 p = grid.node(ix, iy);
            const FieldCell& c = grid.cell(ix, iy);
            out << ix << ',' << iy << ',' << p.x() << ',' << p.y() << ',' << c.theta.value() << ','
                << (c.singular ? 1 : 0) << ',' << c.anisotropy << '\n';
        }
    }
}

} // namespace fibrefield
