#pragma once

// Empirical field of orientations: per-point anisotropy tensors, their
// epsilon-weighted log-Euclidean kernel smoothing onto a regular grid, and
// streamline tracing of fibres through the gridded field.

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "fibrefield/geometry.hpp"
#include "fibrefield/tensor.hpp"

namespace fibrefield {

struct FieldCell {
    Orientation theta;
    bool singular = false;
    double anisotropy = 1;  // lambda1 / lambda2
};

/// Regular grid of orientations. Node (ix, iy) sits at origin + spacing * (ix, iy).
/// Immutable after construction.
class OrientationGrid {
public:
    OrientationGrid(WindowRect window, double spacing);

    /// Samples an analytic orientation map at every node.
    static OrientationGrid from_function(WindowRect window, double spacing,
                                         const std::function<FieldCell(const Point2&)>& fn);

    const WindowRect& window() const { return window_; }
    const Point2& origin() const { return origin_; }
    double spacing() const { return spacing_; }
    int nx() const { return nx_; }
    int ny() const { return ny_; }

    Point2 node(int ix, int iy) const {
        return origin_ + spacing_ * Point2(ix, iy);
    }
    const FieldCell& cell(int ix, int iy) const { return cells_[index(ix, iy)]; }
    FieldCell& cell(int ix, int iy) { return cells_[index(ix, iy)]; }

    /// Nearest node; ties go to the lower index. Throws OutsideWindow.
    std::pair<int, int> nearest_node(const Point2& x) const;

    const FieldCell& at(const Point2& x) const {
        const auto [ix, iy] = nearest_node(x);
        return cell(ix, iy);
    }

    std::size_t singular_count() const;

private:
    std::size_t index(int ix, int iy) const {
        return static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx_) +
               static_cast<std::size_t>(ix);
    }

    WindowRect window_;
    Point2 origin_;
    double spacing_;
    int nx_;
    int ny_;
    std::vector<FieldCell> cells_;
};

struct FieldParams {
    double sigma_fo = 20;
    double h_fo = 10;
    double spacing = 1;
    double kernel_cutoff = 4;  // kernel truncated at cutoff * h_fo
    double weight_floor = 1e-300;
};

/// Anisotropy tensor at points[j]:
///   sum_{i != j} eps_i * vt vt^T,  vt = exp(-|v|^2 / (2 sigma_fo^2)) v / |v|,  v = y_i - y_j
/// replaced by the identity when it is not positive definite.
SymTensor2 local_tensor(std::size_t j, std::span<const Point2> points, std::span<const double> eps,
                        double sigma_fo);

/// Smoothed field on a grid covering the window. eps may be empty (all ones).
OrientationGrid estimate_field(std::span<const Point2> points, std::span<const double> eps,
                               const WindowRect& window, const FieldParams& params);

struct OrientationSample {
    Orientation theta;
    bool singular;
};

OrientationSample orientation_at(const OrientationGrid& grid, const Point2& x);

/// Streamline segment through omega. Vertices run from the end of the l1 branch,
/// through omega, to the end of the l2 branch; the l2 branch leaves omega along
/// +theta(omega), the l1 branch along -theta(omega).
struct Fibre {
    Point2 omega{0, 0};
    double l1 = 0;  // nominal lengths
    double l2 = 0;
    std::vector<Point2> vertices;
    std::vector<double> arc;  // cumulative arc length at each vertex
    std::size_t omega_index = 0;
    double l1_realized = 0;
    double l2_realized = 0;
    bool truncated = false;

    double l_total() const { return arc.empty() ? 0.0 : arc.back(); }
    double nominal_total() const { return l1 + l2; }

    /// Point at arc position s in [0, l_total].
    Point2 point_at(double s) const;
    /// Arc position of the nearest polyline point, plus its squared distance.
    std::pair<double, double> project(const Point2& y) const;
};

/// Integrates the field. Branches stop early (truncated) when they leave the window
/// or step into a singular cell. Throws SingularStart if omega's cell is singular.
Fibre trace_fibre(const OrientationGrid& grid, const Point2& omega, double l1, double l2,
                  double step);

/// CSV: ix,iy,x,y,theta,singular,anisotropy
void write_grid_csv(std::ostream& out, const OrientationGrid& grid);

} // namespace fibrefield
