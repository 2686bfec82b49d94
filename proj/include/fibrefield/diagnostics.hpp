#pragma once

// Convergence checks and posterior summaries over a recorded trace.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fibrefield/geometry.hpp"
#include "fibrefield/sampler.hpp"

namespace fibrefield {

/// Geweke z: mean of the first tenth against the mean of the last half, each
/// variance from non-overlapping batch means (up to 20 batches per window).
double geweke(std::span<const double> series);

/// Z_m = (sum of delta_total dt - m beta / (2 beta + r_add)) / (sd sqrt(m)).
double z_m_statistic(std::span<const double> products, double beta, double r_add);

struct Interval {
    double lo = 0;
    double hi = 0;
    double width() const { return hi - lo; }
};

/// Shortest window of the sorted samples holding ceil(level n) points; leftmost on ties.
Interval hpd_interval(std::span<const double> samples, double level);

struct StatSummary {
    std::string name;
    double mean = 0;
    Interval hpd50;
    Interval hpd95;
};

struct SummaryByK {
    int k = 0;
    double prob = 0;
    std::vector<StatSummary> stats;  // n_noise, dispersion_p95, total_length
    std::size_t records = 0;
};

std::vector<SummaryByK> summarize(std::span<const TraceRecord> trace);

void write_summary_csv(std::ostream& out, std::span<const SummaryByK> summary);

/// Entry (i, j): fraction of records in which points i and j sit on the same fibre.
Eigen::MatrixXd cooccurrence(std::span<const TraceRecord> trace);

/// Single linkage on 1 - cooc with merge cutoff 1 - threshold; noise is -1.
std::vector<int> cluster_points(const Eigen::MatrixXd& cooc, double threshold);

void write_clusters_csv(std::ostream& out, std::span<const int> labels);

struct DensityGrid {
    WindowRect window;
    double spacing = 1;
    int nx = 0;
    int ny = 0;
    std::vector<double> values;  // row-major, iy * nx + ix, y increasing

    double at(int ix, int iy) const { return values[static_cast<std::size_t>(iy) * nx + ix]; }
    Point2 node(int ix, int iy) const {
        return {window.xmin + ix * spacing, window.ymin + iy * spacing};
    }
    /// Riemann sum of the density over the grid.
    double mass() const;
};

/// Kernel-smoothed density of fibre mass averaged over records.
DensityGrid density_raster(std::span<const TraceRecord> trace, const WindowRect& window, double bandwidth,
                           double spacing);

/// ASCII P2, maxval 65535, top row is ymax.
void write_pgm(std::ostream& out, const DensityGrid& grid);
void write_density_csv(std::ostream& out, const DensityGrid& grid);

} // namespace fibrefield
