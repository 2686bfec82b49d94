#include "fibrefield/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>

#include "fibrefield/error.hpp"

namespace fibrefield {

namespace {

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Variance of the window mean from non-overlapping batch means.
double batch_mean_variance(std::span<const double> w) {
    const std::size_t batches = std::min<std::size_t>(20, w.size());
    const std::size_t len = w.size() / batches;
    std::vector<double> means(batches);
    for (std::size_t b = 0; b < batches; ++b) means[b] = mean_of(w.subspan(b * len, len));
    const double mu = mean_of(means);
    double ss = 0;
    for (double x : means) ss += (x - mu) * (x - mu);
    const double var_batch = ss / static_cast<double>(batches - 1);
    return var_batch / static_cast<double>(batches);
}

} // namespace

double geweke(std::span<const double> series) {
    const std::size_t n = series.size();
    if (n < 40) throw Error(ErrorKind::TooShort, "geweke needs at least 40 samples");
    const std::size_t n1 = n / 10;
    const std::size_t n2 = n / 2;
    const auto first = series.first(n1);
    const auto last = series.last(n2);
    const double num = mean_of(first) - mean_of(last);
    const double var = batch_mean_variance(first) + batch_mean_variance(last);
    if (var <= 0) {
        if (num == 0) return 0;
        throw Error(ErrorKind::ZeroVariance, "geweke: zero variance with unequal means");
    }
    return num / std::sqrt(var);
}

double z_m_statistic(std::span<const double> products, double beta, double r_add) {
    const std::size_t m = products.size();
    if (m < 100) throw Error(ErrorKind::TooShort, "z_m needs at least 100 events");
    const double target = beta / (2 * beta + r_add);
    const double sum = std::accumulate(products.begin(), products.end(), 0.0);
    const double mu = sum / static_cast<double>(m);
    double ss = 0;
    for (double x : products) ss += (x - mu) * (x - mu);
    const double sd = std::sqrt(ss / static_cast<double>(m - 1));
    const double num = sum - static_cast<double>(m) * target;
    // rounding alone leaves a residual spread on constant products
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) {
        if (std::abs(mu - target) <= 1e-12 * std::max(1.0, target)) return 0;
        throw Error(ErrorKind::ZeroVariance, "z_m: zero variance and mean mismatch, chain diverged");
    }
    return num / (sd * std::sqrt(static_cast<double>(m)));
}

Interval hpd_interval(std::span<const double> samples, double level) {
    if (samples.empty()) throw Error(ErrorKind::InvalidArgument, "hpd_interval: no samples");
    if (!(level > 0 && level <= 1)) throw Error(ErrorKind::InvalidArgument, "hpd_interval: level outside (0, 1]");
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    // guard against level * n landing a hair above an integer
    auto need = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n) - 1e-9));
    need = std::clamp<std::size_t>(need, 1, n);
    std::size_t best = 0;
    for (std::size_t i = 1; i + need <= n; ++i)
        if (s[i + need - 1] - s[i] < s[best + need - 1] - s[best]) best = i;
    return {s[best], s[best + need - 1]};
}

std::vector<SummaryByK> summarize(std::span<const TraceRecord> trace) {
    if (trace.empty()) throw Error(ErrorKind::InvalidArgument, "summarize: empty trace");
    std::map<int, std::vector<const TraceRecord*>> by_k;
    for (const TraceRecord& r : trace) by_k[r.k].push_back(&r);

    std::vector<SummaryByK> out;
    const double n = static_cast<double>(trace.size());
    for (const auto& [k, recs] : by_k) {
        SummaryByK s;
        s.k = k;
        s.records = recs.size();
        s.prob = static_cast<double>(recs.size()) / n;
        auto stat = [&](const char* name, auto get) {
            std::vector<double> v;
            for (const TraceRecord* r : recs) v.push_back(get(*r));
            s.stats.push_back({name, mean_of(v), hpd_interval(v, 0.5), hpd_interval(v, 0.95)});
        };
        stat("n_noise", [](const TraceRecord& r) { return static_cast<double>(r.n_noise); });
        stat("dispersion_p95", [](const TraceRecord& r) { return r.dispersion_p95; });
        stat("total_length", [](const TraceRecord& r) { return r.total_length; });
        out.push_back(std::move(s));
    }
    return out;
}

void write_summary_csv(std::ostream& out, std::span<const SummaryByK> summary) {
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "k,prob,stat,mean,hpd50_lo,hpd50_hi,hpd95_lo,hpd95_hi\n";
    for (const SummaryByK& s : summary)
        for (const StatSummary& st : s.stats)
            out << s.k << ',' << s.prob << ',' << st.name << ',' << st.mean << ',' << st.hpd50.lo << ','
                << st.hpd50.hi << ',' << st.hpd95.lo << ',' << st.hpd95.hi << '\n';
}

Eigen::MatrixXd cooccurrence(std::span<const TraceRecord> trace) {
    if (trace.empty()) throw Error(ErrorKind::InvalidArgument, "cooccurrence: empty trace");
    const Eigen::Index m = static_cast<Eigen::Index>(trace.front().x.size());
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m, m);
    for (const TraceRecord& r : trace) {
        if (static_cast<Eigen::Index>(r.x.size()) != m)
            throw Error(ErrorKind::Data, "cooccurrence: records disagree on the point count");
        for (Eigen::Index i = 0; i < m; ++i) {
            const int xi = r.x[static_cast<std::size_t>(i)];
            if (xi < 0) continue;
            c(i, i) += 1;
            for (Eigen::Index j = i + 1; j < m; ++j)
                if (r.x[static_cast<std::size_t>(j)] == xi) c(i, j) += 1;
        }
    }
    c = c.triangularView<Eigen::Upper>();
    Eigen::MatrixXd full = c + c.transpose();
    full.diagonal() = c.diagonal();
    return full / static_cast<double>(trace.size());
}

std::vector<int> cluster_points(const Eigen::MatrixXd& cooc, double threshold) {
    const auto m = static_cast<std::size_t>(cooc.rows());
    std::vector<std::size_t> parent(m);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&parent](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    auto active = [&](std::size_t i) {
        return cooc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) >= threshold;
    };
    for (std::size_t i = 0; i < m; ++i) {
        if (!active(i)) continue;
        for (std::size_t j = i + 1; j < m; ++j) {
            if (!active(j)) continue;
            // distance 1 - cooc within the cutoff 1 - threshold
            if (cooc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) >= threshold) {
                const std::size_t a = find(i), b = find(j);
                if (a != b) parent[std::max(a, b)] = std::min(a, b);
            }
        }
    }
    std::vector<int> labels(m, -1);
    std::map<std::size_t, int> ids;
    for (std::size_t i = 0; i < m; ++i) {
        if (!active(i)) continue;
        const auto [it, inserted] = ids.try_emplace(find(i), static_cast<int>(ids.size()));
        labels[i] = it->second;
    }
    return labels;
}

void write_clusters_csv(std::ostream& out, std::span<const int> labels) {
    out << "index,cluster\n";
    for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

double DensityGrid::mass() const {
    return std::accumulate(values.begin(), values.end(), 0.0) * spacing * spacing;
}

DensityGrid density_raster(std::span<const TraceRecord> trace, const WindowRect& window, double bandwidth,
                           double spacing) {
    if (trace.empty()) throw Error(ErrorKind::InvalidArgument, "density_raster: empty trace");
    if (!(bandwidth > 0) || !(spacing > 0))
        throw Error(ErrorKind::InvalidArgument, "density_raster: bandwidth and spacing must be positive");
    DensityGrid g;
    g.window = window;
    g.spacing = spacing;
    g.nx = std::max(2, static_cast<int>(std::ceil(window.width() / spacing - 1e-9)) + 1);
    g.ny = std::max(2, static_cast<int>(std::ceil(window.height() / spacing - 1e-9)) + 1);
    g.values.assign(static_cast<std::size_t>(g.nx) * g.ny, 0.0);

    const double cutoff = 4 * bandwidth;
    const double inv2b2 = 1.0 / (2 * bandwidth * bandwidth);
    const double norm = 1.0 / (2 * std::numbers::pi * bandwidth * bandwidth);
    const double ds_target = std::min(spacing, bandwidth) / 4;

    auto deposit = [&](const Point2& p, double mass) {
        const int ix0 = std::max(0, static_cast<int>(std::ceil((p.x() - cutoff - window.xmin) / spacing)));
        const int ix1 = std::min(g.nx - 1, static_cast<int>(std::floor((p.x() + cutoff - window.xmin) / spacing)));
        const int iy0 = std::max(0, static_cast<int>(std::ceil((p.y() - cutoff - window.ymin) / spacing)));
        const int iy1 = std::min(g.ny - 1, static_cast<int>(std::floor((p.y() + cutoff - window.ymin) / spacing)));
        for (int iy = iy0; iy <= iy1; ++iy)
            for (int ix = ix0; ix <= ix1; ++ix) {
                const double d2 = (g.node(ix, iy) - p).squaredNorm();
                if (d2 > cutoff * cutoff) continue;
                g.values[static_cast<std::size_t>(iy) * g.nx + ix] += mass * norm * std::exp(-d2 * inv2b2);
            }
    };

    for (const TraceRecord& r : trace) {
        for (const auto& f : r.fibres) {
            for (std::size_t v = 0; v + 1 < f.vertices.size(); ++v) {
                const Point2& a = f.vertices[v];
                const Point2& b = f.vertices[v + 1];
                const double len = (b - a).norm();
                if (!(len > 0)) continue;
                // midpoint rule over equal pieces
                const auto pieces = static_cast<int>(std::ceil(len / ds_target));
                const double ds = len / pieces;
                for (int q = 0; q < pieces; ++q) deposit(a + (b - a) * ((q + 0.5) / pieces), ds);
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(trace.size());
    for (double& v : g.values) v *= inv_n;
    return g;
}

void write_pgm(std::ostream& out, const DensityGrid& grid) {
    const double mx = grid.values.empty() ? 0.0 : *std::max_element(grid.values.begin(), grid.values.end());
    out << "P2\n" << grid.nx << ' ' << grid.ny << "\n65535\n";
    for (int iy = grid.ny - 1; iy >= 0; --iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            const long level = mx > 0 ? std::lround(65535.0 * grid.at(ix, iy) / mx) : 0;
            out << level << (ix + 1 == grid.nx ? '\n' : ' ');
        }
    }
}

void write_density_csv(std::ostream& out, const DensityGrid& grid) {
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "ix,iy,x,y,density\n";
    for (int iy = 0; iy < grid.ny; ++iy)
        for (int ix = 0; ix < grid.nx; ++ix) {
            const Point2 p = grid.node(ix, iy);
            out << ix << ',' << iy << ',' << p.x() << ',' << p.y() << ',' << grid.at(ix, iy) << '\n';
        }
}

} // namespace fibrefield
