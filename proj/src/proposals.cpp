#include "fibrefield/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fibrefield/error.hpp"
#include "fibrefield/model.hpp"

namespace fibrefield {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool degenerate(const Fibre& f) { return f.vertices.size() < 2 || !(f.l_total() > 0); }
} // namespace

double softplus(double x) {
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double log_sum_exp(std::span<const double> v) {
    double mx = kNegInf;
    for (double x : v) mx = std::max(mx, x);
    if (mx == kNegInf) return kNegInf;
    double sum = 0;
    for (double x : v) sum += std::exp(x - mx);
    return mx + std::log(sum);
}

std::pair<double, double> anchor_cell(const Fibre& fibre, std::size_t k) {
    const auto& a = fibre.arc;
    const std::size_t n = a.size();
    const double lo = k == 0 ? 0.0 : 0.5 * (a[k - 1] + a[k]);
    const double hi = k + 1 == n ? a.back() : 0.5 * (a[k] + a[k + 1]);
    return {lo, hi};
}

std::size_t anchor_vertex(const Fibre& fibre, double s) {
    const auto& a = fibre.arc;
    const auto it = std::upper_bound(a.begin(), a.end(), s);
    const auto k = static_cast<std::size_t>(it - a.begin());
    if (k == 0) return 0;
    if (k == a.size()) return a.size() - 1;
    return (s - a[k - 1] <= a[k] - s) ? k - 1 : k;
}

void refresh_flip_terms(FibreCache& cache, const Fibre& fibre, std::span<const double> eps,
                        double window_area) {
    const std::size_t m = cache.log_phi_near.size();
    cache.log_flip.assign(m, kNegInf);
    cache.log_stay.assign(m, 0.0);
    if (degenerate(fibre)) return;
    const double log_area = std::log(window_area);
    for (std::size_t i = 0; i < m; ++i) {
        const double log_w =
            std::log(eps[i]) - std::log1p(-eps[i]) + log_area + cache.log_phi_near[i];
        const double sp = softplus(log_w);
        cache.log_flip[i] = log_w - sp;
        cache.log_stay[i] = -sp;
    }
}

FibreCache build_fibre_cache(const Fibre& fibre, std::span<const Point2> points,
                             std::span<const double> eps, double sigma_disp, double window_area) {
    const std::size_t m = points.size();
    FibreCache c;
    c.log_phi_near.resize(m);
    c.log_anchor_norm.assign(m, kNegInf);
    const double s2 = sigma_disp * sigma_disp;
    const double log_norm_const = -std::log(2 * std::numbers::pi * s2);
    const double inv2s2 = 1.0 / (2 * s2);

    const std::size_t n = fibre.vertices.size();
    std::vector<double> log_cell(n, kNegInf);
    if (!degenerate(fibre)) {
        for (std::size_t k = 0; k < n; ++k) {
            const auto [lo, hi] = anchor_cell(fibre, k);
            if (hi > lo) log_cell[k] = std::log(hi - lo);
        }
    }

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < m; ++i) {
        const Point2& y = points[i];
        double best_v = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k) {
            d2[k] = (fibre.vertices[k] - y).squaredNorm();
            best_v = std::min(best_v, d2[k]);
        }
        double best = best_v;
        for (std::size_t k = 0; k + 1 < n; ++k)
            best = std::min(best, squared_distance_to_segment(y, fibre.vertices[k], fibre.vertices[k + 1]));
        if (n == 0) best = (fibre.omega - y).squaredNorm();
        c.log_phi_near[i] = log_norm_const - best * inv2s2;

        if (degenerate(fibre)) continue;
        // log-sum-exp shifted by the nearest vertex
        double sum = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (log_cell[k] == kNegInf) continue;
            sum += std::exp(log_cell[k] - (d2[k] - best_v) * inv2s2);
        }
        c.log_anchor_norm[i] = sum > 0 ? log_norm_const - best_v * inv2s2 + std::log(sum) : kNegInf;
    }
    refresh_flip_terms(c, fibre, eps, window_area);
    return c;
}

double log_anchor_density(const Fibre& fibre, const FibreCache& cache, std::size_t i,
                          const Point2& y, double s, double sigma_disp) {
    if (degenerate(fibre)) return kNegInf;
    if (s < 0 || s > fibre.l_total()) return kNegInf;
    const std::size_t k = anchor_vertex(fibre, s);
    return log_normal2(y, fibre.vertices[k], sigma_disp) - cache.log_anchor_norm[i];
}

double sample_anchor(const Fibre& fibre, const Point2& y, double sigma_disp, std::mt19937_64& rng) {
    if (degenerate(fibre))
        throw Error(ErrorKind::InvalidArgument, "sample_anchor: fibre has zero length");
    const std::size_t n = fibre.vertices.size();
    const double inv2s2 = 1.0 / (2 * sigma_disp * sigma_disp);
    std::vector<double> lw(n, kNegInf);
    double mx = kNegInf;
    for (std::size_t k = 0; k < n; ++k) {
        const auto [lo, hi] = anchor_cell(fibre, k);
        if (!(hi > lo)) continue;
        lw[k] = std::log(hi - lo) - (fibre.vertices[k] - y).squaredNorm() * inv2s2;
        mx = std::max(mx, lw[k]);
    }
    std::vector<double> w(n);
    for (std::size_t k = 0; k < n; ++k) w[k] = lw[k] == kNegInf ? 0.0 : std::exp(lw[k] - mx);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    const std::size_t k = pick(rng);
    const auto [lo, hi] = anchor_cell(fibre, k);
    std::uniform_real_distribution<double> u(lo, hi);
    // keep the draw inside the cell so the density evaluation agrees
    double s = u(rng);
    if (anchor_vertex(fibre, s) != k) s = fibre.arc[k];
    return s;
}

std::vector<double> log_fibre_choice(std::span<const Fibre* const> fibres,
                                     std::span<const FibreCache* const> caches, std::size_t i) {
    std::vector<double> lw(fibres.size(), kNegInf);
    for (std::size_t c = 0; c < fibres.size(); ++c) {
        const double l = fibres[c]->l_total();
        if (degenerate(*fibres[c])) continue;
        lw[c] = std::log(l) + caches[c]->log_phi_near[i];
    }
    const double norm = log_sum_exp(lw);
    if (norm == kNegInf) return lw;
    for (double& x : lw) x -= norm;
    return lw;
}

} // namespace fibrefield
