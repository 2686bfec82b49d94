#include "fibrefield/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fibrefield/error.hpp"

namespace fibrefield {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void Hyperparams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0) || !std::isfinite(v))
            throw Error(ErrorKind::Config, std::string(name) + " must be positive and finite");
    };
    positive(kappa, "kappa");
    positive(lambda, "lambda");
    positive(sigma_disp, "sigma_disp");
    positive(eta, "eta");
    positive(alpha_signal, "alpha_signal");
    positive(beta_signal, "beta_signal");
    positive(alpha_dir, "alpha_dir");
    positive(sigma_fo, "sigma_fo");
    positive(h_fo, "h_fo");
}

std::size_t Allocation::signal_count() const {
    return static_cast<std::size_t>(std::count_if(fibre.begin(), fibre.end(), [](int x) { return x >= 0; }));
}

double total_length(const FibreSet& fibres) {
    double sum = 0;
    for (const Fibre& f : fibres) sum += f.l_total();
    return sum;
}

double mu_total(const FibreSet& fibres, const Hyperparams& h) {
    return total_length(fibres) * h.eta / (1 - h.rho());
}

double log_poisson(long n, double mean) {
    if (mean <= 0) return n == 0 ? 0.0 : kNegInf;
    return static_cast<double>(n) * std::log(mean) - mean - std::lgamma(static_cast<double>(n) + 1);
}

double log_exp_density(double x, double mean) {
    if (x < 0) return kNegInf;
    return -std::log(mean) - x / mean;
}

double log_beta_density(double x, double alpha, double beta) {
    if (!(x > 0 && x < 1)) return kNegInf;
    return std::lgamma(alpha + beta) - std::lgamma(alpha) - std::lgamma(beta) +
           (alpha - 1) * std::log(x) + (beta - 1) * std::log1p(-x);
}

double log_normal2(const Point2& y, const Point2& p, double sigma) {
    const double s2 = sigma * sigma;
    return -std::log(2 * std::numbers::pi * s2) - (y - p).squaredNorm() / (2 * s2);
}

double log_spacing_density(std::span<const double> positions, double length, double alpha) {
    const std::size_t n = positions.size();
    if (n == 0) return 0;
    if (!(length > 0)) return kNegInf;
    std::vector<double> s(positions.begin(), positions.end());
    std::sort(s.begin(), s.end());
    const double dn = static_cast<double>(n);
    double value = std::lgamma((dn + 1) * alpha) - (dn + 1) * std::lgamma(alpha);
    if (alpha != 1) {
        double prev = 0;
        double log_gaps = 0;
        for (double x : s) {
            log_gaps += std::log((x - prev) / length);
            prev = x;
        }
        log_gaps += std::log((length - prev) / length);
        value += (alpha - 1) * log_gaps;
    }
    // change of scale to arc length, and labelled rather than sorted anchors
    return value - dn * std::log(length) - std::lgamma(dn + 1);
}

double log_prior(const FibreSet& fibres, const Hyperparams& h, const WindowRect& window) {
    const double log_area = std::log(window.area());
    double value = log_poisson(static_cast<long>(fibres.size()), h.kappa);
    for (const Fibre& f : fibres)
        value += log_exp_density(f.l1, h.lambda) + log_exp_density(f.l2, h.lambda) - log_area;
    return value;
}

double log_eps_prior(std::span<const double> eps, const Hyperparams& h) {
    double value = 0;
    for (double e : eps) value += log_beta_density(e, h.alpha_signal, h.beta_signal);
    return value;
}

void validate_allocation(const FibreSet& fibres, const Allocation& alloc, std::size_t m) {
    if (alloc.fibre.size() != m || alloc.arc.size() != m || alloc.anchor.size() != m)
        throw Error(ErrorKind::InvalidAllocation, "allocation size does not match the data");
    for (std::size_t i = 0; i < m; ++i) {
        const int j = alloc.fibre[i];
        if (j < 0) continue;
        if (fibres.empty())
            throw Error(ErrorKind::ZeroFibreLikelihood,
                        "signal point " + std::to_string(i) + " with no fibres");
        if (static_cast<std::size_t>(j) >= fibres.size())
            throw Error(ErrorKind::InvalidAllocation, "fibre index out of range for point " + std::to_string(i));
        const Fibre& f = fibres[static_cast<std::size_t>(j)];
        const double s = alloc.arc[i];
        const double tol = 1e-9 * (1 + f.l_total());
        if (s < -tol || s > f.l_total() + tol)
            throw Error(ErrorKind::InvalidAllocation, "anchor arc position off fibre for point " + std::to_string(i));
        const Point2 p = f.point_at(s);
        if ((p - alloc.anchor[i]).norm() > 1e-9 * (1 + p.norm()))
            throw Error(ErrorKind::InvalidAllocation, "anchor does not lie on its fibre for point " + std::to_string(i));
    }
}

LikelihoodTerms log_likelihood(const FibreSet& fibres, const Allocation& alloc,
                               std::span<const double> eps, const PointPattern& data,
                               const Hyperparams& h) {
    const std::size_t m = data.size();
    if (eps.size() != m) throw Error(ErrorKind::InvalidArgument, "eps size does not match the data");
    validate_allocation(fibres, alloc, m);

    LikelihoodTerms t;
    const double log_area = std::log(data.window.area());
    const double log_total = std::log(total_length(fibres));
    std::vector<std::vector<double>> positions(fibres.size());
    for (std::size_t i = 0; i < m; ++i) {
        const int j = alloc.fibre[i];
        if (j < 0) {
            t.allocation += std::log1p(-eps[i]);
            t.noise -= log_area;
            continue;
        }
        const Fibre& f = fibres[static_cast<std::size_t>(j)];
        t.allocation += std::log(eps[i]);
        t.fibre_choice += std::log(f.l_total()) - log_total;
        t.displacement += log_normal2(data.points[i], alloc.anchor[i], h.sigma_disp);
        positions[static_cast<std::size_t>(j)].push_back(alloc.arc[i]);
    }
    for (std::size_t j = 0; j < fibres.size(); ++j)
        t.spacing += log_spacing_density(positions[j], fibres[j].l_total(), h.alpha_dir);
    t.count = log_poisson(static_cast<long>(m), mu_total(fibres, h));
    return t;
}

double log_posterior(const FibreSet& fibres, const Allocation& alloc, std::span<const double> eps,
                     const PointPattern& data, const Hyperparams& h) {
    return log_prior(fibres, h, data.window) + log_eps_prior(eps, h) +
           log_likelihood(fibres, alloc, eps, data, h).total();
}

Fibre sample_prior_fibre(const OrientationGrid& grid, const Hyperparams& h, std::mt19937_64& rng,
                         const PriorFibreOptions& opts) {
    const WindowRect& w = grid.window();
    std::uniform_real_distribution<double> ux(w.xmin, w.xmax);
    std::uniform_real_distribution<double> uy(w.ymin, w.ymax);
    std::exponential_distribution<double> len(1.0 / h.lambda);
    for (int attempt = 0; attempt < opts.max_retries; ++attempt) {
        const Point2 omega(ux(rng), uy(rng));
        if (grid.at(omega).singular) continue;
        const double l1 = len(rng);
        const double l2 = len(rng);
        return trace_fibre(grid, omega, l1, l2, opts.step);
    }
    throw Error(ErrorKind::SingularField, "sample_prior_fibre: no non-singular reference point found");
}

} // namespace fibrefield
