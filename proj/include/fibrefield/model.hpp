#pragma once

// Hierarchical fibre/point model: priors on fibres and signal probabilities,
// the factorised likelihood of an allocation, and prior sampling of fibres.

#include <random>
#include <span>
#include <vector>

#include "fibrefield/field.hpp"
#include "fibrefield/geometry.hpp"

namespace fibrefield {

struct Hyperparams {
    double kappa = 2;        // prior mean fibre count
    double lambda = 78.5;    // mean half-length (Exp mean)
    double sigma_disp = 3;   // displacement s.d.
    double eta = 0.64;       // signal points per unit fibre length
    double alpha_signal = 1;
    double beta_signal = 1;
    double alpha_dir = 1.5;  // Dirichlet spacing parameter
    double sigma_fo = 20;
    double h_fo = 10;

    /// Prior noise proportion beta / (alpha + beta).
    double rho() const { return beta_signal / (alpha_signal + beta_signal); }
    /// Prior mean of each eps_i.
    double eps_prior_mean() const { return alpha_signal / (alpha_signal + beta_signal); }

    void validate() const;
};

using FibreSet = std::vector<Fibre>;

/// Signal/noise allocation. fibre[i] < 0 marks noise; otherwise point i is
/// anchored on fibre[i] at arc position arc[i] with coordinate anchor[i].
struct Allocation {
    std::vector<int> fibre;
    std::vector<double> arc;
    std::vector<Point2> anchor;

    static Allocation all_noise(std::size_t m) {
        return {std::vector<int>(m, -1), std::vector<double>(m, 0.0),
                std::vector<Point2>(m, Point2::Zero())};
    }

    std::size_t size() const { return fibre.size(); }
    bool is_signal(std::size_t i) const { return fibre[i] >= 0; }
    std::size_t signal_count() const;

    void set_noise(std::size_t i) {
        fibre[i] = -1;
        arc[i] = 0;
        anchor[i] = Point2::Zero();
    }
    void set_signal(std::size_t i, int j, double s, const Point2& p) {
        fibre[i] = j;
        arc[i] = s;
        anchor[i] = p;
    }
};

/// Per-component log-likelihood. Components:
///   allocation   sum Z log eps + (1 - Z) log(1 - eps)
///   fibre_choice sum_signal log(l_X / sum l)
///   spacing      per fibre: ordered Dirichlet gaps of its anchors
///   displacement sum_signal log N2(y; p, sigma^2 I)
///   noise        sum_noise -log|W|
///   count        log Poisson(m; mu_total)
struct LikelihoodTerms {
    double allocation = 0;
    double fibre_choice = 0;
    double spacing = 0;
    double displacement = 0;
    double noise = 0;
    double count = 0;

    double total() const {
        return allocation + fibre_choice + spacing + displacement + noise + count;
    }
};

double mu_total(const FibreSet& fibres, const Hyperparams& h);
double total_length(const FibreSet& fibres);

double log_poisson(long n, double mean);
/// Exponential density with the given mean.
double log_exp_density(double x, double mean);
double log_beta_density(double x, double alpha, double beta);
/// log N2(y; p, sigma^2 I)
double log_normal2(const Point2& y, const Point2& p, double sigma);

/// Log density of n labelled anchor positions on a fibre of length l whose
/// sorted gaps (both end gaps included) are Dirichlet(alpha, ..., alpha) after
/// normalisation by l.
double log_spacing_density(std::span<const double> positions, double length, double alpha);

/// sum_j [logExp(l1) + logExp(l2) - log|W|] + log Poisson(k; kappa), on nominal lengths.
double log_prior(const FibreSet& fibres, const Hyperparams& h, const WindowRect& window);

/// sum_i log Beta(eps_i; alpha_signal, beta_signal)
double log_eps_prior(std::span<const double> eps, const Hyperparams& h);

/// Throws InvalidAllocation or ZeroFibreLikelihood on inconsistent states.
LikelihoodTerms log_likelihood(const FibreSet& fibres, const Allocation& alloc,
                               std::span<const double> eps, const PointPattern& data,
                               const Hyperparams& h);

double log_posterior(const FibreSet& fibres, const Allocation& alloc, std::span<const double> eps,
                     const PointPattern& data, const Hyperparams& h);

/// Checks anchors lie on their fibres and indices are in range.
void validate_allocation(const FibreSet& fibres, const Allocation& alloc, std::size_t m);

struct PriorFibreOptions {
    double step = 1;
    int max_retries = 1000;
};

/// omega ~ Uniform(W), l1, l2 iid Exp(mean lambda), traced through the grid;
/// omega is redrawn while it lands in a singular cell.
Fibre sample_prior_fibre(const OrientationGrid& grid, const Hyperparams& h, std::mt19937_64& rng,
                         const PriorFibreOptions& opts = {});

} // namespace fibrefield
