#pragma once

// Proposal densities shared by the birth-death sampler and its extra moves.
//
// Q_birth: when a fibre F is born, each noise point i independently becomes
// signal on F with probability q_i = w_i / (1 + w_i), where
//   w_i = eps_i / (1 - eps_i) * |W| * N2(y_i; pi_F(y_i), sigma^2 I)
// and pi_F(y) is the nearest point of F's polyline.
//
// Q_anchor: a point joining fibre F gets its arc position from the piecewise
// constant density q(s) = N2(y; v_k(s)) / sum_k N2(y; v_k) |cell_k|, where
// v_k(s) is the polyline vertex nearest (in arc length) to s and cell_k is the
// arc interval closer to v_k than to any other vertex. When several fibres are
// candidates, fibre j is chosen with probability proportional to
// l_j * N2(y; pi_Fj(y)).

#include <random>
#include <span>
#include <vector>

#include "fibrefield/field.hpp"
#include "fibrefield/geometry.hpp"

namespace fibrefield {

/// Per-fibre quantities for every data point; depends only on the fibre
/// geometry, the data and eps.
struct FibreCache {
    std::vector<double> log_phi_near;     // log N2(y_i; pi_F(y_i))
    std::vector<double> log_anchor_norm;  // log sum_k N2(y_i; v_k) |cell_k|
    std::vector<double> log_flip;         // log q_i
    std::vector<double> log_stay;         // log (1 - q_i)
};

FibreCache build_fibre_cache(const Fibre& fibre, std::span<const Point2> points,
                             std::span<const double> eps, double sigma_disp, double window_area);

/// Recomputes log_flip/log_stay for new eps without touching the geometry terms.
void refresh_flip_terms(FibreCache& cache, const Fibre& fibre, std::span<const double> eps,
                        double window_area);

/// Arc interval [lo, hi] of the Voronoi cell around vertex k.
std::pair<double, double> anchor_cell(const Fibre& fibre, std::size_t k);

/// Vertex owning arc position s (nearest in arc length, ties to the lower index).
std::size_t anchor_vertex(const Fibre& fibre, double s);

double log_anchor_density(const Fibre& fibre, const FibreCache& cache, std::size_t i,
                          const Point2& y, double s, double sigma_disp);

/// Draws an arc position from the anchor density of point y on the fibre.
double sample_anchor(const Fibre& fibre, const Point2& y, double sigma_disp, std::mt19937_64& rng);

/// log P(X_i = candidates[c]) for the fibre-choice part of Q_anchor.
std::vector<double> log_fibre_choice(std::span<const Fibre* const> fibres,
                                     std::span<const FibreCache* const> caches, std::size_t i);

double log_sum_exp(std::span<const double> v);
/// log(1 + exp(x)) without overflow.
double softplus(double x);

} // namespace fibrefield
