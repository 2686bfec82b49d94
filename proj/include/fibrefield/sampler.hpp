#pragma once

// Continuous-time birth-death MCMC over fibre configurations.
//
// Births occur at rate beta with fibres drawn from the prior; each fibre j
// dies at the rate delta_j that balances its birth. Extra moves (fibre move,
// length resampling, split/join, Z and eps updates) fire at fixed rates and are
// accepted by Metropolis-Hastings. Output is recorded at the times of an
// independent Poisson clock.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fibrefield/field.hpp"
#include "fibrefield/model.hpp"
#include "fibrefield/proposals.hpp"

namespace fibrefield {

struct RatesConfig {
    double beta_birth = 1;
    double r_move = 1;
    double r_lengths = 1;
    double r_split_join = 1;
    double r_z = 1;
    double r_eps = 0.1;
    double r_record = 0.025;

    double r_add() const { return r_move + r_lengths + r_split_join + r_z + r_eps; }
    void validate() const;
};

/// Tuning of the extra moves; zero values mean "derive from sigma_disp".
struct MoveParams {
    double sigma_move = 0;    // default 2 sigma_disp
    double d_join = 0;        // default 2 sigma_disp
    double split_jitter = 0;  // default sigma_disp
    double eps_concentration = 1;
};

struct SamplerSettings {
    Hyperparams hyper;
    RatesConfig rates;
    MoveParams moves;
    double grid_spacing = 1;
    double step = 1;  // streamline step
    int max_prior_retries = 1000;

    /// Test hook: log-likelihood replaced by a constant.
    bool constant_likelihood = false;
    /// Test hook: use this field and never re-estimate it.
    std::shared_ptr<const OrientationGrid> fixed_grid;

    double sigma_move() const { return moves.sigma_move > 0 ? moves.sigma_move : 2 * hyper.sigma_disp; }
    double d_join() const { return moves.d_join > 0 ? moves.d_join : 2 * hyper.sigma_disp; }
    double split_jitter() const {
        return moves.split_jitter > 0 ? moves.split_jitter : hyper.sigma_disp;
    }
    FieldParams field_params() const {
        FieldParams p;
        p.sigma_fo = hyper.sigma_fo;
        p.h_fo = hyper.h_fo;
        p.spacing = grid_spacing;
        return p;
    }
    void validate() const;
};

struct ChainState {
    FibreSet fibres;
    std::vector<FibreCache> caches;  // parallel to fibres
    Allocation alloc;
    std::vector<double> eps;
    std::shared_ptr<const OrientationGrid> grid;
    double clock = 0;
    std::vector<double> death_rates;
    double log_target = 0;

    std::size_t k() const { return fibres.size(); }
    double death_total() const;
};

/// Read-only inputs shared by every operation on a chain.
struct ChainContext {
    const PointPattern& data;
    SamplerSettings settings;
};

/// Log target density: prior + eps prior + likelihood (or a constant under the test hook).
double log_target(const ChainState& s, const ChainContext& ctx);

FibreCache make_cache(const Fibre& f, const ChainContext& ctx, std::span<const double> eps);

Fibre trace(const ChainState& s, const ChainContext& ctx, const Point2& omega, double l1, double l2);

/// kappa prior fibres, all points noise, eps at its prior mean.
ChainState initial_state(const ChainContext& ctx, std::mt19937_64& rng);

struct BirthProposal {
    Fibre fibre;
    FibreCache cache;
    std::vector<std::size_t> flipped;
    std::vector<double> arcs;  // anchor arc positions of flipped points
    double log_q_forward = 0;  // Q_birth * Q_anchor
    double log_q_reverse = 0;  // Q_death = 1
};

BirthProposal propose_birth(const ChainState& s, const ChainContext& ctx, std::mt19937_64& rng);
void apply_birth(ChainState& s, const ChainContext& ctx, BirthProposal&& b);

/// log delta_j from the reduced closed form (local likelihood changes only).
double log_death_rate(const ChainState& s, const ChainContext& ctx, std::size_t j);
std::vector<double> death_rates(const ChainState& s, const ChainContext& ctx);
/// log delta_j from full posterior evaluations of the state with and without fibre j.
double log_death_rate_general(const ChainState& s, const ChainContext& ctx, std::size_t j);

/// State after fibre j dies; its points revert to noise.
ChainState without_fibre(const ChainState& s, const ChainContext& ctx, std::size_t j);
void apply_death(ChainState& s, const ChainContext& ctx, std::size_t j);

void refresh_death_rates(ChainState& s, const ChainContext& ctx);

/// A Metropolis-Hastings proposal: candidate state and log acceptance ratio.
struct Proposal {
    ChainState next;
    double log_ratio = 0;
};

std::optional<Proposal> propose_move_fibre(const ChainState& s, const ChainContext& ctx,
                                           std::mt19937_64& rng);
std::optional<Proposal> propose_resample_lengths(const ChainState& s, const ChainContext& ctx,
                                                 std::mt19937_64& rng);
std::optional<Proposal> propose_split(const ChainState& s, const ChainContext& ctx,
                                      std::mt19937_64& rng);
std::optional<Proposal> propose_join(const ChainState& s, const ChainContext& ctx,
                                     std::mt19937_64& rng);
std::optional<Proposal> propose_update_z(const ChainState& s, const ChainContext& ctx,
                                         std::mt19937_64& rng);
/// If eps_override is given it is used instead of the Beta draw.
std::optional<Proposal> propose_update_eps(const ChainState& s, const ChainContext& ctx,
                                           std::mt19937_64& rng,
                                           const std::vector<double>* eps_override = nullptr);

// Deterministic pieces of split/join, exposed for tests.
struct SplitDraw {
    std::size_t fibre = 0;
    bool plus_side = true;
    double v = 0.5;
    double w = 0.5;
    Point2 jitter{0, 0};
};
std::optional<Proposal> split_with(const ChainState& s, const ChainContext& ctx, const SplitDraw& d,
                                   std::mt19937_64& rng);
std::optional<Proposal> join_with(const ChainState& s, const ChainContext& ctx, std::size_t a,
                                  std::size_t b, bool plus_side, std::mt19937_64& rng);
double join_gap(const Fibre& a, const Fibre& b, bool plus_side);

enum class EventKind { Birth, Death, Move, Lengths, SplitJoin, UpdateZ, UpdateEps, Record };
const char* event_name(EventKind k);

struct StepResult {
    EventKind kind = EventKind::Record;
    double dt = 0;
    bool accepted = false;
    double death_total_before = 0;
};

/// One event of the continuous-time chain. Record events leave the state untouched.
StepResult step(ChainState& s, const ChainContext& ctx, std::mt19937_64& rng);

struct TraceRecord {
    double clock = 0;
    int k = 0;
    double total_length = 0;
    int n_noise = 0;
    double eps_mean = 0;
    double dispersion_p95 = 0;
    std::vector<int> z;
    std::vector<int> x;
    struct FibreSummary {
        Point2 omega{0, 0};
        double l1 = 0, l2 = 0, l_total = 0;
        bool truncated = false;
        std::vector<Point2> vertices;
    };
    std::vector<FibreSummary> fibres;
};

TraceRecord make_record(const ChainState& s, const ChainContext& ctx);

struct BurnIn {
    double time = 1500;
    double formula = 0;       // the log(0.01)/(beta log(1 - p)) term
    bool degenerate = false;  // p >= 1, pinned to the lower bound
};
BurnIn burn_in_time(const Hyperparams& h, const WindowRect& window, double beta_birth);

struct EventCounts {
    std::vector<long> proposed = std::vector<long>(8, 0);
    std::vector<long> accepted = std::vector<long>(8, 0);
};

struct ChainResult {
    std::vector<TraceRecord> records;
    BurnIn burn_in;
    /// delta_total * dt for each non-record event after burn-in.
    std::vector<double> death_products;
    std::vector<int> k_series;  // k after each post-burn-in event
    EventCounts counts;
    ChainState final_state;
};

struct RunOptions {
    double t_end = 3000;
    /// When set, overrides the computed burn-in.
    std::optional<double> burn_in;
};

ChainResult run_chain(const PointPattern& data, const SamplerSettings& settings, std::uint64_t seed,
                      const RunOptions& opts);

} // namespace fibrefield
