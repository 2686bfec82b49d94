#include "fibrefield/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fibrefield/error.hpp"

namespace fibrefield {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void RatesConfig::validate() const {
    auto nonneg = [](double v, const char* name) {
        if (!(v >= 0) || !std::isfinite(v))
            throw Error(ErrorKind::Config, std::string(name) + " must be finite and >= 0");
    };
    if (!(beta_birth > 0) || !std::isfinite(beta_birth))
        throw Error(ErrorKind::Config, "beta_birth must be positive");
    if (!(r_record > 0) || !std::isfinite(r_record))
        throw Error(ErrorKind::Config, "r_record must be positive");
    nonneg(r_move, "r_move");
    nonneg(r_lengths, "r_lengths");
    nonneg(r_split_join, "r_split_join");
    nonneg(r_z, "r_z");
    nonneg(r_eps, "r_eps");
}

void SamplerSettings::validate() const {
    hyper.validate();
    rates.validate();
    if (!(grid_spacing > 0)) throw Error(ErrorKind::Config, "grid_spacing must be positive");
    if (!(step > 0)) throw Error(ErrorKind::Config, "step must be positive");
    if (!(moves.eps_concentration > 0)) throw Error(ErrorKind::Config, "eps_concentration must be positive");
}

double ChainState::death_total() const {
    return std::accumulate(death_rates.begin(), death_rates.end(), 0.0);
}

double log_target(const ChainState& s, const ChainContext& ctx) {
    const Hyperparams& h = ctx.settings.hyper;
    double value = log_prior(s.fibres, h, ctx.data.window) + log_eps_prior(s.eps, h);
    if (ctx.settings.constant_likelihood) {
        validate_allocation(s.fibres, s.alloc, ctx.data.size());
        return value;
    }
    return value + log_likelihood(s.fibres, s.alloc, s.eps, ctx.data, h).total();
}

FibreCache make_cache(const Fibre& f, const ChainContext& ctx, std::span<const double> eps) {
    return build_fibre_cache(f, ctx.data.points, eps, ctx.settings.hyper.sigma_disp,
                             ctx.data.window.area());
}

Fibre trace(const ChainState& s, const ChainContext& ctx, const Point2& omega, double l1, double l2) {
    return trace_fibre(*s.grid, omega, l1, l2, ctx.settings.step);
}

void refresh_death_rates(ChainState& s, const ChainContext& ctx) { s.death_rates = death_rates(s, ctx); }

ChainState initial_state(const ChainContext& ctx, std::mt19937_64& rng) {
    const SamplerSettings& cfg = ctx.settings;
    const std::size_t m = ctx.data.size();
    ChainState s;
    s.eps.assign(m, cfg.hyper.eps_prior_mean());
    s.alloc = Allocation::all_noise(m);
    if (cfg.fixed_grid) {
        s.grid = cfg.fixed_grid;
    } else {
        s.grid = std::make_shared<const OrientationGrid>(
            estimate_field(ctx.data.points, s.eps, ctx.data.window, cfg.field_params()));
    }
    // the count term has zero density without fibres when there is data
    const auto k0 = std::max<std::size_t>(m > 0 ? 1 : 0, static_cast<std::size_t>(std::lround(cfg.hyper.kappa)));
    const PriorFibreOptions popts{cfg.step, cfg.max_prior_retries};
    for (int attempt = 0; attempt < 100; ++attempt) {
        s.fibres.clear();
        for (std::size_t j = 0; j < k0; ++j)
            s.fibres.push_back(sample_prior_fibre(*s.grid, cfg.hyper, rng, popts));
        s.log_target = log_target(s, ctx);
        if (std::isfinite(s.log_target)) break;
    }
    if (!std::isfinite(s.log_target))
        throw Error(ErrorKind::SingularField, "could not draw an initial state with finite density");
    s.caches.clear();
    for (const Fibre& f : s.fibres) s.caches.push_back(make_cache(f, ctx, s.eps));
    refresh_death_rates(s, ctx);
    return s;
}

BirthProposal propose_birth(const ChainState& s, const ChainContext& ctx, std::mt19937_64& rng) {
    const SamplerSettings& cfg = ctx.settings;
    BirthProposal b;
    b.fibre = sample_prior_fibre(*s.grid, cfg.hyper, rng, {cfg.step, cfg.max_prior_retries});
    b.cache = make_cache(b.fibre, ctx, s.eps);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t i = 0; i < ctx.data.size(); ++i) {
        if (s.alloc.is_signal(i)) continue;
        if (std::log(u01(rng)) < b.cache.log_flip[i]) {
            const Point2& y = ctx.data.points[i];
            const double arc = sample_anchor(b.fibre, y, cfg.hyper.sigma_disp, rng);
            b.flipped.push_back(i);
            b.arcs.push_back(arc);
            b.log_q_forward += b.cache.log_flip[i] +
                               log_anchor_density(b.fibre, b.cache, i, y, arc, cfg.hyper.sigma_disp);
        } else {
            b.log_q_forward += b.cache.log_stay[i];
        }
    }
    return b;
}

void apply_birth(ChainState& s, const ChainContext& ctx, BirthProposal&& b) {
    const int j = static_cast<int>(s.fibres.size());
    for (std::size_t n = 0; n < b.flipped.size(); ++n)
        s.alloc.set_signal(b.flipped[n], j, b.arcs[n], b.fibre.point_at(b.arcs[n]));
    s.fibres.push_back(std::move(b.fibre));
    s.caches.push_back(std::move(b.cache));
    s.log_target = log_target(s, ctx);
    refresh_death_rates(s, ctx);
}

namespace {

/// log of Q_birth(Z' -> Z | F_j) Q_anchor(X', p' -> X, p): the birth of fibre j
/// from the state without it, re-flipping exactly its current points.
double log_reverse_birth(const ChainState& s, const ChainContext& ctx, std::size_t j) {
    const Fibre& f = s.fibres[j];
    const FibreCache& c = s.caches[j];
    const double sigma = ctx.settings.hyper.sigma_disp;
    double value = 0;
    for (std::size_t i = 0; i < ctx.data.size(); ++i) {
        const int x = s.alloc.fibre[i];
        if (x < 0) {
            value += c.log_stay[i];
        } else if (static_cast<std::size_t>(x) == j) {
            value += c.log_flip[i] +
                     log_anchor_density(f, c, i, ctx.data.points[i], s.alloc.arc[i], sigma);
        }
    }
    return value;
}

} // namespace

double log_death_rate(const ChainState& s, const ChainContext& ctx, std::size_t j) {
    const Hyperparams& h = ctx.settings.hyper;
    // Prior ratio: P(k-1) / (k P(k)) = 1 / kappa; the fibre's own prior terms
    // cancel against the birth density.
    double value = std::log(ctx.settings.rates.beta_birth) - std::log(h.kappa);
    value += log_reverse_birth(s, ctx, j);
    if (ctx.settings.constant_likelihood) return value;

    const Fibre& f = s.fibres[j];
    const std::size_t m = ctx.data.size();
    const double lj = f.l_total();
    const double total = total_length(s.fibres);
    const double rest = total - lj;
    const double log_area = std::log(ctx.data.window.area());

    std::size_t n_signal = 0;
    std::vector<double> arcs;
    double delta = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const int x = s.alloc.fibre[i];
        if (x < 0) continue;
        ++n_signal;
        if (static_cast<std::size_t>(x) != j) continue;
        arcs.push_back(s.alloc.arc[i]);
        delta += std::log1p(-s.eps[i]) - std::log(s.eps[i]);
        delta -= std::log(lj) - std::log(total);
        delta -= log_normal2(ctx.data.points[i], s.alloc.anchor[i], h.sigma_disp);
        delta -= log_area;
    }
    const std::size_t others = n_signal - arcs.size();
    if (others > 0) delta += static_cast<double>(others) * (std::log(total) - std::log(rest));
    delta -= log_spacing_density(arcs, lj, h.alpha_dir);
    const double scale = h.eta / (1 - h.rho());
    delta += log_poisson(static_cast<long>(m), rest * scale) -
             log_poisson(static_cast<long>(m), total * scale);
    return value + delta;
}

std::vector<double> death_rates(const ChainState& s, const ChainContext& ctx) {
    // A state this unlikely lasts under 1e-250 time units, so the cap keeps the
    // total rate finite without visibly changing the dynamics.
    constexpr double log_rate_cap = 575.0;  // about 1e250
    std::vector<double> rates(s.k());
    for (std::size_t j = 0; j < s.k(); ++j) {
        const double lr = log_death_rate(s, ctx, j);
        rates[j] = std::isnan(lr) ? 0.0 : std::exp(std::min(lr, log_rate_cap));
    }
    return rates;
}

ChainState without_fibre(const ChainState& s, const ChainContext& ctx, std::size_t j) {
    ChainState n = s;
    n.fibres.erase(n.fibres.begin() + static_cast<std::ptrdiff_t>(j));
    n.caches.erase(n.caches.begin() + static_cast<std::ptrdiff_t>(j));
    const int jj = static_cast<int>(j);
    for (std::size_t i = 0; i < n.alloc.size(); ++i) {
        const int x = n.alloc.fibre[i];
        if (x == jj) n.alloc.set_noise(i);
        else if (x > jj) n.alloc.fibre[i] = x - 1;
    }
    n.log_target = log_target(n, ctx);
    return n;
}

double log_death_rate_general(const ChainState& s, const ChainContext& ctx, std::size_t j) {
    const Hyperparams& h = ctx.settings.hyper;
    const Fibre& f = s.fibres[j];
    const ChainState reduced = without_fibre(s, ctx, j);
    const double k = static_cast<double>(s.k());
    const double birth_prior = -std::log(ctx.data.window.area()) + log_exp_density(f.l1, h.lambda) +
                               log_exp_density(f.l2, h.lambda);
    return std::log(ctx.settings.rates.beta_birth) - std::log(k) + reduced.log_target -
           log_target(s, ctx) + birth_prior + log_reverse_birth(s, ctx, j);
}

void apply_death(ChainState& s, const ChainContext& ctx, std::size_t j) {
    const double clock = s.clock;
    s = without_fibre(s, ctx, j);
    s.clock = clock;
    refresh_death_rates(s, ctx);
}

const char* event_name(EventKind k) {
    switch (k) {
    case EventKind::Birth: return "birth";
    case EventKind::Death: return "death";
    case EventKind::Move: return "move";
    case EventKind::Lengths: return "lengths";
    case EventKind::SplitJoin: return "split_join";
    case EventKind::UpdateZ: return "update_z";
    case EventKind::UpdateEps: return "update_eps";
    case EventKind::Record: return "record";
    }
    return "unknown";
}

StepResult step(ChainState& s, const ChainContext& ctx, std::mt19937_64& rng) {
    const RatesConfig& r = ctx.settings.rates;
    StepResult res;
    res.death_total_before = s.death_total();
    const double total = r.beta_birth + res.death_total_before + r.r_add() + r.r_record;
    res.dt = std::exponential_distribution<double>(total)(rng);
    s.clock += res.dt;

    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    auto take = [&u](double rate) {
        if (u < rate) return true;
        u -= rate;
        return false;
    };

    auto run_mh = [&](std::optional<Proposal> p) {
        if (!p) return;
        const double log_u = std::log(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
        if (log_u < p->log_ratio) {
            p->next.clock = s.clock;
            s = std::move(p->next);
            refresh_death_rates(s, ctx);
            res.accepted = true;
        }
    };

    if (take(r.beta_birth)) {
        res.kind = EventKind::Birth;
        try {
            apply_birth(s, ctx, propose_birth(s, ctx, rng));
            res.accepted = true;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::SingularField) throw;
        }
        return res;
    }
    for (std::size_t j = 0; j < s.k(); ++j) {
        if (take(s.death_rates[j])) {
            res.kind = EventKind::Death;
            apply_death(s, ctx, j);
            res.accepted = true;
            return res;
        }
    }
    if (take(r.r_move)) {
        res.kind = EventKind::Move;
        run_mh(propose_move_fibre(s, ctx, rng));
    } else if (take(r.r_lengths)) {
        res.kind = EventKind::Lengths;
        run_mh(propose_resample_lengths(s, ctx, rng));
    } else if (take(r.r_split_join)) {
        res.kind = EventKind::SplitJoin;
        const bool split = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5;
        run_mh(split ? propose_split(s, ctx, rng) : propose_join(s, ctx, rng));
    } else if (take(r.r_z)) {
        res.kind = EventKind::UpdateZ;
        run_mh(propose_update_z(s, ctx, rng));
    } else if (take(r.r_eps)) {
        res.kind = EventKind::UpdateEps;
        run_mh(propose_update_eps(s, ctx, rng));
    } else {
        res.kind = EventKind::Record;
    }
    return res;
}

TraceRecord make_record(const ChainState& s, const ChainContext& ctx) {
    TraceRecord rec;
    rec.clock = s.clock;
    rec.k = static_cast<int>(s.k());
    rec.total_length = total_length(s.fibres);
    const std::size_t m = ctx.data.size();
    rec.z.resize(m);
    rec.x.resize(m);
    std::vector<double> dist;
    for (std::size_t i = 0; i < m; ++i) {
        const bool sig = s.alloc.is_signal(i);
        rec.z[i] = sig ? 1 : 0;
        rec.x[i] = s.alloc.fibre[i];
        if (sig) dist.push_back((ctx.data.points[i] - s.alloc.anchor[i]).norm());
        else ++rec.n_noise;
    }
    rec.eps_mean = m ? std::accumulate(s.eps.begin(), s.eps.end(), 0.0) / static_cast<double>(m) : 0.0;
    if (!dist.empty()) {
        std::sort(dist.begin(), dist.end());
        const double pos = 0.95 * static_cast<double>(dist.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, dist.size() - 1);
        rec.dispersion_p95 = dist[lo] + (pos - static_cast<double>(lo)) * (dist[hi] - dist[lo]);
    }
    for (const Fibre& f : s.fibres)
        rec.fibres.push_back({f.omega, f.l1, f.l2, f.l_total(), f.truncated, f.vertices});
    return rec;
}

BurnIn burn_in_time(const Hyperparams& h, const WindowRect& window, double beta_birth) {
    BurnIn b;
    const double p = 8 * h.lambda * std::log(10.0 / 9.0) * h.sigma_disp / (h.kappa * window.area());
    if (!(p < 1)) {
        b.degenerate = true;
        b.formula = std::numeric_limits<double>::quiet_NaN();
        return b;
    }
    b.formula = std::log(0.01) / (beta_birth * std::log1p(-p));
    b.time = std::max(1500.0, b.formula);
    return b;
}

ChainResult run_chain(const PointPattern& data, const SamplerSettings& settings, std::uint64_t seed,
                      const RunOptions& opts) {
    settings.validate();
    const ChainContext ctx{data, settings};
    ChainResult out;
    out.burn_in = burn_in_time(settings.hyper, data.window, settings.rates.beta_birth);
    const double burn = opts.burn_in.value_or(out.burn_in.time);
    if (opts.burn_in) out.burn_in.time = burn;
    if (!(opts.t_end > burn))
        throw Error(ErrorKind::InvalidArgument, "t_end must exceed the burn-in time");

    std::mt19937_64 rng(seed);
    ChainState s = initial_state(ctx, rng);
    double pending_dt = 0;
    double last_event_time = 0;
    while (s.clock < opts.t_end) {
        const StepResult res = step(s, ctx, rng);
        const auto kind = static_cast<std::size_t>(res.kind);
        ++out.counts.proposed[kind];
        if (res.accepted) ++out.counts.accepted[kind];
        pending_dt += res.dt;
        if (res.kind == EventKind::Record) {
            if (s.clock >= burn && s.clock <= opts.t_end) out.records.push_back(make_record(s, ctx));
            continue;
        }
        // delta_total after the previous event times the wait until this one
        if (last_event_time >= burn) out.death_products.push_back(res.death_total_before * pending_dt);
        pending_dt = 0;
        last_event_time = s.clock;
        if (s.clock >= burn) out.k_series.push_back(static_cast<int>(s.k()));
    }
    out.final_state = std::move(s);
    return out;
}

} // namespace fibrefield
