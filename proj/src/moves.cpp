// Metropolis-Hastings moves fired at fixed rates alongside births and deaths.

#include <algorithm>
#include <cmath>
#include <limits>

#include "fibrefield/error.hpp"
#include "fibrefield/sampler.hpp"

namespace fibrefield {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool degenerate(const Fibre& f) { return f.vertices.size() < 2 || !(f.l_total() > 0); }

std::size_t uniform_index(std::size_t n, std::mt19937_64& rng) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::vector<std::size_t> points_on(const Allocation& a, std::size_t j) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.fibre[i] == static_cast<int>(j)) out.push_back(i);
    return out;
}

/// log Q_anchor of the current arc positions of pts on fibre j.
double log_current_anchors(const ChainState& s, const ChainContext& ctx, std::size_t j,
                           const std::vector<std::size_t>& pts) {
    double value = 0;
    for (std::size_t i : pts)
        value += log_anchor_density(s.fibres[j], s.caches[j], i, ctx.data.points[i], s.alloc.arc[i],
                                    ctx.settings.hyper.sigma_disp);
    return value;
}

/// Draws new anchors on fibre j of n for pts; returns the log proposal density.
double redraw_anchors(ChainState& n, const ChainContext& ctx, std::size_t j,
                      const std::vector<std::size_t>& pts, std::mt19937_64& rng) {
    const double sigma = ctx.settings.hyper.sigma_disp;
    const Fibre& f = n.fibres[j];
    double value = 0;
    for (std::size_t i : pts) {
        const Point2& y = ctx.data.points[i];
        const double arc = sample_anchor(f, y, sigma, rng);
        n.alloc.set_signal(i, static_cast<int>(j), arc, f.point_at(arc));
        value += log_anchor_density(f, n.caches[j], i, y, arc, sigma);
    }
    return value;
}

bool usable_reference(const ChainState& s, const ChainContext& ctx, const Point2& omega) {
    return ctx.data.window.contains(omega) && !s.grid->at(omega).singular;
}

/// Shared tail of the fibre move and length resampling: replace fibre j.
std::optional<Proposal> replace_fibre(const ChainState& s, const ChainContext& ctx, std::size_t j,
                                      Fibre&& f, double log_extra, std::mt19937_64& rng) {
    const auto pts = points_on(s.alloc, j);
    if (!pts.empty() && degenerate(f)) return std::nullopt;
    Proposal p{s, 0};
    p.next.caches[j] = make_cache(f, ctx, s.eps);
    p.next.fibres[j] = std::move(f);
    const double rev = log_current_anchors(s, ctx, j, pts);
    const double fwd = redraw_anchors(p.next, ctx, j, pts, rng);
    p.next.log_target = log_target(p.next, ctx);
    p.log_ratio = p.next.log_target - s.log_target + rev - fwd + log_extra;
    return p;
}

double log_choice_between(const ChainState& s, std::size_t a, std::size_t b, std::size_t i,
                          std::size_t pick) {
    const Fibre* fs[2] = {&s.fibres[a], &s.fibres[b]};
    const FibreCache* cs[2] = {&s.caches[a], &s.caches[b]};
    return log_fibre_choice(fs, cs, i)[pick];
}

std::vector<double> log_choice_all(const ChainState& s, std::size_t i) {
    std::vector<const Fibre*> fs;
    std::vector<const FibreCache*> cs;
    for (std::size_t j = 0; j < s.k(); ++j) {
        fs.push_back(&s.fibres[j]);
        cs.push_back(&s.caches[j]);
    }
    return log_fibre_choice(fs, cs, i);
}

/// Point of f at nominal arc distance d from omega along one side, clamped to the fibre.
Point2 along(const Fibre& f, bool plus_side, double d) {
    const double s = plus_side ? f.l1_realized + d : f.l1_realized - d;
    return f.point_at(std::clamp(s, 0.0, f.l_total()));
}

double draw_beta(double a, double b, std::mt19937_64& rng) {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
        const double x = ga(rng);
        const double y = gb(rng);
        const double v = x / (x + y);
        if (v > 0 && v < 1) return v;
    }
    throw Error(ErrorKind::InvalidArgument, "Beta draw stuck at the boundary");
}

} // namespace

std::optional<Proposal> propose_move_fibre(const ChainState& s, const ChainContext& ctx,
                                           std::mt19937_64& rng) {
    if (s.k() == 0) return std::nullopt;
    const std::size_t j = uniform_index(s.k(), rng);
    std::normal_distribution<double> n01;
    const double sd = ctx.settings.sigma_move();
    const Fibre& f = s.fibres[j];
    const Point2 omega = f.omega + Point2(sd * n01(rng), sd * n01(rng));
    if (!usable_reference(s, ctx, omega)) return std::nullopt;
    return replace_fibre(s, ctx, j, trace(s, ctx, omega, f.l1, f.l2), 0.0, rng);
}

std::optional<Proposal> propose_resample_lengths(const ChainState& s, const ChainContext& ctx,
                                                 std::mt19937_64& rng) {
    if (s.k() == 0) return std::nullopt;
    const std::size_t j = uniform_index(s.k(), rng);
    const double lambda = ctx.settings.hyper.lambda;
    const Fibre& f = s.fibres[j];
    if (uniform01(rng) < 0.5) {
        // symmetric random walk on one branch, so a fibre can grow or shrink gradually
        std::normal_distribution<double> n01;
        double w1 = f.l1, w2 = f.l2;
        (uniform01(rng) < 0.5 ? w1 : w2) += ctx.settings.sigma_move() * n01(rng);
        if (!(w1 >= 0 && w2 >= 0)) return std::nullopt;
        return replace_fibre(s, ctx, j, trace(s, ctx, f.omega, w1, w2), 0.0, rng);
    }
    // independence proposal from the prior
    std::exponential_distribution<double> len(1.0 / lambda);
    const double l1 = len(rng);
    const double l2 = len(rng);
    const double q_ratio = log_exp_density(f.l1, lambda) + log_exp_density(f.l2, lambda) -
                           log_exp_density(l1, lambda) - log_exp_density(l2, lambda);
    return replace_fibre(s, ctx, j, trace(s, ctx, f.omega, l1, l2), q_ratio, rng);
}

double join_gap(const Fibre& a, const Fibre& b, bool plus_side) {
    const Point2& end = plus_side ? a.vertices.back() : a.vertices.front();
    return std::min((b.vertices.front() - end).norm(), (b.vertices.back() - end).norm());
}

std::optional<Proposal> split_with(const ChainState& s, const ChainContext& ctx, const SplitDraw& d,
                                   std::mt19937_64& rng) {
    const std::size_t j = d.fibre;
    const Fibre& f = s.fibres[j];
    const double side_len = d.plus_side ? f.l2 : f.l1;
    if (!(side_len > 0)) return std::nullopt;
    const double a = side_len * d.v;
    const double rest = side_len - a;
    const double b1 = rest * d.w;
    const double b2 = rest - b1;
    if (!(b1 + b2 > 0)) return std::nullopt;

    Fibre fa = d.plus_side ? trace(s, ctx, f.omega, f.l1, a) : trace(s, ctx, f.omega, a, f.l2);
    const Point2 omega_b = along(f, d.plus_side, a + b1) + d.jitter;
    if (!usable_reference(s, ctx, omega_b)) return std::nullopt;
    Fibre fb = trace(s, ctx, omega_b, b1, b2);
    if (join_gap(fa, fb, d.plus_side) > ctx.settings.d_join()) return std::nullopt;

    const auto pts = points_on(s.alloc, j);
    const double rev = log_current_anchors(s, ctx, j, pts);

    Proposal p{s, 0};
    const std::size_t jb = s.k();
    p.next.caches[j] = make_cache(fa, ctx, s.eps);
    p.next.fibres[j] = std::move(fa);
    p.next.caches.push_back(make_cache(fb, ctx, s.eps));
    p.next.fibres.push_back(std::move(fb));

    const double sigma = ctx.settings.hyper.sigma_disp;
    double fwd = 0;
    for (std::size_t i : pts) {
        const Point2& y = ctx.data.points[i];
        const double lw_a = log_choice_between(p.next, j, jb, i, 0);
        const double lw_b = log_choice_between(p.next, j, jb, i, 1);
        if (lw_a == kNegInf && lw_b == kNegInf) return std::nullopt;
        const bool to_b = uniform01(rng) < std::exp(lw_b);
        const std::size_t c = to_b ? jb : j;
        const Fibre& fc = p.next.fibres[c];
        const double arc = sample_anchor(fc, y, sigma, rng);
        p.next.alloc.set_signal(i, static_cast<int>(c), arc, fc.point_at(arc));
        fwd += (to_b ? lw_b : lw_a) + log_anchor_density(fc, p.next.caches[c], i, y, arc, sigma);
    }
    p.next.log_target = log_target(p.next, ctx);

    const double tau = ctx.settings.split_jitter();
    const double log_jacobian = std::log(side_len) + std::log(b1 + b2);
    p.log_ratio = p.next.log_target - s.log_target - log_normal2(d.jitter, Point2::Zero(), tau) +
                  log_jacobian + rev - fwd;
    return p;
}

std::optional<Proposal> join_with(const ChainState& s, const ChainContext& ctx, std::size_t a,
                                  std::size_t b, bool plus_side, std::mt19937_64& rng) {
    const Fibre& fa = s.fibres[a];
    const Fibre& fb = s.fibres[b];
    if (join_gap(fa, fb, plus_side) > ctx.settings.d_join()) return std::nullopt;
    const double a_len = plus_side ? fa.l2 : fa.l1;
    const double b_len = fb.l1 + fb.l2;
    const double side_len = a_len + b_len;
    if (!(b_len > 0)) return std::nullopt;

    Fibre merged = plus_side ? trace(s, ctx, fa.omega, fa.l1, side_len) : trace(s, ctx, fa.omega, side_len, fa.l2);
    const Point2 jitter = fb.omega - along(merged, plus_side, a_len + fb.l1);

    std::vector<std::size_t> pts;
    const double sigma = ctx.settings.hyper.sigma_disp;
    double rev = 0;
    for (std::size_t i = 0; i < s.alloc.size(); ++i) {
        const int x = s.alloc.fibre[i];
        if (x != static_cast<int>(a) && x != static_cast<int>(b)) continue;
        pts.push_back(i);
        const std::size_t c = static_cast<std::size_t>(x);
        rev += log_choice_between(s, a, b, i, c == a ? 0 : 1) +
               log_anchor_density(s.fibres[c], s.caches[c], i, ctx.data.points[i], s.alloc.arc[i], sigma);
    }
    if (!pts.empty() && degenerate(merged)) return std::nullopt;

    Proposal p{s, 0};
    p.next.caches[a] = make_cache(merged, ctx, s.eps);
    p.next.fibres[a] = std::move(merged);
    for (std::size_t i : pts) p.next.alloc.fibre[i] = static_cast<int>(a);
    // drop b and shift later indices down
    p.next.fibres.erase(p.next.fibres.begin() + static_cast<std::ptrdiff_t>(b));
    p.next.caches.erase(p.next.caches.begin() + static_cast<std::ptrdiff_t>(b));
    for (int& x : p.next.alloc.fibre)
        if (x > static_cast<int>(b)) --x;
    const std::size_t merged_index = a > b ? a - 1 : a;
    const double fwd = redraw_anchors(p.next, ctx, merged_index, pts, rng);
    p.next.log_target = log_target(p.next, ctx);

    const double tau = ctx.settings.split_jitter();
    const double log_jacobian = std::log(side_len) + std::log(b_len);
    p.log_ratio = p.next.log_target - s.log_target + log_normal2(jitter, Point2::Zero(), tau) -
                  log_jacobian + rev - fwd;
    return p;
}

std::optional<Proposal> propose_split(const ChainState& s, const ChainContext& ctx, std::mt19937_64& rng) {
    if (s.k() == 0) return std::nullopt;
    SplitDraw d;
    d.fibre = uniform_index(s.k(), rng);
    d.plus_side = uniform01(rng) < 0.5;
    d.v = uniform01(rng);
    d.w = uniform01(rng);
    std::normal_distribution<double> n01;
    const double tau = ctx.settings.split_jitter();
    d.jitter = Point2(tau * n01(rng), tau * n01(rng));
    return split_with(s, ctx, d, rng);
}

std::optional<Proposal> propose_join(const ChainState& s, const ChainContext& ctx, std::mt19937_64& rng) {
    if (s.k() < 2) return std::nullopt;
    const std::size_t a = uniform_index(s.k(), rng);
    std::size_t b = uniform_index(s.k() - 1, rng);
    if (b >= a) ++b;
    const bool plus_side = uniform01(rng) < 0.5;
    return join_with(s, ctx, a, b, plus_side, rng);
}

std::optional<Proposal> propose_update_z(const ChainState& s, const ChainContext& ctx,
                                         std::mt19937_64& rng) {
    const std::size_t m = ctx.data.size();
    if (m == 0) return std::nullopt;
    const std::size_t i = uniform_index(m, rng);
    const Point2& y = ctx.data.points[i];
    const double sigma = ctx.settings.hyper.sigma_disp;
    Proposal p{s, 0};
    if (!s.alloc.is_signal(i)) {
        if (s.k() == 0) return std::nullopt;
        const auto lw = log_choice_all(s, i);
        if (log_sum_exp(lw) == kNegInf) return std::nullopt;
        std::vector<double> w(lw.size());
        for (std::size_t c = 0; c < lw.size(); ++c) w[c] = std::exp(lw[c]);
        const std::size_t c = std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng);
        const Fibre& f = s.fibres[c];
        const double arc = sample_anchor(f, y, sigma, rng);
        p.next.alloc.set_signal(i, static_cast<int>(c), arc, f.point_at(arc));
        const double fwd = lw[c] + log_anchor_density(f, s.caches[c], i, y, arc, sigma);
        p.next.log_target = log_target(p.next, ctx);
        p.log_ratio = p.next.log_target - s.log_target - fwd;
    } else {
        const auto j = static_cast<std::size_t>(s.alloc.fibre[i]);
        const double rev = log_choice_all(s, i)[j] +
                           log_anchor_density(s.fibres[j], s.caches[j], i, y, s.alloc.arc[i], sigma);
        p.next.alloc.set_noise(i);
        p.next.log_target = log_target(p.next, ctx);
        p.log_ratio = p.next.log_target - s.log_target + rev;
    }
    return p;
}

std::optional<Proposal> propose_update_eps(const ChainState& s, const ChainContext& ctx,
                                           std::mt19937_64& rng, const std::vector<double>* eps_override) {
    const Hyperparams& h = ctx.settings.hyper;
    const double c = ctx.settings.moves.eps_concentration;
    const std::size_t m = ctx.data.size();
    if (m == 0) return std::nullopt;

    std::vector<double> eps(m);
    double q_ratio = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const double z = s.alloc.is_signal(i) ? 1.0 : 0.0;
        const double a = h.alpha_signal + c * z;
        const double b = h.beta_signal + c * (1 - z);
        eps[i] = eps_override ? (*eps_override)[i] : draw_beta(a, b, rng);
        if (!(eps[i] > 0 && eps[i] < 1)) return std::nullopt;
        q_ratio += log_beta_density(s.eps[i], a, b) - log_beta_density(eps[i], a, b);
    }

    Proposal p{s, 0};
    p.next.eps = eps;
    if (!ctx.settings.fixed_grid) {
        try {
            p.next.grid = std::make_shared<const OrientationGrid>(
                estimate_field(ctx.data.points, eps, ctx.data.window, ctx.settings.field_params()));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::DegenerateWeights || e.kind() == ErrorKind::NonPositiveDefinite)
                return std::nullopt;
            throw;
        }
    }
    // Re-trace every fibre in the new field. Anchors keep their relative arc
    // position, a bijection whose Jacobian enters the ratio.
    double log_jacobian = 0;
    for (std::size_t j = 0; j < s.k(); ++j) {
        const Fibre& old = s.fibres[j];
        if (p.next.grid->at(old.omega).singular) return std::nullopt;
        Fibre f = trace(p.next, ctx, old.omega, old.l1, old.l2);
        const auto pts = points_on(s.alloc, j);
        if (!pts.empty()) {
            if (!(f.l_total() > 0)) return std::nullopt;
            const double scale = f.l_total() / old.l_total();
            log_jacobian += static_cast<double>(pts.size()) * std::log(scale);
            for (std::size_t i : pts) {
                const double arc = std::clamp(s.alloc.arc[i] * scale, 0.0, f.l_total());
                p.next.alloc.set_signal(i, static_cast<int>(j), arc, f.point_at(arc));
            }
        }
        p.next.caches[j] = make_cache(f, ctx, eps);
        p.next.fibres[j] = std::move(f);
    }
    p.next.log_target = log_target(p.next, ctx);
    p.log_ratio = p.next.log_target - s.log_target + q_ratio + log_jacobian;
    return p;
}

} // namespace fibrefield
