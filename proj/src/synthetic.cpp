#include "fibrefield/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "fibrefield/error.hpp"

namespace fibrefield {

namespace {
constexpr double kAnalyticAnisotropy = 1e6;
}

void ScenarioConfig::validate() const {
    if (!window.valid()) throw Error(ErrorKind::Config, "window must have positive width and height");
    hyper.validate();
    if (n_signal < 0 || n_noise < 0) throw Error(ErrorKind::Config, "point counts must be non-negative");
    if (fibres.empty() && prior_fibres <= 0 && (count_mode == CountMode::Poisson || n_signal > 0))
        throw Error(ErrorKind::Config, "signal points requested but no fibres given");
    if (!fibres.empty() && prior_fibres > 0)
        throw Error(ErrorKind::Config, "give either explicit fibres or prior_fibres, not both");
    if (!(truth_spacing > 0) || !(truth_step > 0))
        throw Error(ErrorKind::Config, "truth_spacing and truth_step must be positive");
    if (field_kind == FieldKind::RidgeWave && !(period > 0))
        throw Error(ErrorKind::Config, "ridge period must be positive");
    for (const FibreSpec& f : fibres) {
        if (!window.contains(f.omega)) throw Error(ErrorKind::Config, "fibre reference point outside the window");
        if (f.l1 < 0 || f.l2 < 0) throw Error(ErrorKind::Config, "fibre lengths must be non-negative");
    }
}

ScenarioConfig ridge_scenario() {
    ScenarioConfig c;
    c.fibres = {{{100, 45}, 78.5, 78.5}, {{100, 105}, 78.5, 78.5}};
    return c;
}

OrientationGrid analytic_field(const ScenarioConfig& cfg) {
    switch (cfg.field_kind) {
    case FieldKind::Constant:
        return OrientationGrid::from_function(cfg.window, cfg.truth_spacing, [&](const Point2&) {
            return FieldCell{Orientation(cfg.theta0), false, kAnalyticAnisotropy};
        });
    case FieldKind::Circular: {
        const double r_min = cfg.truth_spacing;
        return OrientationGrid::from_function(cfg.window, cfg.truth_spacing, [&](const Point2& x) {
            const Point2 d = x - cfg.centre;
            if (d.norm() < r_min) return FieldCell{Orientation(0), true, 1};
            return FieldCell{Orientation(std::atan2(d.y(), d.x()) + std::numbers::pi / 2), false,
                             kAnalyticAnisotropy};
        });
    }
    case FieldKind::RidgeWave: {
        const double k = 2 * std::numbers::pi / cfg.period;
        return OrientationGrid::from_function(cfg.window, cfg.truth_spacing, [&](const Point2& x) {
            return FieldCell{Orientation(std::atan(cfg.amplitude * k * std::cos(k * x.x()))), false,
                             kAnalyticAnisotropy};
        });
    }
    }
    throw Error(ErrorKind::InvalidArgument, "unknown field kind");
}

Allocation GroundTruth::allocation() const {
    Allocation a = Allocation::all_noise(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        if (z[i]) a.set_signal(i, x[i], arcs[i], anchors[i]);
    return a;
}

Scenario generate(const ScenarioConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const OrientationGrid grid = analytic_field(cfg);
    const Hyperparams& h = cfg.hyper;

    FibreSet fibres;
    for (const FibreSpec& f : cfg.fibres) fibres.push_back(trace_fibre(grid, f.omega, f.l1, f.l2, cfg.truth_step));
    for (int j = 0; j < cfg.prior_fibres; ++j)
        fibres.push_back(sample_prior_fibre(grid, h, rng, {cfg.truth_step, 1000}));

    long n_signal = cfg.n_signal;
    long n_noise = cfg.n_noise;
    if (cfg.count_mode == CountMode::Poisson) {
        const double signal_mean = total_length(fibres) * h.eta;
        n_signal = std::poisson_distribution<long>(signal_mean)(rng);
        n_noise = std::poisson_distribution<long>(signal_mean * h.rho() / (1 - h.rho()))(rng);
    }

    // length-proportional multinomial over fibres
    std::vector<double> lengths;
    for (const Fibre& f : fibres) lengths.push_back(f.l_total());
    std::vector<long> per_fibre(fibres.size(), 0);
    if (n_signal > 0) {
        if (total_length(fibres) <= 0) throw Error(ErrorKind::Config, "signal points need a fibre of positive length");
        std::discrete_distribution<std::size_t> pick(lengths.begin(), lengths.end());
        for (long n = 0; n < n_signal; ++n) ++per_fibre[pick(rng)];
    }

    std::normal_distribution<double> n01;
    std::gamma_distribution<double> gap(h.alpha_dir, 1.0);
    std::uniform_real_distribution<double> ux(cfg.window.xmin, cfg.window.xmax);
    std::uniform_real_distribution<double> uy(cfg.window.ymin, cfg.window.ymax);

    Scenario out;
    out.data.window = cfg.window;
    GroundTruth& t = out.truth;
    for (std::size_t j = 0; j < fibres.size(); ++j) {
        const long n = per_fibre[j];
        if (n == 0) continue;
        // ordered Dirichlet spacings: n + 1 gamma gaps normalized to the length
        std::vector<double> g(static_cast<std::size_t>(n) + 1);
        for (double& v : g) v = gap(rng);
        const double sum = std::accumulate(g.begin(), g.end(), 0.0);
        const Fibre& f = fibres[j];
        double cum = 0;
        for (long q = 0; q < n; ++q) {
            cum += g[static_cast<std::size_t>(q)];
            const double s = std::min(f.l_total() * cum / sum, f.l_total());
            const Point2 p = f.point_at(s);
            Point2 y;
            int attempt = 0;
            do {
                if (++attempt > 10000) throw Error(ErrorKind::Config, "displacements keep leaving the window");
                y = p + h.sigma_disp * Point2(n01(rng), n01(rng));
            } while (!cfg.window.contains(y));
            out.data.points.push_back(y);
            t.z.push_back(1);
            t.x.push_back(static_cast<int>(j));
            t.arcs.push_back(s);
            t.anchors.push_back(p);
        }
    }
    for (long q = 0; q < n_noise; ++q) {
        const double x = ux(rng);
        out.data.points.emplace_back(x, uy(rng));
        t.z.push_back(0);
        t.x.push_back(-1);
        t.arcs.push_back(0);
        t.anchors.push_back(Point2::Zero());
    }

    std::vector<std::size_t> order(out.data.points.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    auto permute = [&order](auto& v) {
        auto copy = v;
        for (std::size_t i = 0; i < order.size(); ++i) v[i] = copy[order[i]];
    };
    permute(out.data.points);
    permute(t.z);
    permute(t.x);
    permute(t.arcs);
    permute(t.anchors);
    t.fibres = std::move(fibres);
    return out;
}

} // namespace fibrefield
