#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "fibrefield/error.hpp"
#include "fibrefield/model.hpp"

using namespace fibrefield;

namespace {

constexpr double pi = std::numbers::pi;

OrientationGrid constant_grid(const WindowRect& w, double theta) {
    return OrientationGrid::from_function(w, 1, [&](const Point2&) { return FieldCell{Orientation(theta), false, 10}; });
}

Hyperparams paper_hyper() {
    Hyperparams h;
    h.kappa = 2;
    h.lambda = 78.5;
    h.sigma_disp = 3;
    h.eta = 0.64;
    h.alpha_signal = 1;
    h.beta_signal = 1;
    h.alpha_dir = 1.5;
    return h;
}

} // namespace

TEST_CASE("mu_total examples") {
    const WindowRect w{0, 0, 200, 150};
    const OrientationGrid g = constant_grid(w, 0);
    Hyperparams h = paper_hyper();
    FibreSet one{trace_fibre(g, {100, 75}, 50, 50, 1)};
    CHECK(mu_total(one, h) == doctest::Approx(128));
    CHECK(mu_total({}, h) == 0);
    FibreSet two{trace_fibre(g, {100, 45}, 78.5, 78.5, 1), trace_fibre(g, {100, 105}, 78.5, 78.5, 1)};
    CHECK(mu_total(two, h) == doctest::Approx(401.92));
    // linear in total length
    FibreSet three = two;
    three.push_back(trace_fibre(g, {100, 20}, 10, 20, 1));
    CHECK(mu_total(three, h) == doctest::Approx(mu_total(two, h) + 30 * 1.28));
}

TEST_CASE("log_prior examples") {
    const WindowRect w{0, 0, 200, 150};
    const OrientationGrid g = constant_grid(w, 0);
    Hyperparams h = paper_hyper();
    const Fibre f = trace_fibre(g, {50, 50}, 10, 20, 1);
    FibreSet k1{f}, k2{f, f};
    // Poisson ratio with identical fibre terms: P(1) / P(2) * fibre term
    const double fibre_term = log_exp_density(10, h.lambda) + log_exp_density(20, h.lambda) - std::log(30000.0);
    CHECK(log_prior(k1, h, w) - (log_prior(k2, h, w) - fibre_term) == doctest::Approx(std::log(2 / h.kappa)));

    const Fibre z = trace_fibre(g, {50, 50}, 0, 0, 1);
    CHECK(log_prior({z}, h, w) == doctest::Approx(2 * std::log(1 / h.lambda) - std::log(30000.0) +
                                                  std::log(h.kappa) - h.kappa));
    CHECK(log_prior({}, h, w) == doctest::Approx(-h.kappa));
}

TEST_CASE("likelihood component examples") {
    CHECK(log_normal2({1, 2}, {1, 2}, 3) == doctest::Approx(std::log(1 / (18 * pi))));
    // Dirichlet(1, 1) with one anchor is uniform
    std::vector<double> one{3.0};
    CHECK(log_spacing_density(one, 10, 1) == doctest::Approx(-std::log(10.0)));
    CHECK(log_spacing_density({}, 10, 1.5) == 0);

    const WindowRect w{0, 0, 100, 100};
    const OrientationGrid g = constant_grid(w, 0);
    Hyperparams h = paper_hyper();
    FibreSet fs{trace_fibre(g, {20, 20}, 5, 5, 1), trace_fibre(g, {50, 60}, 15, 15, 1)};
    PointPattern data{{{50, 61}}, w};
    Allocation a = Allocation::all_noise(1);
    a.set_signal(0, 1, 15, fs[1].point_at(15));
    std::vector<double> eps{0.5};
    const LikelihoodTerms t = log_likelihood(fs, a, eps, data, h);
    CHECK(std::exp(t.fibre_choice) == doctest::Approx(0.75));
    CHECK(t.noise == 0);
    CHECK(t.allocation == doctest::Approx(std::log(0.5)));
}

TEST_CASE("ordered Dirichlet spacing density matches a Monte Carlo oracle") {
    // P(all anchors in the first half) for n labelled anchors
    const double alpha = 1.5, length = 4;
    const int n = 3;
    std::mt19937_64 rng(3);
    std::gamma_distribution<double> gam(alpha, 1.0);
    int hits = 0;
    const int trials = 200000;
    for (int t = 0; t < trials; ++t) {
        double g[n + 1], sum = 0;
        for (double& x : g) sum += (x = gam(rng));
        if ((g[0] + g[1] + g[2]) / sum < 0.5) ++hits;
    }
    const double mc = static_cast<double>(hits) / trials;
    // integrate the labelled density over [0, 2]^3 on a midpoint grid
    const int k = 60;
    const double h = 2.0 / k;
    double integral = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            for (int l = 0; l < k; ++l) {
                std::vector<double> s{(i + 0.5) * h, (j + 0.5) * h, (l + 0.5) * h};
                integral += std::exp(log_spacing_density(s, length, alpha)) * h * h * h;
            }
    CHECK(integral == doctest::Approx(mc).epsilon(0.02));

    // total mass over the whole fibre is 1
    const double H = length / k;
    double total = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            for (int l = 0; l < k; ++l) {
                std::vector<double> s{(i + 0.5) * H, (j + 0.5) * H, (l + 0.5) * H};
                total += std::exp(log_spacing_density(s, length, alpha)) * H * H * H;
            }
    CHECK(total == doctest::Approx(1).epsilon(0.01));
}

TEST_CASE("2^3 allocation enumeration matches a direct joint evaluation") {
    const WindowRect w{0, 0, 40, 30};
    const OrientationGrid g = constant_grid(w, 0);
    Hyperparams h = paper_hyper();
    h.alpha_signal = 2;
    h.beta_signal = 3;
    const FibreSet fs{trace_fibre(g, {20, 15}, 6, 8, 1)};
    const PointPattern data{{{15, 16}, {22, 14.5}, {30, 20}}, w};
    const std::vector<double> arcs{1.0, 8.0, 13.0};
    const std::vector<double> eps{0.3, 0.6, 0.45};
    const double L = 14, area = 1200, sd = h.sigma_disp;

    for (int mask = 0; mask < 8; ++mask) {
        Allocation a = Allocation::all_noise(3);
        double direct = 0;
        std::vector<double> on;
        for (int i = 0; i < 3; ++i) {
            const Point2& y = data.points[static_cast<std::size_t>(i)];
            if (mask & (1 << i)) {
                const Point2 p(14 + arcs[i], 15);
                a.set_signal(static_cast<std::size_t>(i), 0, arcs[i], p);
                direct += std::log(eps[i]);
                direct += -std::log(2 * pi * sd * sd) - (y - p).squaredNorm() / (2 * sd * sd);
                on.push_back(arcs[i]);
            } else {
                direct += std::log(1 - eps[i]) - std::log(area);
            }
        }
        // ordered Dirichlet of the gaps for labelled anchors
        const auto n = static_cast<double>(on.size());
        if (!on.empty()) {
            std::sort(on.begin(), on.end());
            double prev = 0, log_gaps = 0;
            for (double s : on) {
                log_gaps += std::log((s - prev) / L);
                prev = s;
            }
            log_gaps += std::log((L - prev) / L);
            direct += std::lgamma((n + 1) * h.alpha_dir) - (n + 1) * std::lgamma(h.alpha_dir) +
                      (h.alpha_dir - 1) * log_gaps - n * std::log(L) - std::lgamma(n + 1);
        }
        const double mu = L * h.eta / (1 - 0.6);
        direct += 3 * std::log(mu) - mu - std::log(6.0);
        // priors
        direct += std::log(h.kappa) - h.kappa - 2 * std::log(h.lambda) - 14 / h.lambda - std::log(area);
        for (double e : eps)
            direct += std::lgamma(5.0) - std::lgamma(2.0) - std::lgamma(3.0) + std::log(e) + 2 * std::log(1 - e);

        CHECK(log_posterior(fs, a, eps, data, h) == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("single-point flip changes only the touched components") {
    const WindowRect w{0, 0, 100, 100};
    const OrientationGrid g = constant_grid(w, 0.3);
    const Hyperparams h = paper_hyper();
    const FibreSet fs{trace_fibre(g, {50, 50}, 20, 20, 0.5), trace_fibre(g, {30, 70}, 10, 5, 0.5)};
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 100), ue(0.05, 0.95);
    PointPattern data;
    data.window = w;
    std::vector<double> eps;
    for (int i = 0; i < 30; ++i) {
        const double x = u(rng);
        data.points.emplace_back(x, u(rng));
        eps.push_back(ue(rng));
    }
    Allocation a = Allocation::all_noise(30);
    for (std::size_t i = 0; i < 30; i += 3) {
        const int j = static_cast<int>(i % 2);
        const double s = fs[j].l_total() * (0.1 + 0.8 * ue(rng));
        a.set_signal(i, j, s, fs[j].point_at(s));
    }
    const double before = log_posterior(fs, a, eps, data, h);
    // flip point 1 from noise to signal on fibre 0
    std::vector<double> arcs0;
    for (std::size_t i = 0; i < 30; ++i)
        if (a.fibre[i] == 0) arcs0.push_back(a.arc[i]);
    const double s_new = 7.25;
    Allocation b = a;
    b.set_signal(1, 0, s_new, fs[0].point_at(s_new));
    std::vector<double> arcs0_new = arcs0;
    arcs0_new.push_back(s_new);
    const double L = total_length(fs);
    const double delta = std::log(eps[1]) - std::log1p(-eps[1]) + std::log(fs[0].l_total() / L) +
                         log_normal2(data.points[1], fs[0].point_at(s_new), h.sigma_disp) +
                         std::log(w.area()) + log_spacing_density(arcs0_new, fs[0].l_total(), h.alpha_dir) -
                         log_spacing_density(arcs0, fs[0].l_total(), h.alpha_dir);
    CHECK(log_posterior(fs, b, eps, data, h) - before == doctest::Approx(delta).epsilon(1e-9));

    // permuting the data changes nothing
    std::vector<std::size_t> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    PointPattern pd;
    pd.window = w;
    Allocation pa = Allocation::all_noise(30);
    std::vector<double> pe;
    for (std::size_t i = 0; i < 30; ++i) {
        const std::size_t src = perm[i];
        pd.points.push_back(data.points[src]);
        pe.push_back(eps[src]);
        if (a.is_signal(src)) pa.set_signal(i, a.fibre[src], a.arc[src], a.anchor[src]);
    }
    CHECK(log_posterior(fs, pa, pe, pd, h) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("anchor at the projection maximizes the displacement term") {
    const WindowRect w{0, 0, 100, 100};
    const OrientationGrid g = constant_grid(w, 0.7);
    const Fibre f = trace_fibre(g, {50, 50}, 20, 20, 0.5);
    const Point2 y(47, 55);
    const auto [s_star, d2] = f.project(y);
    const double best = log_normal2(y, f.point_at(s_star), 3);
    for (double s = 0; s <= f.l_total(); s += 0.37) CHECK(log_normal2(y, f.point_at(s), 3) <= best + 1e-12);
    // density at offset d peaks at sigma = d / sqrt(2)
    const double d = 4;
    const double peak = log_normal2({d, 0}, {0, 0}, d / std::sqrt(2.0));
    for (double sigma : {1.0, 2.0, 2.5, 3.0, 3.5, 5.0, 10.0})
        CHECK(log_normal2({d, 0}, {0, 0}, sigma) <= peak);
}

TEST_CASE("allocation validation") {
    const WindowRect w{0, 0, 10, 10};
    const OrientationGrid g = constant_grid(w, 0);
    const Hyperparams h = paper_hyper();
    const FibreSet fs{trace_fibre(g, {5, 5}, 2, 2, 0.5)};
    const PointPattern data{{{5, 5}}, w};
    const std::vector<double> eps{0.5};
    Allocation a = Allocation::all_noise(1);
    a.set_signal(0, 0, 1, Point2(5, 5));  // anchor does not match arc position
    CHECK_THROWS_AS(log_likelihood(fs, a, eps, data, h), Error);
    a.set_signal(0, 0, 9, fs[0].point_at(4));
    CHECK_THROWS_AS(log_likelihood(fs, a, eps, data, h), Error);
    a.set_signal(0, 3, 1, fs[0].point_at(1));
    CHECK_THROWS_AS(log_likelihood(fs, a, eps, data, h), Error);
    a.set_signal(0, 0, 1, fs[0].point_at(1));
    try {
        log_likelihood({}, a, eps, data, h);
        FAIL("expected ZeroFibreLikelihood");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ZeroFibreLikelihood);
    }
}

TEST_CASE("sample_prior_fibre") {
    const WindowRect w{0, 0, 200, 150};
    const OrientationGrid g = constant_grid(w, 0);
    const Hyperparams h = paper_hyper();
    std::mt19937_64 rng(12);
    const int n = 10000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
        const Fibre f = sample_prior_fibre(g, h, rng, {5, 1000});
        sum += f.l1;
        sum2 += f.l1 * f.l1;
        CHECK(w.contains(f.omega));
        for (const Point2& v : f.vertices) CHECK(std::abs(v.y() - f.omega.y()) < 1e-9);
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean - h.lambda) < 3 * se);

    const OrientationGrid singular = OrientationGrid::from_function(
        w, 1, [](const Point2&) { return FieldCell{Orientation(0), true, 1}; });
    CHECK_THROWS_AS(sample_prior_fibre(singular, h, rng, {1, 50}), Error);
}

TEST_CASE("hyperparameter validation and rho") {
    Hyperparams h = paper_hyper();
    CHECK(h.rho() == doctest::Approx(0.5));
    h.beta_signal = 3;
    CHECK(h.rho() == doctest::Approx(0.75));
    h.kappa = 0;
    CHECK_THROWS_AS(h.validate(), Error);
}
