#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "fibrefield/error.hpp"
#include "fibrefield/sampler.hpp"
#include "fibrefield/synthetic.hpp"

using namespace fibrefield;

namespace {

ScenarioConfig small_scenario(FieldKind kind = FieldKind::Constant) {
    ScenarioConfig c;
    c.window = {0, 0, 80, 60};
    c.field_kind = kind;
    c.theta0 = 0.4;
    c.centre = {40, 30};
    c.fibres = {{{30, 25}, 12, 15}, {{45, 40}, 10, 10}};
    c.hyper.sigma_disp = 2;
    c.hyper.lambda = 15;
    c.n_signal = 30;
    c.n_noise = 10;
    c.truth_spacing = 0.5;
    c.truth_step = 0.5;
    c.seed = 4;
    return c;
}

SamplerSettings settings_for(const ScenarioConfig& c) {
    SamplerSettings s;
    s.hyper = c.hyper;
    s.grid_spacing = c.truth_spacing;
    s.step = c.truth_step;
    s.fixed_grid = std::make_shared<const OrientationGrid>(analytic_field(c));
    return s;
}

/// Chain state sitting on the generating truth.
ChainState truth_state(const Scenario& sc, const ChainContext& ctx) {
    ChainState s;
    s.grid = ctx.settings.fixed_grid;
    s.eps.assign(sc.data.size(), ctx.settings.hyper.eps_prior_mean());
    for (const Fibre& f : sc.truth.fibres) {
        s.fibres.push_back(trace(s, ctx, f.omega, f.l1, f.l2));
        s.caches.push_back(make_cache(s.fibres.back(), ctx, s.eps));
    }
    s.alloc = sc.truth.allocation();
    s.log_target = log_target(s, ctx);
    refresh_death_rates(s, ctx);
    return s;
}

} // namespace

TEST_CASE("truth state is consistent with the model") {
    const ScenarioConfig c = small_scenario();
    const Scenario sc = generate(c);
    const ChainContext ctx{sc.data, settings_for(c)};
    const ChainState s = truth_state(sc, ctx);
    CHECK(std::isfinite(s.log_target));
    CHECK(s.alloc.signal_count() == 30);
}

TEST_CASE("reduced and general death rates agree") {
    for (FieldKind kind : {FieldKind::Constant, FieldKind::RidgeWave}) {
        ScenarioConfig c = small_scenario(kind);
        c.amplitude = 5;
        c.period = 60;
        const Scenario sc = generate(c);
        const ChainContext ctx{sc.data, settings_for(c)};
        ChainState s = truth_state(sc, ctx);
        std::mt19937_64 rng(9);
        // add a few prior fibres so deaths touch empty and populated fibres alike
        for (int n = 0; n < 3; ++n) apply_birth(s, ctx, propose_birth(s, ctx, rng));
        REQUIRE(s.k() == 5);
        for (std::size_t j = 0; j < s.k(); ++j) {
            const double reduced = log_death_rate(s, ctx, j);
            const double general = log_death_rate_general(s, ctx, j);
            CHECK(reduced == doctest::Approx(general).epsilon(1e-8).scale(1));
        }
    }
}

TEST_CASE("birth then death restores the state") {
    const ScenarioConfig c = small_scenario();
    const Scenario sc = generate(c);
    const ChainContext ctx{sc.data, settings_for(c)};
    const ChainState s = truth_state(sc, ctx);
    std::mt19937_64 rng(3);
    for (int n = 0; n < 20; ++n) {
        ChainState t = s;
        apply_birth(t, ctx, propose_birth(t, ctx, rng));
        REQUIRE(t.k() == s.k() + 1);
        apply_death(t, ctx, t.k() - 1);
        CHECK(t.k() == s.k());
        CHECK(t.log_target == doctest::Approx(s.log_target).epsilon(1e-12));
        // flipped points return to noise, the others keep their labels
        for (std::size_t i = 0; i < sc.data.size(); ++i)
            if (s.alloc.is_signal(i)) CHECK(t.alloc.fibre[i] == s.alloc.fibre[i]);
            else CHECK_FALSE(t.alloc.is_signal(i));
    }
}

TEST_CASE("death removes the fibre and reindexes allocations") {
    const ScenarioConfig c = small_scenario();
    const Scenario sc = generate(c);
    const ChainContext ctx{sc.data, settings_for(c)};
    const ChainState s = truth_state(sc, ctx);
    const ChainState t = without_fibre(s, ctx, 0);
    REQUIRE(t.k() == 1);
    CHECK(t.fibres[0].omega == s.fibres[1].omega);
    for (std::size_t i = 0; i < sc.data.size(); ++i) {
        if (s.alloc.fibre[i] == 0) CHECK_FALSE(t.alloc.is_signal(i));
        if (s.alloc.fibre[i] == 1) CHECK(t.alloc.fibre[i] == 0);
    }
    CHECK(std::isfinite(t.log_target));
}

TEST_CASE("burn-in examples") {
    Hyperparams h;
    h.kappa = 2;
    h.lambda = 78.5;
    h.sigma_disp = 3;
    const BurnIn b = burn_in_time(h, {0, 0, 200, 150}, 1);
    const double p = 8 * 78.5 * std::log(10.0 / 9.0) * 3 / (2 * 30000);
    CHECK(p == doctest::Approx(0.003308).epsilon(1e-3));
    CHECK(b.formula == doctest::Approx(std::log(0.01) / std::log1p(-p)));
    CHECK(b.formula == doctest::Approx(1389.8).epsilon(1e-4));
    CHECK(b.time == 1500);
    CHECK_FALSE(b.degenerate);

    // slower births stretch the formula past the floor
    const BurnIn slow = burn_in_time(h, {0, 0, 200, 150}, 0.5);
    CHECK(slow.time == doctest::Approx(2 * b.formula));

    const BurnIn tiny = burn_in_time(h, {0, 0, 5, 5}, 1);
    CHECK(tiny.degenerate);
    CHECK(tiny.time == 1500);
}

TEST_CASE("split followed by join restores the fibre") {
    ScenarioConfig c = small_scenario();
    c.n_signal = 0;
    c.n_noise = 20;
    const Scenario sc = generate(c);
    const ChainContext ctx{sc.data, settings_for(c)};
    const ChainState s = truth_state(sc, ctx);
    std::mt19937_64 rng(5);
    for (bool plus : {true, false}) {
        SplitDraw d;
        d.fibre = 0;
        d.plus_side = plus;
        d.v = 0.3;
        d.w = 0.6;
        d.jitter = Point2(0.4, -0.3);
        const auto split = split_with(s, ctx, d, rng);
        REQUIRE(split);
        REQUIRE(split->next.k() == 3);
        const auto join = join_with(split->next, ctx, 0, 2, plus, rng);
        REQUIRE(join);
        const Fibre& back = join->next.fibres[0];
        const Fibre& orig = s.fibres[0];
        CHECK((back.omega - orig.omega).norm() < 1e-12);
        CHECK(back.l1 == doctest::Approx(orig.l1));
        CHECK(back.l2 == doctest::Approx(orig.l2));
        REQUIRE(back.vertices.size() == orig.vertices.size());
        for (std::size_t v = 0; v < back.vertices.size(); ++v)
            CHECK((back.vertices[v] - orig.vertices[v]).norm() < 1e-9);
        CHECK(join->next.log_target == doctest::Approx(s.log_target).epsilon(1e-12));
        // without signal points the two log ratios are exact negatives
        CHECK(split->log_ratio + join->log_ratio == doctest::Approx(0).scale(1).epsilon(1e-9));
    }
}

TEST_CASE("split and join keep allocations consistent") {
    const ScenarioConfig c = small_scenario();
    const Scenario sc = generate(c);
    const ChainContext ctx{sc.data, settings_for(c)};
    const ChainState s = truth_state(sc, ctx);
    std::mt19937_64 rng(8);
    int valid_splits = 0;
    for (int n = 0; n < 200; ++n) {
        const auto p = propose_split(s, ctx, rng);
        if (!p) continue;
        ++valid_splits;
        CHECK(std::isfinite(p->log_ratio));
        CHECK(p->next.alloc.signal_count() == s.alloc.signal_count());
        validate_allocation(p->next.fibres, p->next.alloc, sc.data.size());
        const auto j = propose_join(p->next, ctx, rng);
        if (j) validate_allocation(j->next.fibres, j->next.alloc, sc.data.size());
    }
    CHECK(valid_splits > 50);
}

TEST_CASE("update_z forward and reverse ratios negate") {
    const ScenarioConfig c = small_scenario();
    const Scenario sc = generate(c);
    const ChainContext ctx{sc.data, settings_for(c)};
    ChainState s = truth_state(sc, ctx);
    std::mt19937_64 rng(21);
    int checked = 0;
    for (int n = 0; n < 400 && checked < 10; ++n) {
        const auto fwd = propose_update_z(s, ctx, rng);
        if (!fwd) continue;
        std::size_t flipped = sc.data.size();
        for (std::size_t i = 0; i < sc.data.size(); ++i)
            if (fwd->next.alloc.is_signal(i) != s.alloc.is_signal(i)) flipped = i;
        REQUIRE(flipped < sc.data.size());
        if (s.alloc.is_signal(flipped)) continue;  // only noise to signal, reversed deterministically
        for (int t = 0; t < 2000; ++t) {
            const auto rev = propose_update_z(fwd->next, ctx, rng);
            if (!rev || rev->next.alloc.is_signal(flipped)) continue;
            CHECK(fwd->log_ratio + rev->log_ratio == doctest::Approx(0).scale(1).epsilon(1e-9));
            CHECK(rev->next.log_target == doctest::Approx(s.log_target).epsilon(1e-12));
            ++checked;
            break;
        }
    }
    CHECK(checked == 10);
}

TEST_CASE("eps update with unchanged eps is neutral") {
    const ScenarioConfig c = small_scenario(FieldKind::RidgeWave);
    const Scenario sc = generate(c);
    SamplerSettings settings = settings_for(c);
    settings.fixed_grid.reset();
    settings.hyper.sigma_fo = 20;
    settings.hyper.h_fo = 10;
    const ChainContext ctx{sc.data, settings};
    std::mt19937_64 rng(2);
    const ChainState s = initial_state(ctx, rng);
    const auto p = propose_update_eps(s, ctx, rng, &s.eps);
    REQUIRE(p);
    CHECK(p->log_ratio == doctest::Approx(0).scale(1).epsilon(1e-9));
    REQUIRE(p->next.k() == s.k());
    for (std::size_t j = 0; j < s.k(); ++j) {
        REQUIRE(p->next.fibres[j].vertices.size() == s.fibres[j].vertices.size());
        for (std::size_t v = 0; v < s.fibres[j].vertices.size(); ++v)
            CHECK(p->next.fibres[j].vertices[v] == s.fibres[j].vertices[v]);
    }
}

TEST_CASE("eps update there and back restores the state") {
    const ScenarioConfig c = small_scenario(FieldKind::RidgeWave);
    const Scenario sc = generate(c);
    SamplerSettings settings = settings_for(c);
    settings.fixed_grid.reset();
    settings.hyper.sigma_fo = 20;
    settings.hyper.h_fo = 10;
    const ChainContext ctx{sc.data, settings};
    std::mt19937_64 rng(3);
    const ChainState s = initial_state(ctx, rng);
    int checked = 0;
    for (int n = 0; n < 200 && checked < 5; ++n) {
        const auto fwd = propose_update_eps(s, ctx, rng);
        if (!fwd) continue;
        const auto rev = propose_update_eps(fwd->next, ctx, rng, &s.eps);
        REQUIRE(rev);
        CHECK(fwd->log_ratio + rev->log_ratio == doctest::Approx(0).scale(1).epsilon(1e-7));
        for (std::size_t i = 0; i < sc.data.size(); ++i)
            if (s.alloc.is_signal(i)) CHECK(rev->next.alloc.arc[i] == doctest::Approx(s.alloc.arc[i]).epsilon(1e-9));
        ++checked;
    }
    CHECK(checked == 5);
}

TEST_CASE("branch lengths follow their prior when the likelihood is constant") {
    // Lengths change under both the prior redraw and the one-branch random walk.
    const WindowRect w{0, 0, 200, 150};
    const PointPattern empty{{}, w};
    SamplerSettings settings;
    settings.constant_likelihood = true;
    settings.fixed_grid = std::make_shared<const OrientationGrid>(
        OrientationGrid::from_function(w, 1, [](const Point2&) { return FieldCell{Orientation(0.4), false, 10}; }));
    const ChainContext ctx{empty, settings};
    std::mt19937_64 rng(77);
    ChainState s = initial_state(ctx, rng);
    double weight = 0, sum = 0, above = 0;
    for (long e = 0; e < 100000; ++e) {
        const ChainState before = s;
        const StepResult r = step(s, ctx, rng);
        for (const Fibre& f : before.fibres)
            for (double l : {f.l1, f.l2}) {
                weight += r.dt;
                sum += r.dt * l;
                if (l > settings.hyper.lambda) above += r.dt;
            }
    }
    CHECK(sum / weight == doctest::Approx(settings.hyper.lambda).epsilon(0.05));
    CHECK(above / weight == doctest::Approx(std::exp(-1.0)).epsilon(0.05));
}

TEST_CASE("initial state") {
    const ScenarioConfig c = small_scenario();
    const Scenario sc = generate(c);
    const ChainContext ctx{sc.data, settings_for(c)};
    std::mt19937_64 rng(1);
    const ChainState s = initial_state(ctx, rng);
    CHECK(s.k() == 2);
    CHECK(s.alloc.signal_count() == 0);
    CHECK(s.eps[0] == doctest::Approx(c.hyper.eps_prior_mean()));
    CHECK(s.death_rates.size() == s.k());
    CHECK(std::isfinite(s.log_target));
}

TEST_CASE("extra moves fire as independent Poisson clocks") {
    const ScenarioConfig c = small_scenario();
    const Scenario sc = generate(c);
    SamplerSettings settings = settings_for(c);
    settings.rates.r_record = 2;
    const ChainContext ctx{sc.data, settings};
    std::mt19937_64 rng(17);
    ChainState s = initial_state(ctx, rng);
    std::vector<long> counts(8, 0);
    double births_expected = 0, deaths_expected = 0;
    while (s.clock < 400) {
        const double before = s.clock;
        const StepResult r = step(s, ctx, rng);
        births_expected += settings.rates.beta_birth * r.dt;
        deaths_expected += r.death_total_before * r.dt;
        ++counts[static_cast<std::size_t>(r.kind)];
        CHECK(s.clock == doctest::Approx(before + r.dt));
    }
    const double T = s.clock;
    auto within = [](double count, double mean) { return std::abs(count - mean) < 4.5 * std::sqrt(mean); };
    CHECK(within(counts[static_cast<int>(EventKind::Move)], settings.rates.r_move * T));
    CHECK(within(counts[static_cast<int>(EventKind::Lengths)], settings.rates.r_lengths * T));
    CHECK(within(counts[static_cast<int>(EventKind::SplitJoin)], settings.rates.r_split_join * T));
    CHECK(within(counts[static_cast<int>(EventKind::UpdateZ)], settings.rates.r_z * T));
    CHECK(within(counts[static_cast<int>(EventKind::UpdateEps)], settings.rates.r_eps * T));
    CHECK(within(counts[static_cast<int>(EventKind::Record)], settings.rates.r_record * T));
    CHECK(within(counts[static_cast<int>(EventKind::Birth)], births_expected));
    CHECK(within(counts[static_cast<int>(EventKind::Death)], deaths_expected));
}

TEST_CASE("run_chain is deterministic and records inside the window") {
    const ScenarioConfig c = small_scenario();
    const Scenario sc = generate(c);
    SamplerSettings settings = settings_for(c);
    settings.rates.r_record = 0.5;
    RunOptions ro;
    ro.t_end = 150;
    ro.burn_in = 50;
    const ChainResult a = run_chain(sc.data, settings, 99, ro);
    const ChainResult b = run_chain(sc.data, settings, 99, ro);
    REQUIRE(a.records.size() == b.records.size());
    CHECK(a.records.size() > 20);
    for (std::size_t r = 0; r < a.records.size(); ++r) {
        CHECK(a.records[r].clock == b.records[r].clock);
        CHECK(a.records[r].k == b.records[r].k);
        CHECK(a.records[r].z == b.records[r].z);
        CHECK(a.records[r].clock >= 50);
        CHECK(a.records[r].clock <= 150);
        CHECK(a.records[r].k == static_cast<int>(a.records[r].fibres.size()));
    }
    CHECK(a.death_products == b.death_products);
    // the event straddling burn-in contributes a k value but no death product
    CHECK(a.k_series.size() - a.death_products.size() <= 1);
    const ChainResult other = run_chain(sc.data, settings, 100, ro);
    CHECK(other.death_products != a.death_products);

    ro.t_end = 40;
    CHECK_THROWS_AS(run_chain(sc.data, settings, 99, ro), Error);
}

TEST_CASE("settings validation") {
    SamplerSettings s;
    s.rates.beta_birth = 0;
    CHECK_THROWS_AS(s.validate(), Error);
    s = SamplerSettings{};
    s.grid_spacing = -1;
    CHECK_THROWS_AS(s.validate(), Error);
}
