// fibrefield: simulate, estimate-field, run, summarize, density.
//
// Exit codes: 0 ok, 2 usage or data error, 3 numerical or model failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fibrefield/config.hpp"
#include "fibrefield/diagnostics.hpp"
#include "fibrefield/error.hpp"
#include "fibrefield/io.hpp"
#include "fibrefield/sampler.hpp"
#include "fibrefield/synthetic.hpp"

namespace fs = std::filesystem;
using namespace fibrefield;

namespace {

struct Options {
    std::string config;
    std::string points;
    std::string trace;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
};

int exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::SingularField:
    case ErrorKind::SingularStart:
    case ErrorKind::NonPositiveDefinite:
    case ErrorKind::DegenerateWeights:
    case ErrorKind::ZeroVariance:
    case ErrorKind::ZeroFibreLikelihood:
        return 3;
    default:
        return 2;
    }
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Data, "cannot write " + path.string());
    return out;
}

RunConfig config_for(const Options& o, bool required) {
    RunConfig cfg;
    if (!o.config.empty()) cfg = load_config(o.config);
    else if (required) throw Error(ErrorKind::Config, "--config is required");
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.scenario.seed = *o.seed;
    }
    return cfg;
}

fs::path out_dir(const Options& o) {
    fs::path dir(o.out);
    fs::create_directories(dir);
    return dir;
}

void echo_config(const fs::path& dir, const RunConfig& cfg) {
    auto out = open_output(dir / "config.effective");
    write_effective_config(out, cfg);
}

PointPattern load_points(const Options& o, const RunConfig& cfg) {
    if (o.points.empty()) throw Error(ErrorKind::Config, "--points is required");
    cfg.require_window();
    PointPattern data{read_points_csv(o.points), cfg.window()};
    for (std::size_t i = 0; i < data.size(); ++i)
        if (!data.window.contains(data.points[i]))
            throw Error(ErrorKind::OutsideWindow, "point " + std::to_string(i + 1) + " lies outside the window");
    if (data.size() < 2) throw Error(ErrorKind::EmptyPattern, "need at least 2 points");
    return data;
}

int cmd_simulate(const Options& o) {
    RunConfig cfg = config_for(o, true);
    cfg.require_window();
    const Scenario sc = generate(cfg.scenario);
    const fs::path dir = out_dir(o);
    auto pts = open_output(dir / "points.csv");
    write_points_csv(pts, sc.data.points);
    auto truth = open_output(dir / "truth.json");
    write_truth_json(truth, sc.truth);
    echo_config(dir, cfg);
    std::cerr << "simulated " << sc.data.size() << " points on " << sc.truth.fibres.size() << " fibres\n";
    return 0;
}

int cmd_estimate_field(const Options& o) {
    const RunConfig cfg = config_for(o, true);
    const PointPattern data = load_points(o, cfg);
    const std::vector<double> eps(data.size(), cfg.sampler.hyper.eps_prior_mean());
    const OrientationGrid grid = estimate_field(data.points, eps, data.window, cfg.sampler.field_params());
    const fs::path dir = out_dir(o);
    auto out = open_output(dir / "field.csv");
    write_grid_csv(out, grid);
    echo_config(dir, cfg);
    std::cerr << "grid " << grid.nx() << " x " << grid.ny() << ", " << grid.singular_count()
              << " singular nodes\n";
    return 0;
}

int cmd_run(const Options& o) {
    const RunConfig cfg = config_for(o, true);
    const PointPattern data = load_points(o, cfg);
    RunOptions ro;
    ro.t_end = cfg.t_end;
    ro.burn_in = cfg.burn_in;
    const BurnIn planned = burn_in_time(cfg.sampler.hyper, data.window, cfg.sampler.rates.beta_birth);
    const double burn = cfg.burn_in.value_or(planned.time);
    if (!(cfg.t_end > burn)) {
        std::cerr << "error: t_end " << cfg.t_end << " does not exceed the burn-in time " << burn
                  << "; raise t_end or lower burn_in\n";
        return 2;
    }
    const ChainResult res = run_chain(data, cfg.sampler, cfg.seed, ro);

    const fs::path dir = out_dir(o);
    auto out = open_output(dir / "trace.jsonl");
    for (const TraceRecord& r : res.records) write_trace_record(out, r);
    echo_config(dir, cfg);

    std::cerr << "burn-in " << res.burn_in.time;
    if (res.burn_in.degenerate) std::cerr << " (formula degenerate, lower bound used)";
    std::cerr << "\nrecords " << res.records.size() << "\n";
    for (std::size_t e = 0; e < res.counts.proposed.size(); ++e)
        std::cerr << event_name(static_cast<EventKind>(e)) << ' ' << res.counts.accepted[e] << '/'
                  << res.counts.proposed[e] << '\n';
    if (res.death_products.size() >= 100) {
        try {
            const double z = z_m_statistic(res.death_products, cfg.sampler.rates.beta_birth,
                                           cfg.sampler.rates.r_add());
            std::cerr << "Z_m " << z << " over " << res.death_products.size() << " events\n";
        } catch (const Error& e) {
            std::cerr << "Z_m diverged: " << e.what() << '\n';
        }
    }
    return 0;
}

int cmd_summarize(const Options& o) {
    if (o.trace.empty()) throw Error(ErrorKind::Config, "--trace is required");
    const RunConfig cfg = config_for(o, false);
    const auto trace = read_trace(o.trace);
    const fs::path dir = out_dir(o);
    auto sum = open_output(dir / "summary.csv");
    write_summary_csv(sum, summarize(trace));
    auto cl = open_output(dir / "clusters.csv");
    write_clusters_csv(cl, cluster_points(cooccurrence(trace), cfg.cluster_threshold));
    return 0;
}

int cmd_density(const Options& o) {
    if (o.trace.empty()) throw Error(ErrorKind::Config, "--trace is required");
    const RunConfig cfg = config_for(o, true);
    cfg.require_window();
    const auto trace = read_trace(o.trace);
    const DensityGrid g = density_raster(trace, cfg.window(), cfg.density_bandwidth, cfg.density_spacing);
    const fs::path dir = out_dir(o);
    auto pgm = open_output(dir / "density.pgm");
    write_pgm(pgm, g);
    auto csv = open_output(dir / "density.csv");
    write_density_csv(csv, g);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fibre detection in planar point patterns"};
    app.require_subcommand(1);
    Options o;
    auto add_common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config, "key = value configuration file");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--seed", o.seed, "random seed (overrides the config)");
    };
    auto* sim = app.add_subcommand("simulate", "generate a synthetic point pattern");
    add_common(sim);
    auto* est = app.add_subcommand("estimate-field", "estimate the field of orientations");
    add_common(est);
    est->add_option("--points", o.points, "points CSV");
    auto* run = app.add_subcommand("run", "run the birth-death sampler");
    add_common(run);
    run->add_option("--points", o.points, "points CSV");
    auto* summ = app.add_subcommand("summarize", "summarize a trace");
    add_common(summ);
    summ->add_option("--trace", o.trace, "trace JSONL");
    auto* dens = app.add_subcommand("density", "rasterize the fibre density of a trace");
    add_common(dens);
    dens->add_option("--trace", o.trace, "trace JSONL");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(o);
        if (est->parsed()) return cmd_estimate_field(o);
        if (run->parsed()) return cmd_run(o);
        if (summ->parsed()) return cmd_summarize(o);
        if (dens->parsed()) return cmd_density(o);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
