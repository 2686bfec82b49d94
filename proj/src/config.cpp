#include "fibrefield/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <vector>

#include "fibrefield/error.hpp"

namespace fibrefield {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
    double out = 0;
    const char* first = v.data();
    if (!v.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
        throw std::invalid_argument("expected a number, got '" + v + "'");
    return out;
}

long long to_integer(const std::string& v) {
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw std::invalid_argument("expected an integer, got '" + v + "'");
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(std::numeric_limits<double>::max_digits10);
    os << v;
    return os.str();
}

std::vector<FibreSpec> parse_fibres(const std::string& v) {
    std::vector<FibreSpec> out;
    std::stringstream all(v);
    std::string item;
    while (std::getline(all, item, ';')) {
        if (trim(item).empty()) continue;
        std::istringstream is(item);
        std::vector<double> nums;
        std::string tok;
        while (is >> tok) nums.push_back(to_double(tok));
        if (nums.size() != 4) throw std::invalid_argument("each fibre needs 'x y l1 l2'");
        out.push_back({{nums[0], nums[1]}, nums[2], nums[3]});
    }
    return out;
}

struct Key {
    const char* name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

Key real(const char* name, double RunConfig::*field) {
    return {name, [field](RunConfig& c, const std::string& v) { c.*field = to_double(v); },
            [field](const RunConfig& c) { return fmt(c.*field); }};
}

template <typename Get>
Key real_at(const char* name, Get member) {
    return {name, [member](RunConfig& c, const std::string& v) { member(c) = to_double(v); },
            [member](const RunConfig& c) { return fmt(member(const_cast<RunConfig&>(c))); }};
}

template <typename Get>
Key int_at(const char* name, Get member) {
    return {name, [member](RunConfig& c, const std::string& v) { member(c) = static_cast<int>(to_integer(v)); },
            [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }};
}

const std::vector<Key>& keys() {
    static const std::vector<Key> table = [] {
        std::vector<Key> k;
        k.push_back(real_at("window_xmin", [](RunConfig& c) -> double& { return c.scenario.window.xmin; }));
        k.push_back(real_at("window_ymin", [](RunConfig& c) -> double& { return c.scenario.window.ymin; }));
        k.push_back(real_at("window_xmax", [](RunConfig& c) -> double& { return c.scenario.window.xmax; }));
        k.push_back(real_at("window_ymax", [](RunConfig& c) -> double& { return c.scenario.window.ymax; }));
        // model hyperparameters
        k.push_back(real_at("kappa", [](RunConfig& c) -> double& { return c.scenario.hyper.kappa; }));
        k.push_back(real_at("lambda", [](RunConfig& c) -> double& { return c.scenario.hyper.lambda; }));
        k.push_back(real_at("sigma_disp", [](RunConfig& c) -> double& { return c.scenario.hyper.sigma_disp; }));
        k.push_back(real_at("eta", [](RunConfig& c) -> double& { return c.scenario.hyper.eta; }));
        k.push_back(real_at("alpha_signal", [](RunConfig& c) -> double& { return c.scenario.hyper.alpha_signal; }));
        k.push_back(real_at("beta_signal", [](RunConfig& c) -> double& { return c.scenario.hyper.beta_signal; }));
        k.push_back(real_at("alpha_dir", [](RunConfig& c) -> double& { return c.scenario.hyper.alpha_dir; }));
        k.push_back(real_at("sigma_fo", [](RunConfig& c) -> double& { return c.scenario.hyper.sigma_fo; }));
        k.push_back(real_at("h_fo", [](RunConfig& c) -> double& { return c.scenario.hyper.h_fo; }));
        // sampler rates and tuning
        k.push_back(real_at("beta_birth", [](RunConfig& c) -> double& { return c.sampler.rates.beta_birth; }));
        k.push_back(real_at("r_move", [](RunConfig& c) -> double& { return c.sampler.rates.r_move; }));
        k.push_back(real_at("r_lengths", [](RunConfig& c) -> double& { return c.sampler.rates.r_lengths; }));
        k.push_back(real_at("r_split_join", [](RunConfig& c) -> double& { return c.sampler.rates.r_split_join; }));
        k.push_back(real_at("r_z", [](RunConfig& c) -> double& { return c.sampler.rates.r_z; }));
        k.push_back(real_at("r_eps", [](RunConfig& c) -> double& { return c.sampler.rates.r_eps; }));
        k.push_back(real_at("r_record", [](RunConfig& c) -> double& { return c.sampler.rates.r_record; }));
        k.push_back(real_at("sigma_move", [](RunConfig& c) -> double& { return c.sampler.moves.sigma_move; }));
        k.push_back(real_at("d_join", [](RunConfig& c) -> double& { return c.sampler.moves.d_join; }));
        k.push_back(real_at("split_jitter", [](RunConfig& c) -> double& { return c.sampler.moves.split_jitter; }));
        k.push_back(real_at("eps_concentration",
                            [](RunConfig& c) -> double& { return c.sampler.moves.eps_concentration; }));
        k.push_back(real_at("grid_spacing", [](RunConfig& c) -> double& { return c.sampler.grid_spacing; }));
        k.push_back(real_at("step", [](RunConfig& c) -> double& { return c.sampler.step; }));
        k.push_back(int_at("max_prior_retries", [](RunConfig& c) -> int& { return c.sampler.max_prior_retries; }));
        k.push_back(real("t_end", &RunConfig::t_end));
        k.push_back({"burn_in",
                     [](RunConfig& c, const std::string& v) {
                         if (v == "auto") c.burn_in.reset();
                         else c.burn_in = to_double(v);
                     },
                     [](const RunConfig& c) { return c.burn_in ? fmt(*c.burn_in) : std::string("auto"); }});
        k.push_back({"seed",
                     [](RunConfig& c, const std::string& v) {
                         std::uint64_t out = 0;
                         const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
                         if (ec != std::errc() || ptr != v.data() + v.size())
                             throw std::invalid_argument("expected an unsigned integer, got '" + v + "'");
                         c.seed = out;
                     },
                     [](const RunConfig& c) { return std::to_string(c.seed); }});
        // simulation
        k.push_back({"field_kind",
                     [](RunConfig& c, const std::string& v) {
                         if (v == "constant") c.scenario.field_kind = FieldKind::Constant;
                         else if (v == "circular") c.scenario.field_kind = FieldKind::Circular;
                         else if (v == "ridge_wave") c.scenario.field_kind = FieldKind::RidgeWave;
                         else throw std::invalid_argument("field_kind must be constant, circular or ridge_wave");
                     },
                     [](const RunConfig& c) {
                         switch (c.scenario.field_kind) {
                         case FieldKind::Constant: return std::string("constant");
                         case FieldKind::Circular: return std::string("circular");
                         default: return std::string("ridge_wave");
                         }
                     }});
        k.push_back(real_at("theta0", [](RunConfig& c) -> double& { return c.scenario.theta0; }));
        k.push_back(real_at("centre_x", [](RunConfig& c) -> double& { return c.scenario.centre.x(); }));
        k.push_back(real_at("centre_y", [](RunConfig& c) -> double& { return c.scenario.centre.y(); }));
        k.push_back(real_at("amplitude", [](RunConfig& c) -> double& { return c.scenario.amplitude; }));
        k.push_back(real_at("period", [](RunConfig& c) -> double& { return c.scenario.period; }));
        k.push_back({"fibres",
                     [](RunConfig& c, const std::string& v) { c.scenario.fibres = parse_fibres(v); },
                     [](const RunConfig& c) {
                         std::string out;
                         for (const FibreSpec& f : c.scenario.fibres) {
                             if (!out.empty()) out += "; ";
                             out += fmt(f.omega.x()) + ' ' + fmt(f.omega.y()) + ' ' + fmt(f.l1) + ' ' + fmt(f.l2);
                         }
                         return out;
                     }});
        k.push_back(int_at("prior_fibres", [](RunConfig& c) -> int& { return c.scenario.prior_fibres; }));
        k.push_back({"count_mode",
                     [](RunConfig& c, const std::string& v) {
                         if (v == "fixed") c.scenario.count_mode = CountMode::Fixed;
                         else if (v == "poisson") c.scenario.count_mode = CountMode::Poisson;
                         else throw std::invalid_argument("count_mode must be fixed or poisson");
                     },
                     [](const RunConfig& c) {
                         return std::string(c.scenario.count_mode == CountMode::Fixed ? "fixed" : "poisson");
                     }});
        k.push_back(int_at("n_signal", [](RunConfig& c) -> int& { return c.scenario.n_signal; }));
        k.push_back(int_at("n_noise", [](RunConfig& c) -> int& { return c.scenario.n_noise; }));
        k.push_back(real_at("truth_spacing", [](RunConfig& c) -> double& { return c.scenario.truth_spacing; }));
        k.push_back(real_at("truth_step", [](RunConfig& c) -> double& { return c.scenario.truth_step; }));
        // outputs
        k.push_back(real("density_bandwidth", &RunConfig::density_bandwidth));
        k.push_back(real("density_spacing", &RunConfig::density_spacing));
        k.push_back(real("cluster_threshold", &RunConfig::cluster_threshold));
        return k;
    }();
    return table;
}

} // namespace

void RunConfig::require_window() const {
    if (!has_window)
        throw Error(ErrorKind::Config, "window_xmin, window_ymin, window_xmax and window_ymax are required");
}

void RunConfig::validate() const {
    if (has_window && !scenario.window.valid())
        throw Error(ErrorKind::Config, "window must have positive width and height");
    sampler.validate();
    if (!(t_end > 0)) throw Error(ErrorKind::Config, "t_end must be positive");
    if (burn_in && !(*burn_in >= 0)) throw Error(ErrorKind::Config, "burn_in must be non-negative");
    if (!(density_bandwidth > 0) || !(density_spacing > 0))
        throw Error(ErrorKind::Config, "density_bandwidth and density_spacing must be positive");
    if (!(cluster_threshold > 0 && cluster_threshold <= 1))
        throw Error(ErrorKind::Config, "cluster_threshold must lie in (0, 1]");
}

RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    cfg.scenario.fibres.clear();
    std::map<std::string, const Key*> index;
    for (const Key& k : keys()) index[k.name] = &k;
    std::set<std::string> seen;
    int window_keys = 0;

    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        const std::string body = trim(line.substr(0, hash));
        if (body.empty()) continue;
        const std::string where = "line " + std::to_string(lineno) + ": ";
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::Config, where + "expected 'key = value'");
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        const auto it = index.find(key);
        if (it == index.end()) throw Error(ErrorKind::Config, where + "unknown key '" + key + "'");
        if (!seen.insert(key).second) throw Error(ErrorKind::Config, where + "duplicate key '" + key + "'");
        if (value.empty()) throw Error(ErrorKind::Config, where + "missing value for '" + key + "'");
        try {
            it->second->set(cfg, value);
        } catch (const std::invalid_argument& e) {
            throw Error(ErrorKind::Config, where + key + ": " + e.what());
        }
        if (key.rfind("window_", 0) == 0) ++window_keys;
    }
    cfg.has_window = window_keys == 4;
    if (window_keys > 0 && window_keys < 4)
        throw Error(ErrorKind::Config, "window needs all of window_xmin, window_ymin, window_xmax, window_ymax");
    cfg.sampler.hyper = cfg.scenario.hyper;
    cfg.scenario.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open config " + path);
    return parse_config(in);
}

void write_effective_config(std::ostream& out, const RunConfig& cfg) {
    for (const Key& k : keys()) {
        if (!cfg.has_window && std::string(k.name).rfind("window_", 0) == 0) continue;
        const std::string v = k.get(cfg);
        if (v.empty()) continue;  // no explicit fibres
        out << k.name << " = " << v << '\n';
    }
}

} // namespace fibrefield
