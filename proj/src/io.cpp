#include "fibrefield/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>

#include <json.hpp>

#include "fibrefield/error.hpp"

namespace fibrefield {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
    const std::string t = trim(text);
    if (t.empty()) return false;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

json point_json(const Point2& p) { return json::array({p.x(), p.y()}); }

Point2 point_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json vertices_json(std::span<const Point2> v) {
    json arr = json::array();
    for (const Point2& p : v) arr.push_back(point_json(p));
    return arr;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Data, "cannot open " + path);
    return in;
}

} // namespace

static std::vector<Point2> read_xy(std::istream& in, const std::string& expected) {
    std::vector<Point2> pts;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (!header) {
            if (t != expected)
                throw Error(ErrorKind::Data, "line " + std::to_string(lineno) + ": expected header " + expected);
            header = true;
            continue;
        }
        const auto comma = t.find(',');
        double x = 0, y = 0;
        if (comma == std::string::npos || t.find(',', comma + 1) != std::string::npos ||
            !parse_double(t.substr(0, comma), x) || !parse_double(t.substr(comma + 1), y))
            throw Error(ErrorKind::Data, "line " + std::to_string(lineno) + ": malformed point '" + t + "'");
        pts.emplace_back(x, y);
    }
    if (!header) throw Error(ErrorKind::Data, "points file is empty");
    return pts;
}

std::vector<Point2> read_points_csv(std::istream& in) { return read_xy(in, "x,y"); }

std::vector<Point2> read_lonlat_csv(std::istream& in, double lon0, double lat0) {
    constexpr double earth_radius_km = 6371.0;
    const double rad = std::numbers::pi / 180;
    std::vector<Point2> pts = read_xy(in, "lon,lat");
    for (Point2& p : pts)
        p = Point2(earth_radius_km * (p.x() - lon0) * rad * std::cos(lat0 * rad), earth_radius_km * (p.y() - lat0) * rad);
    return pts;
}

std::vector<Point2> read_points_csv(const std::string& path) {
    auto in = open_input(path);
    return read_points_csv(in);
}

void write_points_csv(std::ostream& out, std::span<const Point2> points) {
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "x,y\n";
    for (const Point2& p : points) out << p.x() << ',' << p.y() << '\n';
}

void write_trace_record(std::ostream& out, const TraceRecord& rec) {
    json j;
    j["clock"] = rec.clock;
    j["k"] = rec.k;
    j["total_length"] = rec.total_length;
    j["n_noise"] = rec.n_noise;
    j["eps_mean"] = rec.eps_mean;
    j["dispersion_p95"] = rec.dispersion_p95;
    j["Z"] = rec.z;
    j["X"] = rec.x;
    json fibres = json::array();
    for (const auto& f : rec.fibres) {
        fibres.push_back({{"omega", point_json(f.omega)},
                          {"l1", f.l1},
                          {"l2", f.l2},
                          {"l_total", f.l_total},
                          {"truncated", f.truncated},
                          {"vertices", vertices_json(f.vertices)}});
    }
    j["fibres"] = std::move(fibres);
    out << j.dump() << '\n';
}

TraceRecord parse_trace_record(const std::string& line) {
    TraceRecord r;
    try {
        const json j = json::parse(line);
        r.clock = j.at("clock").get<double>();
        r.k = j.at("k").get<int>();
        r.total_length = j.at("total_length").get<double>();
        r.n_noise = j.at("n_noise").get<int>();
        r.eps_mean = j.at("eps_mean").get<double>();
        r.dispersion_p95 = j.at("dispersion_p95").get<double>();
        r.z = j.at("Z").get<std::vector<int>>();
        r.x = j.at("X").get<std::vector<int>>();
        for (const json& f : j.at("fibres")) {
            TraceRecord::FibreSummary s;
            s.omega = point_from(f.at("omega"));
            s.l1 = f.at("l1").get<double>();
            s.l2 = f.at("l2").get<double>();
            s.l_total = f.at("l_total").get<double>();
            s.truncated = f.at("truncated").get<bool>();
            for (const json& v : f.at("vertices")) s.vertices.push_back(point_from(v));
            r.fibres.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Data, std::string("corrupt trace record: ") + e.what());
    }
    if (r.z.size() != r.x.size() || static_cast<int>(r.fibres.size()) != r.k)
        throw Error(ErrorKind::Data, "corrupt trace record: inconsistent sizes");
    return r;
}

std::vector<TraceRecord> read_trace(std::istream& in) {
    std::vector<TraceRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            out.push_back(parse_trace_record(line));
        } catch (const Error& e) {
            throw Error(ErrorKind::Data, "line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (out.empty()) throw Error(ErrorKind::Data, "trace is empty");
    return out;
}

std::vector<TraceRecord> read_trace(const std::string& path) {
    auto in = open_input(path);
    return read_trace(in);
}

void write_truth_json(std::ostream& out, const GroundTruth& truth) {
    json j;
    json fibres = json::array();
    for (const Fibre& f : truth.fibres) {
        fibres.push_back({{"omega", point_json(f.omega)},
                          {"l1", f.l1},
                          {"l2", f.l2},
                          {"l_total", f.l_total()},
                          {"truncated", f.truncated},
                          {"vertices", vertices_json(f.vertices)}});
    }
    j["fibres"] = std::move(fibres);
    j["Z"] = truth.z;
    j["X"] = truth.x;
    j["anchors"] = vertices_json(truth.anchors);
    out << j.dump(1) << '\n';
}

} // namespace fibrefield
