#pragma once

// File formats: points CSV, line-delimited JSON traces and ground-truth sidecars.

#include <iosfwd>
#include <string>
#include <vector>

#include "fibrefield/geometry.hpp"
#include "fibrefield/sampler.hpp"
#include "fibrefield/synthetic.hpp"

namespace fibrefield {

/// Header `x,y`, one point per line. Throws Data naming the first bad line.
std::vector<Point2> read_points_csv(std::istream& in);
std::vector<Point2> read_points_csv(const std::string& path);
/// Header `lon,lat` in degrees, projected by a local equirectangular map
/// about (lon0, lat0) into kilometres east and north.
std::vector<Point2> read_lonlat_csv(std::istream& in, double lon0, double lat0);

void write_points_csv(std::ostream& out, std::span<const Point2> points);

void write_trace_record(std::ostream& out, const TraceRecord& rec);
TraceRecord parse_trace_record(const std::string& line);
std::vector<TraceRecord> read_trace(std::istream& in);
std::vector<TraceRecord> read_trace(const std::string& path);

void write_truth_json(std::ostream& out, const GroundTruth& truth);

} // namespace fibrefield
