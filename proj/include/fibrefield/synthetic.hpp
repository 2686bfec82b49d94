#pragma once

// Ground-truth point patterns drawn from the generative model over an analytic
// field of orientations.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "fibrefield/field.hpp"
#include "fibrefield/model.hpp"

namespace fibrefield {

enum class FieldKind { Constant, Circular, RidgeWave };
enum class CountMode { Fixed, Poisson };

struct FibreSpec {
    Point2 omega{0, 0};
    double l1 = 0;
    double l2 = 0;
};

struct ScenarioConfig {
    WindowRect window{0, 0, 200, 150};
    FieldKind field_kind = FieldKind::RidgeWave;
    double theta0 = 0;             // constant field
    Point2 centre{100, 75};        // circular field
    double amplitude = 12;         // ridge-wave: y = A sin(2 pi x / P) + c
    double period = 160;
    std::vector<FibreSpec> fibres;  // explicit fibres; when empty, prior_fibres are drawn
    int prior_fibres = 0;
    Hyperparams hyper;
    CountMode count_mode = CountMode::Fixed;
    int n_signal = 200;
    int n_noise = 200;
    double truth_spacing = 0.25;  // analytic grid spacing
    double truth_step = 0.25;     // streamline step for the true fibres
    std::uint64_t seed = 1;

    void validate() const;
};

/// Two fibres of length 157 on a ridge-wave field in a 200 x 150 window.
ScenarioConfig ridge_scenario();

OrientationGrid analytic_field(const ScenarioConfig& cfg);

struct GroundTruth {
    FibreSet fibres;
    std::vector<int> z;
    std::vector<int> x;
    std::vector<double> arcs;
    std::vector<Point2> anchors;

    Allocation allocation() const;
};

struct Scenario {
    PointPattern data;
    GroundTruth truth;
};

Scenario generate(const ScenarioConfig& cfg);

} // namespace fibrefield
