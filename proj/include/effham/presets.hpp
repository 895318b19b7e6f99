#pragma once

// Named resonance models with default parameters, search windows and
// time-domain settings.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "effham/errors.hpp"
#include "effham/feshbach.hpp"

namespace effham {

using ParameterSet = std::map<std::string, double>;

struct Preset {
    std::string name;
    std::string description;
    ParameterSet defaults;
};

/// A built preset: the model plus where and how to look at it.
struct PresetModel {
    FeshbachModel model;
    ParameterSet parameters;
    EnergyWindow window;
    double decay_time = 0.0;
    int decay_steps = 2000;
    double decay_tolerance = 0.05;  // relative |Γ − rate| / rate
};

inline const std::vector<Preset>& list_presets() {
    static const std::vector<Preset> catalog{
        {"two-channel-flat",
         "one discrete level coupled with constant strength v to a flat continuum band",
         {{"bound_energy", 0.0},
          {"band_min", -1.0},
          {"band_max", 1.0},
          {"n_continuum", 1000},
          {"v", 0.004},
          {"window_lo", -0.3},
          {"window_hi", 0.3},
          {"decay_time", 200.0},
          {"decay_steps", 2000},
          {"decay_tolerance", 0.05}}},
        {"shape-barrier-1d",
         "radial well behind a Gaussian barrier on a box grid; quasi-bound level above threshold",
         {{"well_depth", 3.0},
          {"well_radius", 2.0},
          {"barrier_height", 4.0},
          {"barrier_center", 3.0},
          {"barrier_width", 0.4},
          {"spacing", 0.2},
          {"n_points", 2800},
          {"inner_radius", 4.5},
          {"window_lo", 2.2},
          {"window_hi", 3.2},
          {"decay_time", 60.0},
          {"decay_steps", 2000},
          {"decay_tolerance", 0.10}}},
        {"feshbach-narrow-pair",
         "two closed-channel levels just below their threshold at 0.5, weakly coupled to an open band",
         {{"bound_energy_1", 0.38},
          {"bound_energy_2", 0.45},
          {"closed_threshold", 0.5},
          {"band_min", -1.0},
          {"band_max", 1.0},
          {"n_continuum", 1000},
          {"v", 0.0025},
          {"window_lo", 0.3},
          {"window_hi", 0.49},
          {"decay_time", 600.0},
          {"decay_steps", 3000},
          {"decay_tolerance", 0.05}}},
    };
    return catalog;
}

inline const Preset& find_preset(const std::string& name) {
    for (const auto& p : list_presets()) {
        if (p.name == name) return p;
    }
    std::string known;
    for (const auto& p : list_presets()) known += (known.empty() ? "" : ", ") + p.name;
    throw ConfigError("preset", "unknown preset '" + name + "' (known: " + known + ")");
}

/// Well-plus-barrier potential of the shape preset.
inline double shape_potential(const ParameterSet& p, double r) {
    const double depth = p.at("well_depth"), r_w = p.at("well_radius");
    const double well = r < r_w ? -depth : -depth * std::exp(-(r - r_w) * (r - r_w) / 0.1);
    const double x = (r - p.at("barrier_center")) / p.at("barrier_width");
    return well + p.at("barrier_height") * std::exp(-x * x);
}

namespace detail {

inline int as_count(const ParameterSet& p, const std::string& key) {
    const double v = p.at(key);
    if (!(v >= 1.0) || v != std::floor(v) || v > 1e7) {
        throw ConfigError("overrides." + key, "preset parameter '" + key + "' must be a positive integer");
    }
    return static_cast<int>(v);
}

}  // namespace detail

/// Builds a preset, applying `overrides` on top of its defaults. Unknown
/// override keys are rejected.
inline PresetModel build_preset(const std::string& name, const ParameterSet& overrides = {}) {
    const Preset& preset = find_preset(name);
    ParameterSet p = preset.defaults;
    for (const auto& [key, value] : overrides) {
        if (!p.count(key)) throw ConfigError("overrides." + key, "preset '" + name + "' has no parameter '" + key + "'");
        if (!std::isfinite(value)) throw ConfigError("overrides." + key, "override must be finite");
        p[key] = value;
    }

    PresetModel out;
    if (name == "two-channel-flat") {
        const double v = p.at("v");
        out.model = make_two_channel({p.at("bound_energy")}, p.at("band_min"), p.at("band_max"),
                                     detail::as_count(p, "n_continuum"), [v](double) { return v; });
    } else if (name == "feshbach-narrow-pair") {
        const double v = p.at("v");
        out.model = make_two_channel({p.at("bound_energy_1"), p.at("bound_energy_2")}, p.at("band_min"),
                                     p.at("band_max"), detail::as_count(p, "n_continuum"), [v](double) { return v; });
    } else {
        out.model = make_grid_1d(p.at("spacing"), detail::as_count(p, "n_points"),
                                 [&p](double r) { return shape_potential(p, r); }, p.at("inner_radius"));
    }
    out.model.name = name;
    out.window = {p.at("window_lo"), p.at("window_hi")};
    out.decay_time = p.at("decay_time");
    out.decay_steps = detail::as_count(p, "decay_steps");
    out.decay_tolerance = p.at("decay_tolerance");
    out.parameters = std::move(p);
    return out;
}

/// P-space eigenvector of PHP whose eigenvalue is closest to `energy`, the
/// natural initial state for the decay of a resonance grown from that level.
inline StateVector php_state_near(const FeshbachModel& model, double energy) {
    const HermitianEigen es = hermitian_eigen(model.hamiltonian.php());
    Eigen::Index best = 0;
    (es.values.array() - energy).abs().minCoeff(&best);
    return es.vectors.col(best);
}

}  // namespace effham
