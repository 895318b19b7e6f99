#pragma once

// Scenario runner behind the command-line tool: strict JSON configs, engine
// dispatch, JSON reports with invariant checks, and CSV data.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "effham/errors.hpp"
#include "effham/feshbach.hpp"
#include "effham/field.hpp"
#include "effham/numkit.hpp"
#include "effham/presets.hpp"
#include "effham/spin.hpp"
#include "effham/su2_propagator.hpp"
#include "effham/variational.hpp"

namespace effham::cli {

using json = nlohmann::json;

inline const std::vector<std::string>& engine_names() {
    static const std::vector<std::string> names{"propagate", "phase", "resonance", "varcheck"};
    return names;
}

// --- strict config reading ----------------------------------------------------

/// Reads one JSON object, recording every value (defaults included) into a
/// canonical echo and rejecting keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected a JSON object");
        echo = json::object();
    }

    std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json* get(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
        const json* v = get(key);
        double out = 0.0;
        if (!v) {
            if (!fallback) throw ConfigError(sub(key), "required number is missing");
            out = *fallback;
        } else {
            if (!v->is_number()) throw ConfigError(sub(key), "expected a number");
            out = v->get<double>();
        }
        if (!std::isfinite(out)) throw ConfigError(sub(key), "must be finite");
        echo[key] = out;
        return out;
    }

    double positive(const std::string& key, std::optional<double> fallback = std::nullopt) {
        const double v = number(key, fallback);
        if (!(v > 0.0)) throw ConfigError(sub(key), "must be positive");
        return v;
    }

    long long integer(const std::string& key, std::optional<long long> fallback, long long min_value) {
        const json* v = get(key);
        long long out = 0;
        if (!v) {
            if (!fallback) throw ConfigError(sub(key), "required integer is missing");
            out = *fallback;
        } else {
            if (!v->is_number_integer() && !v->is_number_unsigned()) throw ConfigError(sub(key), "expected an integer");
            out = v->get<long long>();
        }
        if (out < min_value) throw ConfigError(sub(key), "must be >= " + std::to_string(min_value));
        echo[key] = out;
        return out;
    }

    std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
        const json* v = get(key);
        std::string out;
        if (!v) {
            if (!fallback) throw ConfigError(sub(key), "required string is missing");
            out = *fallback;
        } else {
            if (!v->is_string()) throw ConfigError(sub(key), "expected a string");
            out = v->get<std::string>();
        }
        echo[key] = out;
        return out;
    }

    bool boolean(const std::string& key, bool fallback) {
        const json* v = get(key);
        bool out = fallback;
        if (v) {
            if (!v->is_boolean()) throw ConfigError(sub(key), "expected true or false");
            out = v->get<bool>();
        }
        echo[key] = out;
        return out;
    }

    std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt,
                                std::size_t min_size = 1) {
        const json* v = get(key);
        std::vector<double> out;
        if (!v) {
            if (!fallback) throw ConfigError(sub(key), "required array is missing");
            out = *fallback;
        } else {
            if (!v->is_array()) throw ConfigError(sub(key), "expected an array of numbers");
            for (std::size_t i = 0; i < v->size(); ++i) {
                const json& e = (*v)[i];
                if (!e.is_number()) throw ConfigError(sub(key) + "[" + std::to_string(i) + "]", "expected a number");
                out.push_back(e.get<double>());
            }
        }
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (!std::isfinite(out[i])) throw ConfigError(sub(key) + "[" + std::to_string(i) + "]", "must be finite");
        }
        if (out.size() < min_size) {
            throw ConfigError(sub(key), "needs at least " + std::to_string(min_size) + " entries");
        }
        echo[key] = out;
        return out;
    }

    Vec3 vec3(const std::string& key, std::optional<Vec3> fallback = std::nullopt) {
        std::optional<std::vector<double>> fb;
        if (fallback) fb = std::vector<double>{fallback->x, fallback->y, fallback->z};
        const auto v = numbers(key, fb, 3);
        if (v.size() != 3) throw ConfigError(sub(key), "expected exactly 3 components");
        return {v[0], v[1], v[2]};
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError(sub(item.key()), "unknown key");
        }
    }

    json echo;

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

// --- configuration ----------------------------------------------------------

struct ScenarioConfig {
    std::string engine;
    std::string name;

    // propagate, phase, varcheck
    double spin_j = 0.5;
    FieldProtocol field;
    json field_spec;
    TimeSpan span{0.0, 1.0};
    std::size_t samples = 201;
    OdeSettings ode;
    double restart_threshold = 10.0;
    std::size_t direct_steps = 4000;
    std::size_t heff_samples = 100;
    std::optional<double> berry_rel_tol;

    // resonance
    std::string preset;
    ParameterSet overrides;
    std::optional<EnergyWindow> window;
    double eta_factor = 3.0;
    int scan_points = 201;
    bool decay = true;
    std::optional<double> decay_rel_tol;
    std::optional<std::string> compare_preset;
    std::uint64_t seed = 1;

    // varcheck
    std::vector<long long> grid_intervals{8, 16, 32, 64};
    std::vector<double> epsilons{0.2, 0.1, 0.05, 0.025};

    json echo;  // canonical form with every default filled in
};

namespace detail {

inline std::pair<FieldProtocol, json> parse_field(const json& j, const std::string& path, TimeSpan span) {
    ObjectReader r(j, path);
    const std::string kind = r.string("kind");
    FieldProtocol f;
    if (kind == "constant") {
        f = FieldProtocol::constant(r.vec3("b"));
    } else if (kind == "zero") {
        f = FieldProtocol::zero();
    } else if (kind == "rotating-cone") {
        const double b0 = r.number("b0");
        const double theta = r.number("theta");
        const double omega = r.number("omega");
        const std::string frame = r.string("frame", std::string("cyclic"));
        FieldProtocol::ConeFrame cf;
        if (frame == "lab") cf = FieldProtocol::ConeFrame::lab;
        else if (frame == "field-aligned") cf = FieldProtocol::ConeFrame::field_aligned;
        else if (frame == "cyclic") cf = FieldProtocol::ConeFrame::cyclic;
        else throw ConfigError(r.sub("frame"), "expected one of lab, field-aligned, cyclic");
        f = FieldProtocol::rotating_cone(b0, theta, omega, cf);
    } else if (kind == "linear-ramp") {
        const Vec3 start = r.vec3("start");
        f = FieldProtocol::linear_ramp(start, r.vec3("rate"));
    } else if (kind == "tabulated") {
        const auto times = r.numbers("times", std::nullopt, 2);
        const json* vals = r.get("values");
        if (!vals || !vals->is_array()) throw ConfigError(r.sub("values"), "expected an array of [x, y, z] samples");
        std::vector<Vec3> values;
        json echo_vals = json::array();
        for (std::size_t i = 0; i < vals->size(); ++i) {
            const json& e = (*vals)[i];
            const std::string p = r.sub("values") + "[" + std::to_string(i) + "]";
            if (!e.is_array() || e.size() != 3) throw ConfigError(p, "expected [x, y, z]");
            for (const auto& c : e) {
                if (!c.is_number() || !std::isfinite(c.get<double>())) throw ConfigError(p, "expected finite numbers");
            }
            values.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>()});
            echo_vals.push_back({values.back().x, values.back().y, values.back().z});
        }
        r.echo["values"] = echo_vals;
        if (values.size() != times.size()) throw ConfigError(r.sub("values"), "must match the length of times");
        try {
            f = FieldProtocol::tabulated(times, values);
        } catch (const InvalidInputError& e) {
            throw ConfigError(r.sub("times"), e.what());
        }
        if (times.front() > span.begin || times.back() < span.end) {
            throw ConfigError(r.sub("times"), "samples must cover t_span");
        }
    } else if (kind == "random-smooth") {
        const auto seed = r.integer("seed", std::nullopt, 0);
        const double integrated = r.positive("integrated");
        const auto knots = r.integer("knots", 41, 4);
        const auto harmonics = r.integer("harmonics", 3, 1);
        const double transverse = r.number("transverse", 1.0);
        f = random_smooth_field(static_cast<std::uint64_t>(seed), span, integrated, static_cast<int>(knots),
                                static_cast<int>(harmonics), transverse);
    } else {
        throw ConfigError(r.sub("kind"),
                          "unknown field kind '" + kind +
                              "' (expected constant, zero, rotating-cone, linear-ramp, tabulated, random-smooth)");
    }
    r.finish();
    return {std::move(f), std::move(r.echo)};
}

inline void parse_dynamics(ObjectReader& r, ScenarioConfig& c) {
    c.spin_j = r.positive("spin_j", 0.5);
    try {
        SpinRepresentation::from_j(c.spin_j);
    } catch (const InvalidInputError& e) {
        throw ConfigError(r.sub("spin_j"), e.what());
    }
    const auto span = r.numbers("t_span", std::nullopt, 2);
    if (span.size() != 2 || !(span[1] > span[0])) throw ConfigError(r.sub("t_span"), "expected [t0, t1] with t1 > t0");
    c.span = {span[0], span[1]};
    const json* fj = r.get("field");
    if (!fj) throw ConfigError(r.sub("field"), "required object is missing");
    auto [field, echo] = parse_field(*fj, r.sub("field"), c.span);
    c.field = std::move(field);
    c.field_spec = echo;
    r.echo["field"] = echo;
    c.samples = static_cast<std::size_t>(r.integer("samples", 201, 2));

    json ode_in = json::object();
    if (const json* oj = r.get("ode")) ode_in = *oj;
    ObjectReader o(ode_in, r.sub("ode"));
    c.ode.rel_tol = o.positive("rel_tol", 1e-10);
    c.ode.abs_tol = o.positive("abs_tol", 1e-12);
    const double max_step = o.number("max_step", 0.0);
    if (max_step < 0.0) throw ConfigError(o.sub("max_step"), "must be >= 0 (0 means unlimited)");
    c.ode.max_step = max_step > 0.0 ? max_step : std::numeric_limits<double>::infinity();
    c.ode.max_steps = static_cast<std::size_t>(o.integer("max_steps", 10000000, 1));
    o.finish();
    r.echo["ode"] = o.echo;
    c.restart_threshold = r.positive("restart_threshold", 10.0);
}

}  // namespace detail

/// Parses and validates a scenario. `engine` is the command-line engine;
/// when empty the config must name one. `default_name` is used if the
/// config has no "name".
inline ScenarioConfig parse_config(const json& j, const std::string& engine, const std::string& default_name) {
    ObjectReader r(j, "");
    ScenarioConfig c;
    const json* ej = r.get("engine");
    if (ej && !ej->is_string()) throw ConfigError("engine", "expected a string");
    const std::string declared = ej ? ej->get<std::string>() : "";
    if (engine.empty() && declared.empty()) throw ConfigError("engine", "required when running a config directly");
    if (!engine.empty() && !declared.empty() && engine != declared) {
        throw ConfigError("engine", "config is for '" + declared + "' but was run as '" + engine + "'");
    }
    c.engine = engine.empty() ? declared : engine;
    if (std::find(engine_names().begin(), engine_names().end(), c.engine) == engine_names().end()) {
        throw ConfigError("engine", "unknown engine '" + c.engine + "'");
    }
    r.echo["engine"] = c.engine;
    c.name = r.string("name", default_name);
    if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos) {
        throw ConfigError("name", "must be a non-empty file-name-safe string");
    }

    if (c.engine == "propagate" || c.engine == "phase" || c.engine == "varcheck") {
        detail::parse_dynamics(r, c);
    }
    if (c.engine == "propagate" || c.engine == "phase") {
        c.direct_steps = static_cast<std::size_t>(r.integer("direct_steps", 4000, 16));
        c.heff_samples = static_cast<std::size_t>(r.integer("heff_samples", 100, 1));
    }
    if (c.engine == "phase" && r.has("berry_rel_tol")) {
        c.berry_rel_tol = r.positive("berry_rel_tol");
        if (c.field.kind() != "rotating-cone") {
            throw ConfigError("berry_rel_tol", "the Berry-limit check needs a rotating-cone field");
        }
    }
    if (c.engine == "resonance") {
        c.preset = r.string("preset");
        find_preset(c.preset);
        json ov = json::object();
        if (const json* oj = r.get("overrides")) ov = *oj;
        ObjectReader o(ov, "overrides");
        const Preset& preset = find_preset(c.preset);
        for (const auto& item : ov.items()) {
            if (!preset.defaults.count(item.key())) {
                throw ConfigError("overrides." + item.key(), "preset '" + c.preset + "' has no such parameter");
            }
            c.overrides[item.key()] = o.number(item.key());
        }
        o.finish();
        r.echo["overrides"] = o.echo;
        if (r.has("window")) {
            const auto w = r.numbers("window", std::nullopt, 2);
            if (w.size() != 2 || !(w[1] > w[0])) throw ConfigError("window", "expected [lo, hi] with hi > lo");
            c.window = EnergyWindow{w[0], w[1]};
        }
        c.eta_factor = r.positive("eta_factor", 3.0);
        c.scan_points = static_cast<int>(r.integer("scan_points", 201, 3));
        c.decay = r.boolean("decay", true);
        if (r.has("decay_rel_tol")) c.decay_rel_tol = r.positive("decay_rel_tol");
        if (r.has("compare_preset")) {
            c.compare_preset = r.string("compare_preset");
            find_preset(*c.compare_preset);
            const std::set<std::string> pair{c.preset, *c.compare_preset};
            if (pair != std::set<std::string>{"feshbach-narrow-pair", "shape-barrier-1d"}) {
                throw ConfigError("compare_preset",
                                  "the width comparison pairs feshbach-narrow-pair with shape-barrier-1d");
            }
        }
        c.seed = static_cast<std::uint64_t>(r.integer("seed", 1, 0));
    }
    if (c.engine == "varcheck") {
        c.grid_intervals.clear();
        const json* gj = r.get("grid_intervals");
        std::vector<double> raw = {8, 16, 32, 64};
        if (gj) {
            if (!gj->is_array()) throw ConfigError("grid_intervals", "expected an array of even integers");
            raw.clear();
            for (std::size_t i = 0; i < gj->size(); ++i) {
                const json& e = (*gj)[i];
                if (!e.is_number_integer()) throw ConfigError("grid_intervals[" + std::to_string(i) + "]", "expected an integer");
                raw.push_back(static_cast<double>(e.get<long long>()));
            }
        }
        if (raw.size() < 2) throw ConfigError("grid_intervals", "needs at least 2 grids");
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const auto n = static_cast<long long>(raw[i]);
            if (n < 2 || n % 2) throw ConfigError("grid_intervals[" + std::to_string(i) + "]", "must be even and >= 2");
            if (i > 0 && n != 2 * c.grid_intervals.back()) {
                throw ConfigError("grid_intervals[" + std::to_string(i) + "]", "each grid must halve the previous spacing");
            }
            c.grid_intervals.push_back(n);
        }
        r.echo["grid_intervals"] = c.grid_intervals;
        c.epsilons = r.numbers("epsilons", std::vector<double>{0.2, 0.1, 0.05, 0.025}, 2);
        for (std::size_t i = 0; i < c.epsilons.size(); ++i) {
            if (!(c.epsilons[i] > 0.0)) throw ConfigError("epsilons[" + std::to_string(i) + "]", "must be positive");
        }
        c.seed = static_cast<std::uint64_t>(r.integer("seed", 1, 0));
        if ((c.samples - 1) % 2) throw ConfigError("samples", "varcheck needs an odd sample count (even intervals)");
    }
    r.finish();
    c.echo = r.echo;
    return c;
}

// --- reports ----------------------------------------------------------------

struct Check {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    std::string comparison = "<=";
    std::string status = "pass";  // pass, fail or skipped
    std::string note;
};

class CheckList {
public:
    void le(const std::string& name, double value, double threshold, std::string note = {}) {
        add({name, value, threshold, "<=", value <= threshold ? "pass" : "fail", std::move(note)});
    }
    void lt(const std::string& name, double value, double threshold, std::string note = {}) {
        add({name, value, threshold, "<", value < threshold ? "pass" : "fail", std::move(note)});
    }
    void ge(const std::string& name, double value, double threshold, std::string note = {}) {
        add({name, value, threshold, ">=", value >= threshold ? "pass" : "fail", std::move(note)});
    }
    void skip(const std::string& name, std::string note) { add({name, 0.0, 0.0, "n/a", "skipped", std::move(note)}); }

    bool all_pass() const {
        return std::none_of(checks_.begin(), checks_.end(), [](const Check& c) { return c.status == "fail"; });
    }
    const std::vector<Check>& checks() const { return checks_; }

    json to_json() const {
        json out = json::array();
        for (const auto& c : checks_) {
            json e{{"name", c.name}, {"comparison", c.comparison}, {"status", c.status}, {"pass", c.status != "fail"}};
            e["value"] = std::isfinite(c.value) ? json(c.value) : json(std::to_string(c.value));
            e["threshold"] = c.threshold;
            if (!c.note.empty()) e["note"] = c.note;
            out.push_back(std::move(e));
        }
        return out;
    }

private:
    void add(Check c) {
        for (const auto& existing : checks_) {
            if (existing.name == c.name) throw std::logic_error("duplicate check " + c.name);
        }
        checks_.push_back(std::move(c));
    }
    std::vector<Check> checks_;
};

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Small in-memory CSV with a fixed header.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
    void row(const std::vector<double>& values) {
        if (values.size() != header_.size()) throw std::logic_error("CsvTable: row width does not match header");
        rows_.push_back(values);
    }
    std::string str() const {
        std::string out;
        for (std::size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + header_[i];
        out += "\n";
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + fmt(r[i]);
            out += "\n";
        }
        return out;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<double>> rows_;
};

struct RunReport {
    json report;
    std::vector<std::pair<std::string, std::string>> files;  // file name, content
    bool pass = false;
};

// --- engines ----------------------------------------------------------------

namespace detail {

struct Su2Run {
    SpinRepresentation rep;
    MuTrajectory traj;
    ComplexMatrix u_final;
    PhaseSplit phases;
};

/// The full su2-propagator invariant set on one trajectory.
inline Su2Run su2_checks(const ScenarioConfig& c, CheckList& checks, json& headline) {
    Su2Run run{SpinRepresentation::from_j(c.spin_j), {}, {}, {}};
    run.traj = integrate_mu(c.field, c.span, c.ode, {c.samples, c.restart_threshold});
    run.u_final = reconstruct_evolution(run.traj, run.rep, c.span.end);

    double unitarity = 0.0;
    for (double t : run.traj.times()) {
        unitarity = std::max(unitarity, unitarity_defect(reconstruct_evolution(run.traj, run.rep, t)));
    }
    checks.le("unitarity", unitarity, 1e-9, "max over samples of |U^dag U - I|");

    const ConstraintDefects cd = constraint_defects(run.traj);
    checks.le("constraint_mu2", cd.mu2, 1e-9, "max |mu2 - conj(mu3)/(1+|mu3|^2)|");
    checks.le("constraint_mu1", cd.mu1, 1e-8, "max relative |exp(Im mu1) - (1+|mu3|^2)|");

    const double integrated = c.field.integrated_magnitude(c.span);
    const std::size_t n_direct = std::max<std::size_t>(c.direct_steps, static_cast<std::size_t>(400.0 * integrated));
    const ComplexMatrix direct = direct_propagate_extrapolated(c.field, run.rep, c.span, n_direct);
    checks.le("oracle_equivalence", max_abs(run.u_final - direct), 1e-7,
              "Wei-Norman vs midpoint-exponential propagation at t_end");

    double offdiag = 0.0;
    for (std::size_t i = 0; i < c.heff_samples; ++i) {
        const double t = c.span.begin + c.span.length() * (static_cast<double>(i) + 0.5) / static_cast<double>(c.heff_samples);
        offdiag = std::max(offdiag, effective_hamiltonian_td(run.traj, c.field, t).numerical_offdiag);
    }
    checks.le("offdiag_cancellation", offdiag, 1e-7, "max off-diagonal of the finite-difference H_eff");

    double rep_defect = 0.0;
    for (int twice_j : {1, 2}) {
        const SpinRepresentation rep(twice_j);
        const ComplexMatrix u = reconstruct_evolution(run.traj, rep, c.span.end);
        rep_defect = std::max(rep_defect, max_abs(u - direct_propagate_extrapolated(c.field, rep, c.span, n_direct)));
    }
    checks.le("representation_independence", rep_defect, 1e-7, "j = 1/2 and j = 1 from one trajectory vs direct");

    run.phases = phase_split(run.traj, c.field);
    checks.le("phase_additivity", run.phases.additivity_defect(), 1e-8, "|total - dynamical - geometric|");

    headline["restarts"] = run.traj.restarts().size();
    headline["integrated_field"] = integrated;
    headline["direct_steps"] = n_direct;
    json u = json::array();
    for (Eigen::Index i = 0; i < run.u_final.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < run.u_final.cols(); ++k) row.push_back({run.u_final(i, k).real(), run.u_final(i, k).imag()});
        u.push_back(row);
    }
    headline["u_final"] = u;
    return run;
}

inline std::string pop_label(const SpinRepresentation& rep, Eigen::Index k) {
    const int twice_m = rep.twice_j() - 2 * static_cast<int>(k);
    if (rep.twice_j() % 2 == 0) return "p_m" + std::to_string(twice_m / 2);
    return "p_m" + std::to_string(twice_m) + "/2";
}

inline RunReport run_propagate(const ScenarioConfig& c) {
    CheckList checks;
    json headline = json::object();
    const Su2Run run = su2_checks(c, checks, headline);

    std::vector<std::string> header{"t", "re_mu3", "im_mu3", "re_mu2", "im_mu2", "re_mu1", "im_mu1"};
    for (Eigen::Index k = 0; k < run.rep.dim(); ++k) header.push_back(pop_label(run.rep, k));
    CsvTable csv(header);
    StateVector psi0 = StateVector::Zero(run.rep.dim());
    psi0[0] = 1.0;
    for (std::size_t i = 0; i < run.traj.times().size(); ++i) {
        const double t = run.traj.times()[i];
        const MuValues& mu = run.traj.samples()[i];
        std::vector<double> row{t, mu.mu3.real(), mu.mu3.imag(), mu.mu2.real(), mu.mu2.imag(), mu.mu1.real(), mu.mu1.imag()};
        const StateVector psi = evolve_state(reconstruct_evolution(run.traj, run.rep, t), psi0);
        for (Eigen::Index k = 0; k < psi.size(); ++k) row.push_back(std::norm(psi[k]));
        csv.row(row);
    }
    const StateVector psi_end = evolve_state(run.u_final, psi0);
    json pops = json::array();
    for (Eigen::Index k = 0; k < psi_end.size(); ++k) pops.push_back(std::norm(psi_end[k]));
    headline["final_populations"] = pops;
    headline["identity_deviation"] = max_abs(run.u_final - ComplexMatrix::Identity(run.rep.dim(), run.rep.dim()));

    RunReport out;
    out.report["headline"] = headline;
    out.report["checks"] = checks.to_json();
    out.files.push_back({c.name + ".csv", csv.str()});
    out.pass = checks.all_pass();
    return out;
}

inline RunReport run_phase(const ScenarioConfig& c) {
    CheckList checks;
    json headline = json::object();
    const Su2Run run = su2_checks(c, checks, headline);
    headline["total_phase"] = run.phases.total_phase;
    headline["dynamical_phase"] = run.phases.dynamical_phase;
    headline["geometric_phase"] = run.phases.geometric_phase;

    if (c.field.kind() == "rotating-cone") {
        const auto& cone = std::get<FieldProtocol::RotatingCone>(c.field.spec());
        const double reference = std::numbers::pi * (1.0 - std::cos(cone.theta));
        headline["berry_reference"] = reference;
        if (c.berry_rel_tol) {
            const double rel = std::abs(std::abs(run.phases.geometric_phase) - reference) / reference;
            headline["berry_relative_error"] = rel;
            checks.le("berry_limit", rel, *c.berry_rel_tol, "| |geometric| - pi(1 - cos theta) | / pi(1 - cos theta)");
        }
    }

    CsvTable csv({"t", "re_mu3", "im_mu3", "re_mu1", "im_mu1", "dynamical_rate", "geometric_rate"});
    for (std::size_t i = 0; i < run.traj.times().size(); ++i) {
        const MuValues& mu = run.traj.samples()[i];
        csv.row({run.traj.times()[i], mu.mu3.real(), mu.mu3.imag(), mu.mu1.real(), mu.mu1.imag(),
                 run.phases.dynamical_rate[i], run.phases.geometric_rate[i]});
    }
    RunReport out;
    out.report["headline"] = headline;
    out.report["checks"] = checks.to_json();
    out.files.push_back({c.name + ".csv", csv.str()});
    out.pass = checks.all_pass();
    return out;
}

/// Random Hermitian n×n with the first `np` indices as P: worst distance
/// between bound_state_search roots and dense eigenvalues at which the
/// resolvent is regular. Returns {defect, regular eigenvalue count}.
inline std::pair<double, int> projection_exactness(std::uint64_t seed, int n = 8, int np = 2) {
    SeededRng rng(seed);
    ComplexMatrix a(n, n);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) a(i, j) = cplx{rng.normal(), rng.normal()};
    }
    const ComplexMatrix h = 0.5 * (a + a.adjoint());
    std::vector<Index> p(static_cast<std::size_t>(np));
    for (int i = 0; i < np; ++i) p[static_cast<std::size_t>(i)] = i;
    const PartitionedHamiltonian ph(h, p);
    const RealVector exact = hermitian_eigen(h, false).values;
    const RealVector poles = hermitian_eigen(ph.qhq(), false).values;
    const auto roots =
        bound_state_search(ph, {exact.minCoeff() - 1.0, exact.maxCoeff() + 1.0});
    double worst = 0.0;
    int regular = 0;
    for (Index k = 0; k < exact.size(); ++k) {
        if ((poles.array() - exact[k]).abs().minCoeff() < 1e-6) continue;
        ++regular;
        double best = std::numeric_limits<double>::infinity();
        for (double r : roots) best = std::min(best, std::abs(r - exact[k]));
        worst = std::max(worst, best);
    }
    for (double r : roots) {
        worst = std::max(worst, (exact.array() - r).abs().minCoeff());
    }
    return {worst, regular};
}

inline double widest(const ResonanceScan& s) {
    double w = 0.0;
    for (const auto& r : s.resonances) w = std::max(w, r.width);
    return w;
}

inline double narrowest(const ResonanceScan& s) {
    double w = std::numeric_limits<double>::infinity();
    for (const auto& r : s.resonances) w = std::min(w, r.width);
    return w;
}

inline RunReport run_resonance(const ScenarioConfig& c) {
    CheckList checks;
    json headline = json::object();
    const PresetModel pm = build_preset(c.preset, c.overrides);
    const FeshbachModel& model = pm.model;
    const EnergyWindow window = c.window.value_or(pm.window);
    ResonanceOptions opts;
    opts.eta_factor = c.eta_factor;
    opts.scan_points = c.scan_points;
    const ResonanceScan scan = resonance_search(model, window, opts);

    const auto [exactness, regular] = projection_exactness(c.seed);
    checks.le("projection_exactness", exactness, 1e-10,
              "random 8x8, |P| = 2, seed " + std::to_string(c.seed) + ", " + std::to_string(regular) + " regular roots");

    const ComplexMatrix heff = (*model.resolvent)({0.5 * (window.lo + window.hi), scan.eta});
    const double shape_defect =
        std::abs(static_cast<double>(heff.rows() - model.hamiltonian.p_dim())) +
        std::abs(static_cast<double>(heff.cols() - model.hamiltonian.p_dim()));
    checks.le("heff_structure", shape_defect, 0.0, "H_eff is |P| x |P|");

    {
        const double qmax = model.resolvent->q_levels().maxCoeff();
        const double e_far = qmax + std::max(1.0, model.band_max - model.band_min);
        const double d = e_far - qmax;
        const ComplexMatrix phq = model.hamiltonian.phq();
        const double phq_norm2 = spectral_norm(phq * phq.adjoint());
        const double lhs = spectral_norm((*model.resolvent)({e_far, 0.0}) - model.hamiltonian.php());
        checks.le("second_order_bound", lhs / (phq_norm2 / d), 1.0, "|H_eff(E) - PHP| / (|PHQ|^2 / d)");
    }

    if (pm.parameters.count("v")) {
        const double v = pm.parameters.at("v");
        auto width_at = [&](double vv) {
            ParameterSet ov = c.overrides;
            ov["v"] = vv;
            const PresetModel m = build_preset(c.preset, ov);
            const ResonanceScan s = resonance_search(m.model, window, opts);
            if (s.resonances.empty()) throw RangeError("width scaling: no resonance in the window at v = " + fmt(vv));
            return s.resonances.front().width;
        };
        const double g_lo = width_at(0.1 * v), g_hi = width_at(v);
        const double slope = std::log10(g_hi / g_lo);
        headline["width_scaling_slope"] = slope;
        checks.le("width_v2_scaling", std::abs(slope - 2.0), 0.05, "log-log slope of Gamma over v in [v/10, v], minus 2");
    } else {
        checks.skip("width_v2_scaling", "model has no continuum coupling parameter v");
    }

    if (c.compare_preset) {
        const PresetModel other = build_preset(*c.compare_preset);
        const ResonanceScan other_scan = resonance_search(other.model, other.window, opts);
        const bool self_narrow = c.preset == "feshbach-narrow-pair";
        const ResonanceScan& narrow = self_narrow ? scan : other_scan;
        const ResonanceScan& broad = self_narrow ? other_scan : scan;
        const double ratio = narrow.resonances.empty() || broad.resonances.empty()
                                 ? std::numeric_limits<double>::infinity()
                                 : widest(narrow) / narrowest(broad);
        headline["compare_preset"] = *c.compare_preset;
        headline["compare_widths"] = json::array();
        for (const auto& r : other_scan.resonances) headline["compare_widths"].push_back(r.width);
        checks.lt("feshbach_vs_shape", ratio, 1.0, "max Gamma (Feshbach pair) / min Gamma (shape)");
    } else {
        checks.skip("feshbach_vs_shape", "no compare_preset given");
    }

    checks.ge("resonance_found", static_cast<double>(scan.resonances.size()), 1.0, "resonances in the window");
    double min_width = std::numeric_limits<double>::infinity(), max_residual = 0.0;
    for (const auto& r : scan.resonances) {
        min_width = std::min(min_width, r.width);
        max_residual = std::max(max_residual, r.diagnostics.residual);
    }
    checks.ge("width_nonnegative", scan.resonances.empty() ? 0.0 : min_width, 0.0, "min Gamma");
    checks.le("self_consistency_residual", max_residual, 1e-10, "max |Re lambda(E_r) - E_r|");

    json resonances = json::array();
    CsvTable decay_csv([&] {
        std::vector<std::string> h{"t"};
        for (std::size_t k = 0; k < scan.resonances.size(); ++k) h.push_back("survival_" + std::to_string(k));
        return h;
    }());
    std::vector<DecayFit> fits;
    double worst_decay = 0.0;
    const double decay_tol = c.decay_rel_tol.value_or(pm.decay_tolerance);
    for (const auto& r : scan.resonances) {
        json e{{"energy", r.energy},
               {"width", r.width},
               {"shift", r.shift},
               {"php_eigenvalue", r.php_eigenvalue},
               {"branch", r.branch},
               {"residual", r.diagnostics.residual},
               {"eta", r.diagnostics.eta},
               {"width_at_2eta", r.diagnostics.width_at_2eta},
               {"level_spacing", r.diagnostics.level_spacing},
               {"warnings", r.diagnostics.warnings}};
        if (c.decay) {
            const StateVector phi = php_state_near(model, r.php_eigenvalue);
            DecayFit fit = decay_oracle(model, phi, pm.decay_time, static_cast<std::size_t>(pm.decay_steps));
            const double rel = std::abs(r.width - fit.rate) / fit.rate;
            worst_decay = std::max(worst_decay, rel);
            e["decay_rate"] = fit.rate;
            e["decay_relative_difference"] = rel;
            e["decay_fit_residual"] = fit.residual;
            e["decay_fit_window"] = {fit.window_start, fit.window_end};
            e["recurrence_time"] = fit.recurrence_time;
            e["non_exponential"] = fit.non_exponential;
            e["revival_detected"] = fit.revival_detected;
            fits.push_back(std::move(fit));
        }
        resonances.push_back(std::move(e));
    }
    if (c.decay) {
        checks.le("width_vs_decay", scan.resonances.empty() ? std::numeric_limits<double>::infinity() : worst_decay,
                  decay_tol, "max |Gamma - decay rate| / decay rate");
        if (!fits.empty()) {
            for (std::size_t s = 0; s < fits.front().times.size(); ++s) {
                std::vector<double> row{fits.front().times[s]};
                for (const auto& f : fits) row.push_back(f.survival[s]);
                decay_csv.row(row);
            }
        }
    } else {
        checks.skip("width_vs_decay", "decay oracle disabled");
    }

    headline["preset"] = c.preset;
    headline["window"] = {window.lo, window.hi};
    headline["eta"] = scan.eta;
    headline["level_spacing"] = scan.level_spacing;
    headline["resonances"] = resonances;
    if (model.kind == FeshbachModel::Kind::grid_1d) {
        headline["well_bottom"] = model.well_bottom;
        headline["barrier_top"] = model.barrier_top;
        bool inside = !scan.resonances.empty();
        for (const auto& r : scan.resonances) inside = inside && r.energy > model.well_bottom && r.energy < model.barrier_top;
        checks.ge("position_in_well", inside ? 1.0 : 0.0, 1.0, "well bottom < E_r < barrier top");
    } else {
        checks.skip("position_in_well", "not a configuration-space model");
    }

    const Index np = model.hamiltonian.p_dim();
    std::vector<std::string> header{"E"};
    for (Index k = 0; k < np; ++k) {
        header.push_back("re_lambda_" + std::to_string(k));
        header.push_back("im_lambda_" + std::to_string(k));
        header.push_back("gamma_" + std::to_string(k));
    }
    CsvTable csv(header);
    for (const auto& pt : scan.points) {
        std::vector<double> row{pt.energy};
        for (const cplx& l : pt.eigenvalues) {
            row.push_back(l.real());
            row.push_back(l.imag());
            row.push_back(-2.0 * l.imag());
        }
        csv.row(row);
    }

    RunReport out;
    out.report["headline"] = headline;
    out.report["checks"] = checks.to_json();
    out.files.push_back({c.name + ".csv", csv.str()});
    if (c.decay) out.files.push_back({c.name + ".decay.csv", decay_csv.str()});
    out.pass = checks.all_pass();
    return out;
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline RunReport run_varcheck(const ScenarioConfig& c) {
    CheckList checks;
    json headline = json::object();
    const SpinRepresentation rep = SpinRepresentation::from_j(c.spin_j);
    const MuTrajectory traj = integrate_mu(c.field, c.span, c.ode, {c.samples, c.restart_threshold});
    const MatrixFunction h = spin_hamiltonian(c.field, rep);
    const MatrixFunction u = [&](double t) { return reconstruct_evolution(traj, rep, t); };
    const double t0 = c.span.begin, t_end = c.span.end;
    const Eigen::Index dim = rep.dim();
    const ComplexMatrix id = ComplexMatrix::Identity(dim, dim);
    double endpoint = 0.0;

    // Identity with a frozen-Hamiltonian trial exp(−iH(t0)(t − t0)).
    const ComplexMatrix h0 = h(t0);
    const MatrixFunction frozen = [&](double t) { return ComplexMatrix(mat_exp(-I_unit * (t - t0) * h0)); };
    const MatrixFunction frozen_dot = [&](double t) { return ComplexMatrix(-I_unit * h0 * frozen(t)); };
    CsvTable identity_csv({"intervals", "spacing", "residual"});
    std::vector<double> residuals;
    for (long long n : c.grid_intervals) {
        const auto times = effham::detail::linspace(t0, t_end, static_cast<std::size_t>(n) + 1);
        const SampledEvolution exact = sample_evolution(u, times);
        const TrialEvolution trial = TrialEvolution::analytic(times, frozen, frozen_dot, "frozen");
        const IdentityCheck ic = identity_check(exact, trial, h, t_end);
        residuals.push_back(ic.residual);
        identity_csv.row({static_cast<double>(n), ic.spacing, ic.residual});
        endpoint = std::max(endpoint, max_abs(variational_correct(trial, h, t0).final_value() - id));
    }
    double worst_ratio = 0.0;
    json ratios = json::array();
    for (std::size_t i = 1; i < residuals.size(); ++i) {
        const double ratio = residuals[i - 1] / residuals[i];
        ratios.push_back(ratio);
        worst_ratio = std::max(worst_ratio, std::abs(ratio / 16.0 - 1.0));
    }
    headline["identity_residuals"] = residuals;
    headline["identity_ratios"] = ratios;
    checks.le("identity_fourth_order", worst_ratio, 0.2, "max |residual ratio / 16 - 1| per halving");

    // Second-order improvement with trials U(t)·exp(−iε(t − t0)/(T − t0)·K).
    const ComplexMatrix k = random_unit_hermitian(c.seed, dim);
    const double len = t_end - t0;
    const auto times = effham::detail::linspace(t0, t_end, c.samples);
    const SampledEvolution exact = sample_evolution(u, times);
    CsvTable slope_csv({"epsilon", "trial_error", "variational_error"});
    std::vector<double> trial_errors, var_errors;
    for (double eps : c.epsilons) {
        const MatrixFunction ut = [&](double t) {
            return ComplexMatrix(u(t) * mat_exp(-I_unit * (eps * (t - t0) / len) * k));
        };
        const MatrixFunction ut_dot = [&](double t) {
            const ComplexMatrix ue = u(t), e = mat_exp(-I_unit * (eps * (t - t0) / len) * k);
            return ComplexMatrix(-I_unit * h(t) * ue * e - I_unit * (eps / len) * ue * k * e);
        };
        const TrialEvolution trial = TrialEvolution::analytic(times, ut, ut_dot, "perturbed");
        const VariationalResult vr = variational_correct(trial, h, t_end, &exact);
        trial_errors.push_back(vr.trial_error.back());
        var_errors.push_back(vr.var_error.back());
        slope_csv.row({eps, vr.trial_error.back(), vr.var_error.back()});
        endpoint = std::max(endpoint, max_abs(variational_correct(trial, h, t0).final_value() - id));
    }
    const double slope = loglog_slope(c.epsilons, var_errors);
    headline["variational_slope"] = slope;
    headline["trial_slope"] = loglog_slope(c.epsilons, trial_errors);
    headline["trial_errors"] = trial_errors;
    headline["variational_errors"] = var_errors;
    checks.le("second_order_improvement", std::abs(slope - 2.0), 0.1, "|log-log slope of |U_var - U| vs epsilon - 2|");
    checks.le("endpoint_identity", endpoint, 0.0, "max |U_var(t0) - I|");

    RunReport out;
    out.report["headline"] = headline;
    out.report["checks"] = checks.to_json();
    out.files.push_back({c.name + ".identity.csv", identity_csv.str()});
    out.files.push_back({c.name + ".slope.csv", slope_csv.str()});
    out.pass = checks.all_pass();
    return out;
}

}  // namespace detail

/// Runs one parsed scenario. Engine failures propagate as effham::Error.
inline RunReport run(const ScenarioConfig& c) {
    const auto start = std::chrono::steady_clock::now();
    RunReport out;
    if (c.engine == "propagate") out = detail::run_propagate(c);
    else if (c.engine == "phase") out = detail::run_phase(c);
    else if (c.engine == "resonance") out = detail::run_resonance(c);
    else out = detail::run_varcheck(c);

    out.report["scenario"] = c.echo;
    out.report["engine"] = c.engine;
    // Round trip: the echoed scenario must parse back to itself.
    const json reparsed = json::parse(out.report["scenario"].dump());
    const ScenarioConfig again = parse_config(reparsed, c.engine, c.name);
    const bool same = again.echo == c.echo;
    json checks = out.report["checks"];
    checks.push_back({{"name", "report_roundtrip"},
                      {"value", same ? 0.0 : 1.0},
                      {"threshold", 0.0},
                      {"comparison", "<="},
                      {"status", same ? "pass" : "fail"},
                      {"pass", same},
                      {"note", "scenario echo re-parses to an identical config"}});
    out.report["checks"] = checks;
    out.pass = out.pass && same;
    out.report["status"] = out.pass ? "pass" : "fail";
    json outputs = json::array();
    for (const auto& f : out.files) outputs.push_back(f.first);
    out.report["outputs"] = outputs;
    out.report["timing"] = {
        {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
    return out;
}

/// Reads a config file (JSON) and parses it for `engine`.
inline ScenarioConfig load_config(const std::filesystem::path& path, const std::string& engine) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open config file");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j, engine, path.stem().string());
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io", "cannot write " + path.string());
    out << content;
}

inline void write_outputs(const RunReport& r, const std::string& name, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [file, content] : r.files) write_text(dir / file, content);
    write_text(dir / (name + ".report.json"), r.report.dump(2) + "\n");
}

/// Sweep concurrency: EFFHAM_THREADS if set to a positive integer, else the
/// hardware concurrency.
inline unsigned sweep_threads() {
    if (const char* env = std::getenv("EFFHAM_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

struct SweepItem {
    std::string config_path;
    std::string name;
    bool pass = false;
    std::string error_category;
    std::string error;
    json report;
};

/// Runs every config concurrently (bounded by `threads`) and returns the
/// items in config order.
inline std::vector<SweepItem> run_sweep(const std::vector<ScenarioConfig>& configs, const std::vector<std::string>& paths,
                                        const std::filesystem::path& out_dir, unsigned threads) {
    std::vector<SweepItem> items(configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            SweepItem& item = items[i];
            item.config_path = paths[i];
            item.name = configs[i].name;
            try {
                const RunReport r = run(configs[i]);
                write_outputs(r, configs[i].name, out_dir);
                item.pass = r.pass;
                item.report = r.report;
            } catch (const Error& e) {
                item.error_category = e.category();
                item.error = e.what();
            } catch (const std::exception& e) {
                item.error_category = "internal";
                item.error = e.what();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(configs.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return items;
}

inline void print_presets(std::ostream& os) {
    for (const auto& p : list_presets()) {
        os << p.name << "  " << p.description << "\n";
        os << "   ";
        for (const auto& [k, v] : p.defaults) os << " " << k << "=" << fmt(v);
        os << "\n";
    }
}

}  // namespace effham::cli
