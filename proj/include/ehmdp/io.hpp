#pragma once

// JSON run configuration (defaults, overrides, validation) and the CSV/JSON
// writers used by the command-line tool.
//
// Config layout:
//   model       ModelParams fields
//   channel, arrival, harvest
//               {"values": [...], "transition": [[...], ...]}
//               {"values": [...], "probabilities": [...]}       (i.i.d.)
//               {"rayleigh": {"mean": m, "levels": n}}          (channel only)
//   solver      beta, epsilon, max_iters, reference_state, alpha, aperiodicity
//   constrained beta_init, search, nu, k_tolerance, beta_rel_tol, sa_scale, sa_gap, max_outer_iters
//   simulation  n_slots, seed, warmup (null = 1%), batches, record_trace
//   sweep       kind (arrival | budget | channel), values, policy, levels
//   verify      alphas, beta_grid, beta_large, beta_small, tolerance

#include "ehmdp/constrained.hpp"
#include "ehmdp/errors.hpp"
#include "ehmdp/mdp.hpp"
#include "ehmdp/model.hpp"
#include "ehmdp/simulation.hpp"
#include "ehmdp/verifier.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace ehmdp {

using json = nlohmann::ordered_json;

inline json default_config() {
    return json::parse(R"({
  "model": {"tau": 1.0, "bits_per_packet": 1.0, "n_uses": 5.0, "rho": 1.0, "sigma2": 1.0,
            "circuit_c": 0.0, "e_max": 0.0, "p_bar": 0.0, "delta_e": 1.0, "q_max": 0,
            "restrict_to_required": true},
  "solver": {"beta": 1.0, "epsilon": 1e-9, "max_iters": 1000000, "reference_state": 0,
             "alpha": 0.99, "aperiodicity": 0.5},
  "constrained": {"beta_init": 10000.0, "search": "bisection", "nu": 0.0, "k_tolerance": 0.0,
                  "beta_rel_tol": 1e-6, "sa_scale": 1.0, "sa_gap": 1e-3, "max_outer_iters": 20000},
  "simulation": {"n_slots": 100000, "seed": 1, "warmup": null, "batches": 50, "record_trace": false},
  "sweep": {"kind": "arrival", "values": [], "policy": "radical", "levels": 8},
  "verify": {"alphas": [0.9, 0.99, 0.999], "beta_grid": [0.01, 0.1, 1.0, 10.0, 100.0],
             "beta_large": 10000.0, "beta_small": 1e-6, "tolerance": 1e-7}
})");
}

namespace detail {

/// Overlays `patch` onto `base`; objects merge recursively, except that
/// chain blocks are replaced whole because their forms are exclusive.
inline void overlay(json& base, const json& patch, const std::string& path) {
    for (const auto& [key, value] : patch.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        const bool chain = path.empty() && (key == "channel" || key == "arrival" || key == "harvest");
        if (!chain && !base.contains(key))
            throw ValidationError("config: unknown key '" + here + "'");
        if (!chain && base[key].is_object()) {
            if (!value.is_object())
                throw ValidationError("config: '" + here + "' must be an object");
            overlay(base[key], value, here);
        } else {
            base[key] = value;
        }
    }
}

inline json parse_literal(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return json(text);
    }
}

template <class T>
T get(const json& j, const char* key, const std::string& block) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("config: '" + block + "." + key + "' is missing or has the wrong type");
    }
}

inline MarkovChainSpec parse_chain(const json& j, const std::string& name) {
    if (!j.is_object())
        throw ValidationError("config: chain '" + name + "' must be an object");
    MarkovChainSpec c;
    if (j.contains("rayleigh")) {
        if (name != "channel")
            throw ValidationError("config: only the channel may use the rayleigh form");
        const auto& r = j["rayleigh"];
        return discretize_rayleigh(get<double>(r, "mean", name + ".rayleigh"),
                                   get<std::size_t>(r, "levels", name + ".rayleigh"));
    }
    c.values = get<std::vector<double>>(j, "values", name);
    if (j.contains("transition") == j.contains("probabilities"))
        throw ValidationError("config: chain '" + name + "' needs exactly one of transition or probabilities");
    if (j.contains("transition")) {
        c.transition = get<std::vector<std::vector<double>>>(j, "transition", name);
    } else {
        const auto probs = get<std::vector<double>>(j, "probabilities", name);
        if (probs.size() != c.values.size())
            throw ValidationError("config: chain '" + name + "' probabilities and values differ in length");
        c.transition.assign(c.values.size(), probs);
    }
    c.validate(name);
    return c;
}

inline json chain_json(const MarkovChainSpec& c) {
    return json{{"values", c.values}, {"transition", c.transition}};
}

} // namespace detail

/// Resolved run configuration: defaults, then the file, then --set overrides.
struct RunConfig {
    json doc;

    /// `overrides` are "dotted.key=value" strings; the key must already exist
    /// after merging and the value is parsed as JSON, falling back to a string.
    static RunConfig from_json(const json& user, const std::vector<std::string>& overrides = {}) {
        RunConfig rc;
        rc.doc = default_config();
        if (!user.is_object())
            throw ValidationError("config: top level must be an object");
        detail::overlay(rc.doc, user, "");
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0)
                throw ValidationError("override '" + kv + "' is not key=value");
            const std::string key = kv.substr(0, eq);
            std::string pointer = "/" + key;
            std::replace(pointer.begin(), pointer.end(), '.', '/');
            const json::json_pointer ptr(pointer);
            if (!rc.doc.contains(ptr))
                throw ValidationError("override '" + key + "' does not name an existing config key");
            rc.doc[ptr] = detail::parse_literal(kv.substr(eq + 1));
        }
        for (const char* c : {"channel", "arrival", "harvest"})
            if (!rc.doc.contains(c))
                throw ValidationError(std::string("config: missing chain '") + c + "'");
        rc.model(); // validates
        return rc;
    }

    static RunConfig from_file(const std::string& path, const std::vector<std::string>& overrides = {}) {
        std::ifstream in(path);
        if (!in)
            throw ValidationError("config: cannot open '" + path + "'");
        json user;
        try {
            user = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ValidationError("config: '" + path + "' is not valid JSON: " + e.what());
        }
        return from_json(user, overrides);
    }

    ModelParams params() const {
        const auto& m = doc["model"];
        ModelParams p;
        p.tau = detail::get<double>(m, "tau", "model");
        p.bits_per_packet = detail::get<double>(m, "bits_per_packet", "model");
        p.n_uses = detail::get<double>(m, "n_uses", "model");
        p.rho = detail::get<double>(m, "rho", "model");
        p.sigma2 = detail::get<double>(m, "sigma2", "model");
        p.circuit_c = detail::get<double>(m, "circuit_c", "model");
        p.e_max = detail::get<double>(m, "e_max", "model");
        p.p_bar = detail::get<double>(m, "p_bar", "model");
        p.delta_e = detail::get<double>(m, "delta_e", "model");
        p.q_max = detail::get<int>(m, "q_max", "model");
        p.restrict_to_required = detail::get<bool>(m, "restrict_to_required", "model");
        return p;
    }

    ModelTemplate model_template() const {
        return {params(), detail::parse_chain(doc["channel"], "channel"),
                detail::parse_chain(doc["arrival"], "arrival"), detail::parse_chain(doc["harvest"], "harvest")};
    }

    Model model() const { return model_template().build(); }

    SolverConfig solver() const {
        const auto& s = doc["solver"];
        SolverConfig c;
        c.beta = detail::get<double>(s, "beta", "solver");
        c.epsilon = detail::get<double>(s, "epsilon", "solver");
        c.max_iters = detail::get<std::size_t>(s, "max_iters", "solver");
        c.reference_state = detail::get<std::size_t>(s, "reference_state", "solver");
        c.alpha = detail::get<double>(s, "alpha", "solver");
        c.aperiodicity = detail::get<double>(s, "aperiodicity", "solver");
        return c;
    }

    ConstrainedSolverConfig constrained() const {
        const auto& s = doc["constrained"];
        ConstrainedSolverConfig c;
        c.beta_init = detail::get<double>(s, "beta_init", "constrained");
        const auto mode = detail::get<std::string>(s, "search", "constrained");
        if (mode == "bisection")
            c.search_mode = SearchMode::bisection;
        else if (mode == "stochastic_approximation")
            c.search_mode = SearchMode::stochastic_approximation;
        else
            throw ValidationError("config: constrained.search must be bisection or stochastic_approximation");
        c.nu = detail::get<double>(s, "nu", "constrained");
        c.k_tolerance = detail::get<double>(s, "k_tolerance", "constrained");
        c.beta_rel_tol = detail::get<double>(s, "beta_rel_tol", "constrained");
        c.sa_scale = detail::get<double>(s, "sa_scale", "constrained");
        c.sa_gap = detail::get<double>(s, "sa_gap", "constrained");
        c.max_outer_iters = detail::get<std::size_t>(s, "max_outer_iters", "constrained");
        c.inner = solver();
        return c;
    }

    SimConfig simulation() const {
        const auto& s = doc["simulation"];
        SimConfig c;
        c.n_slots = detail::get<std::size_t>(s, "n_slots", "simulation");
        c.seed = detail::get<std::uint64_t>(s, "seed", "simulation");
        if (!s.at("warmup").is_null())
            c.warmup = detail::get<std::size_t>(s, "warmup", "simulation");
        c.batches = detail::get<std::size_t>(s, "batches", "simulation");
        c.record_trace = detail::get<bool>(s, "record_trace", "simulation");
        c.validate();
        return c;
    }

    VerifyConfig verify() const {
        const auto& s = doc["verify"];
        VerifyConfig c;
        c.alphas = detail::get<std::vector<double>>(s, "alphas", "verify");
        c.beta_grid = detail::get<std::vector<double>>(s, "beta_grid", "verify");
        c.beta_large = detail::get<double>(s, "beta_large", "verify");
        c.beta_small = detail::get<double>(s, "beta_small", "verify");
        c.tolerance = detail::get<double>(s, "tolerance", "verify");
        return c;
    }

    void set_seed(std::uint64_t seed) { doc["simulation"]["seed"] = seed; }
    void set_beta(double beta) { doc["solver"]["beta"] = beta; }
};

// ---------------------------------------------------------------------------
// Writers

/// Shortest representation that round-trips, independent of locale.
inline std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header) { row_strings(header); }

    CsvWriter& cell(double v) { return put(fmt(v)); }
    CsvWriter& cell(long long v) { return put(std::to_string(v)); }
    CsvWriter& cell(std::size_t v) { return put(std::to_string(v)); }
    CsvWriter& cell(int v) { return put(std::to_string(v)); }
    CsvWriter& cell(const std::string& v) { return put(v); }
    CsvWriter& cell(const char* v) { return put(v); }

    void end_row() {
        out_ << '\n';
        first_ = true;
    }

    std::string str() const { return out_.str(); }

private:
    CsvWriter& put(const std::string& s) {
        if (!first_)
            out_ << ',';
        out_ << s;
        first_ = false;
        return *this;
    }

    void row_strings(const std::vector<std::string>& cells) {
        for (const auto& c : cells)
            put(c);
        end_row();
    }

    std::ostringstream out_;
    bool first_ = true;
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ValidationError("cannot write '" + path + "'");
    out << text;
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::string policy_csv(const Policy& policy, const Model& model) {
    const StateSpace space(model);
    const auto* mixed = std::get_if<MixedPolicy>(&policy);
    std::vector<std::string> header{"index", "q", "h", "a", "eb", "e", "r", "w"};
    if (mixed)
        header.insert(header.end(), {"r_minus", "w_minus"});
    CsvWriter csv(header);
    const auto& plus = mixed ? mixed->plus : std::get<DeterministicPolicy>(policy);
    for (std::size_t i = 0; i < space.size(); ++i) {
        const SystemState x = space.state(i);
        csv.cell(i).cell(x.q).cell(x.h).cell(x.a).cell(x.eb).cell(x.e);
        csv.cell(plus.actions[i].r).cell(plus.actions[i].w);
        if (mixed)
            csv.cell(mixed->minus.actions[i].r).cell(mixed->minus.actions[i].w);
        csv.end_row();
    }
    return csv.str();
}

inline json evaluation_json(const PolicyEvaluation& ev) {
    return json{{"gain_j", ev.gain_j},
                {"mean_queue_b", ev.mean_queue_b},
                {"mean_grid_k", ev.mean_grid_k},
                {"overflow_probability", ev.overflow_probability},
                {"recurrent_states", std::count(ev.recurrent.begin(), ev.recurrent.end(), 1)}};
}

inline json report_json(const CertificateReport& r, const StateSpace& space) {
    json j{{"name", r.name}, {"status", to_string(r.status)}, {"hard", r.hard},
           {"worst_violation", r.worst_violation}, {"checked", r.checked}};
    if (r.witness_state) {
        const SystemState x = space.state(*r.witness_state);
        j["witness_state"] = json{{"index", *r.witness_state}, {"q", x.q}, {"h", x.h},
                                  {"a", x.a}, {"eb", x.eb}, {"e", x.e}};
    }
    if (r.witness_action)
        j["witness_action"] = json{{"r", r.witness_action->r}, {"w", r.witness_action->w}};
    if (!r.notes.empty())
        j["notes"] = r.notes;
    json metrics = json::object();
    for (const auto& [k, v] : r.metrics)
        metrics[k] = v;
    j["metrics"] = metrics;
    return j;
}

inline json sim_json(const SimResult& r) {
    return json{{"mean_queue", r.mean_queue},
                {"mean_queue_se", r.mean_queue_se},
                {"mean_grid_power", r.mean_grid_power},
                {"mean_grid_power_se", r.mean_grid_power_se},
                {"max_grid_power", r.max_grid_power},
                {"overflow_fraction", r.overflow_fraction},
                {"grid_energy", r.grid_energy},
                {"spilled_energy", r.spilled_energy},
                {"dropped_packets", r.dropped_packets},
                {"plus_fraction", r.plus_fraction},
                {"measured_slots", r.measured_slots}};
}

} // namespace ehmdp
