#pragma once

// Closed-form policies: greedy battery allocation, radical (serve all),
// conservative (rate capped by the grid budget) and their per-slot mixture,
// plus the rate-only problem obtained by forcing the greedy battery draw.

#include "ehmdp/mdp.hpp"
#include "ehmdp/model.hpp"

#include <algorithm>
#include <functional>
#include <string>

namespace ehmdp {

enum class HeuristicKind { radical, conservative, mixed };

inline HeuristicKind parse_heuristic(const std::string& s) {
    if (s == "radical")
        return HeuristicKind::radical;
    if (s == "conservative")
        return HeuristicKind::conservative;
    if (s == "mixed")
        return HeuristicKind::mixed;
    throw ValidationError("unknown heuristic policy '" + s + "'");
}

inline const char* to_string(HeuristicKind k) {
    switch (k) {
    case HeuristicKind::radical:
        return "radical";
    case HeuristicKind::conservative:
        return "conservative";
    default:
        return "mixed";
    }
}

/// Battery quanta drawn by the greedy allocator for rate r: the largest
/// w with w*delta_e <= e_b and w*delta_e/tau <= P(x, r).
inline int greedy_battery(const Model& model, const SystemState& x, int r) {
    if (r < 0 || r > x.q)
        throw ContractViolation("greedy_battery: rate must satisfy 0 <= r <= q");
    return model.draw_cap(x, r);
}

inline Action radical_action(const Model& model, const SystemState& x) {
    return {x.q, greedy_battery(model, x, x.q)};
}

/// Rate min(q, P^-1(p_bar + e_b/tau)) with the greedy battery draw. The
/// per-slot grid power is then at most p_bar + delta_e/tau.
inline Action conservative_action(const Model& model, const SystemState& x) {
    const auto& p = model.params();
    const double budget = p.p_bar + p.power_of_units(x.eb);
    const int r = std::min(x.q, power_inverse(p, model.gain(x), budget));
    return {r, greedy_battery(model, x, r)};
}

inline Action heuristic_action(HeuristicKind kind, const Model& model, const SystemState& x) {
    return kind == HeuristicKind::conservative ? conservative_action(model, x)
                                               : radical_action(model, x);
}

/// Tabulates a pure heuristic over the enumerated state space.
inline DeterministicPolicy tabulate(const Model& model, const std::function<Action(const SystemState&)>& rule) {
    const StateSpace space(model);
    DeterministicPolicy pol;
    pol.actions.resize(space.size());
    for (std::size_t i = 0; i < space.size(); ++i)
        pol.actions[i] = rule(space.state(i));
    return pol;
}

inline DeterministicPolicy radical_policy(const Model& model) {
    return tabulate(model, [&](const SystemState& x) { return radical_action(model, x); });
}

inline DeterministicPolicy conservative_policy(const Model& model) {
    return tabulate(model, [&](const SystemState& x) { return conservative_action(model, x); });
}

/// Radical with probability xi, conservative otherwise, at every slot.
inline MixedPolicy mixed_heuristic_policy(const Model& model, double xi) {
    if (!(xi >= 0.0 && xi <= 1.0))
        throw ContractViolation("mixed policy: xi must lie in [0, 1]");
    return {radical_policy(model), conservative_policy(model), xi};
}

/// xi with xi * g_radical + (1 - xi) * g_conservative = p_bar, clamped to [0, 1].
inline double interpolate_xi(double g_radical, double g_conservative, double p_bar) {
    if (g_radical == g_conservative)
        return g_radical <= p_bar ? 1.0 : 0.0;
    return std::clamp((p_bar - g_conservative) / (g_radical - g_conservative), 0.0, 1.0);
}

/// Rate-only problem: the battery draw is forced to the greedy value and RVI
/// optimizes r alone. The returned policy carries the reconstructed (r, w).
inline RviResult solve_reduced_rate_mdp(double beta, const Model& model, SolverConfig cfg = {}) {
    const CompiledMdp reduced(model, ActionSet::greedy_battery);
    cfg.beta = beta;
    return relative_value_iteration(reduced, cfg);
}

} // namespace ehmdp
