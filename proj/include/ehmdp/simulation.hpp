#pragma once

// Seeded Monte-Carlo simulation of stationary policies, the channel
// discretization helper and the parameter sweeps built on top of them.

#include "ehmdp/errors.hpp"
#include "ehmdp/heuristics.hpp"
#include "ehmdp/mdp.hpp"
#include "ehmdp/model.hpp"
#include "ehmdp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ehmdp {

struct SimConfig {
    std::size_t n_slots = 100'000;
    std::uint64_t seed = 1;
    std::optional<std::size_t> warmup; ///< defaults to 1% of n_slots
    bool record_trace = false;
    std::size_t batches = 50;          ///< batch count for standard errors

    std::size_t resolved_warmup() const { return warmup.value_or(n_slots / 100); }

    void validate() const {
        if (n_slots == 0 || resolved_warmup() >= n_slots)
            throw ValidationError("simulation: n_slots must exceed warmup");
        if (batches < 2 || batches > n_slots - resolved_warmup())
            throw ValidationError("simulation: need at least two batches of one slot");
    }
};

struct SlotRecord {
    std::size_t slot = 0;
    SystemState state;
    Action action;
    double required_power = 0.0;
    double grid_power = 0.0;
    int spilled = 0;  ///< battery quanta lost at capacity
    int dropped = 0;  ///< packets lost at q_max
    bool used_plus = true;
};

struct SimResult {
    double mean_queue = 0.0;
    double mean_grid_power = 0.0;
    double overflow_fraction = 0.0;
    double mean_queue_se = 0.0;      ///< batch-means standard error
    double mean_grid_power_se = 0.0; ///< batch-means standard error
    double max_grid_power = 0.0;
    double grid_energy = 0.0;        ///< sum of grid power times tau
    double spilled_energy = 0.0;
    long long dropped_packets = 0;
    double plus_fraction = 1.0;      ///< share of slots that used the plus rule
    std::size_t measured_slots = 0;
    std::vector<SlotRecord> trace;
};

/// Policy as a per-state rule, optionally randomized each slot between two rules.
struct SimPolicy {
    using Rule = std::function<Action(const SystemState&)>;
    Rule plus;
    Rule minus;
    double xi = 1.0;
    bool mixed = false;

    static SimPolicy from_table(const DeterministicPolicy& pol, const Model& model) {
        const StateSpace space(model);
        if (pol.actions.size() != space.size())
            throw ContractViolation("simulation: policy table size does not match the model");
        auto table = std::make_shared<DeterministicPolicy>(pol);
        SimPolicy p;
        p.plus = [table, space](const SystemState& x) { return table->actions[space.index(x)]; };
        return p;
    }

    static SimPolicy from(const Policy& pol, const Model& model) {
        if (const auto* d = std::get_if<DeterministicPolicy>(&pol))
            return from_table(*d, model);
        const auto& m = std::get<MixedPolicy>(pol);
        SimPolicy p = from_table(m.plus, model);
        p.minus = from_table(m.minus, model).plus;
        p.xi = m.xi;
        p.mixed = true;
        return p;
    }

    /// Closed-form heuristic; for `mixed` the plus rule is radical with probability xi.
    static SimPolicy heuristic(HeuristicKind kind, const Model& model, double xi = 1.0) {
        SimPolicy p;
        const Model* m = &model;
        if (kind == HeuristicKind::conservative) {
            p.plus = [m](const SystemState& x) { return conservative_action(*m, x); };
            return p;
        }
        p.plus = [m](const SystemState& x) { return radical_action(*m, x); };
        if (kind == HeuristicKind::mixed) {
            if (!(xi >= 0.0 && xi <= 1.0))
                throw ContractViolation("mixed policy: xi must lie in [0, 1]");
            p.minus = [m](const SystemState& x) { return conservative_action(*m, x); };
            p.xi = xi;
            p.mixed = true;
        }
        return p;
    }
};

namespace detail {

inline void mean_and_se(const std::vector<double>& batch_sums, std::size_t measured, std::size_t batches,
                        double& mean, double& se) {
    // Batches of equal size; the remainder is folded into the last one.
    const std::size_t base = measured / batches;
    std::vector<double> means(batches);
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t len = b + 1 == batches ? measured - base * (batches - 1) : base;
        means[b] = batch_sums[b] / static_cast<double>(len);
        total += batch_sums[b];
    }
    mean = total / static_cast<double>(measured);
    double avg = 0.0;
    for (double m : means)
        avg += m;
    avg /= static_cast<double>(batches);
    double var = 0.0;
    for (double m : means)
        var += (m - avg) * (m - avg);
    var /= static_cast<double>(batches - 1);
    se = std::sqrt(var / static_cast<double>(batches));
}

} // namespace detail

/// Simulates `policy` from q = 0, e_b = 0 with the exogenous chains started
/// from their stationary laws. Channel, arrival, harvest and the mixing coin
/// use separate random streams, so two policies run with one seed see the
/// same exogenous sample path.
inline SimResult run_simulation(const SimPolicy& policy, const Model& model, const SimConfig& cfg) {
    cfg.validate();
    RandomStream ch(cfg.seed, StreamId::channel);
    RandomStream ar(cfg.seed, StreamId::arrival);
    RandomStream hv(cfg.seed, StreamId::harvest);
    RandomStream coin(cfg.seed, StreamId::policy_coin);

    SystemState x;
    x.h = ch.categorical(model.channel().stationary());
    x.a = ar.categorical(model.arrival().stationary());
    x.e = hv.categorical(model.harvest().stationary());

    const std::size_t warm = cfg.resolved_warmup();
    const std::size_t measured = cfg.n_slots - warm;
    const std::size_t base = measured / cfg.batches;
    std::vector<double> qsum(cfg.batches, 0.0), gsum(cfg.batches, 0.0);
    SimResult res;
    res.measured_slots = measured;
    std::size_t overflow_slots = 0, plus_slots = 0;
    const double tau = model.params().tau;
    if (cfg.record_trace)
        res.trace.reserve(cfg.n_slots);

    for (std::size_t t = 0; t < cfg.n_slots; ++t) {
        bool use_plus = true;
        if (policy.mixed)
            use_plus = coin.uniform() < policy.xi;
        const Action act = use_plus ? policy.plus(x) : policy.minus(x);
        if (!model.feasible(x, act)) {
            const StateSpace space(model, std::numeric_limits<std::size_t>::max());
            throw UndefinedAction("policy gives infeasible action (" + std::to_string(act.r) + ", " +
                                  std::to_string(act.w) + ") at state index " +
                                  std::to_string(space.index(x)) + " (q=" + std::to_string(x.q) +
                                  ", e_b=" + std::to_string(x.eb) + ")");
        }
        const double required = model.required_power(x, act.r);
        const double grid = grid_power(required, model.battery_power(act));
        const auto [qs, bs] = model.step(x, act);
        if (t >= warm) {
            const std::size_t k = t - warm;
            const std::size_t b = std::min(base > 0 ? k / base : 0, cfg.batches - 1);
            qsum[b] += x.q;
            gsum[b] += grid;
            res.grid_energy += grid * tau;
            res.max_grid_power = std::max(res.max_grid_power, grid);
            res.spilled_energy += model.params().energy_of_units(bs.spilled);
            res.dropped_packets += qs.dropped;
            if (qs.dropped > 0)
                ++overflow_slots;
            if (use_plus)
                ++plus_slots;
        }
        if (cfg.record_trace)
            res.trace.push_back({t, x, act, required, grid, bs.spilled, qs.dropped, use_plus});
        x.q = qs.next;
        x.eb = bs.next;
        x.h = ch.categorical(model.channel().transition[x.h]);
        x.a = ar.categorical(model.arrival().transition[x.a]);
        x.e = hv.categorical(model.harvest().transition[x.e]);
    }
    detail::mean_and_se(qsum, measured, cfg.batches, res.mean_queue, res.mean_queue_se);
    detail::mean_and_se(gsum, measured, cfg.batches, res.mean_grid_power, res.mean_grid_power_se);
    res.overflow_fraction = static_cast<double>(overflow_slots) / static_cast<double>(measured);
    res.plus_fraction = static_cast<double>(plus_slots) / static_cast<double>(measured);
    return res;
}

inline SimResult run_simulation(const Policy& policy, const Model& model, const SimConfig& cfg) {
    return run_simulation(SimPolicy::from(policy, model), model, cfg);
}

/// Equiprobable quantization of an exponential power gain with the given
/// mean: bin k covers quantiles [k/n, (k+1)/n) and its level is the
/// conditional mean of the gain in that bin. The chain is i.i.d.
inline MarkovChainSpec discretize_rayleigh(double mean_gain, std::size_t n_levels) {
    if (!(mean_gain > 0.0))
        throw DomainError("discretize_rayleigh: mean gain must be positive");
    if (n_levels == 0)
        throw DomainError("discretize_rayleigh: need at least one level");
    const double n = static_cast<double>(n_levels);
    std::vector<double> values(n_levels);
    for (std::size_t k = 0; k < n_levels; ++k) {
        const double s0 = 1.0 - static_cast<double>(k) / n;       // survival at the lower edge
        const double s1 = 1.0 - static_cast<double>(k + 1) / n;   // survival at the upper edge
        const double a = -mean_gain * std::log(s0);
        const double upper = k + 1 == n_levels ? 0.0 : (-mean_gain * std::log(s1) + mean_gain) * s1;
        values[k] = n * ((a + mean_gain) * s0 - upper);
    }
    return MarkovChainSpec::iid(std::move(values), std::vector<double>(n_levels, 1.0 / n));
}

// ---------------------------------------------------------------------------
// Mixed-policy calibration

struct XiCalibration {
    double g_radical = 0.0;
    double g_conservative = 0.0;
    double xi_linear = 0.0; ///< from xi G_r + (1 - xi) G_c = p_bar
    double xi = 0.0;        ///< after refinement on the simulated mixture
    bool feasible = true;   ///< false when even the conservative policy exceeds p_bar
    SimResult radical;
    SimResult conservative;
    SimResult mixed;        ///< mixture at xi, calibration seed
};

/// Measures G_r and G_c by simulation (common random numbers), starts from
/// the linear interpolation and refines xi by bisection on the simulated
/// mixture with the same seed, because battery coupling makes the mixture's
/// grid power nonlinear in xi.
inline XiCalibration calibrate_mixed_xi(const Model& model, const SimConfig& cfg,
                                        std::size_t refine_steps = 30) {
    XiCalibration c;
    const double p_bar = model.params().p_bar;
    c.radical = run_simulation(SimPolicy::heuristic(HeuristicKind::radical, model), model, cfg);
    c.conservative = run_simulation(SimPolicy::heuristic(HeuristicKind::conservative, model), model, cfg);
    c.g_radical = c.radical.mean_grid_power;
    c.g_conservative = c.conservative.mean_grid_power;
    if (c.g_conservative > p_bar) {
        c.feasible = false;
        c.xi_linear = c.xi = 0.0;
        c.mixed = c.conservative;
        return c;
    }
    c.xi_linear = interpolate_xi(c.g_radical, c.g_conservative, p_bar);
    auto sim = [&](double xi) {
        return run_simulation(SimPolicy::heuristic(HeuristicKind::mixed, model, xi), model, cfg);
    };
    c.xi = c.xi_linear;
    c.mixed = sim(c.xi);
    if (c.xi_linear >= 1.0 || c.xi_linear <= 0.0)
        return c;
    double lo = 0.0, hi = 1.0;
    for (std::size_t it = 0; it < refine_steps; ++it) {
        const double err = c.mixed.mean_grid_power - p_bar;
        if (std::abs(err) <= 0.1 * c.mixed.mean_grid_power_se)
            break;
        if (err > 0.0)
            hi = c.xi;
        else
            lo = c.xi;
        c.xi = 0.5 * (lo + hi);
        c.mixed = sim(c.xi);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Sweeps

/// Runs fn(0..n-1) on up to `threads` workers and returns results in index order.
template <class F>
auto parallel_map(std::size_t n, std::size_t threads, F fn) -> std::vector<decltype(fn(std::size_t{}))> {
    using R = decltype(fn(std::size_t{}));
    std::vector<R> out;
    out.reserve(n);
    threads = std::max<std::size_t>(1, threads);
    for (std::size_t start = 0; start < n; start += threads) {
        const std::size_t stop = std::min(n, start + threads);
        std::vector<std::future<R>> jobs;
        for (std::size_t i = start; i < stop; ++i)
            jobs.push_back(std::async(threads == 1 ? std::launch::deferred : std::launch::async, fn, i));
        for (auto& j : jobs)
            out.push_back(j.get());
    }
    return out;
}

struct ModelTemplate {
    ModelParams params;
    MarkovChainSpec channel;
    MarkovChainSpec arrival;
    MarkovChainSpec harvest;

    Model build() const { return Model(params, channel, arrival, harvest); }
};

struct ArrivalSweepRow {
    double abar = 0.0;
    double mean_grid_power = 0.0;
    double mean_grid_power_se = 0.0;
    double mean_queue = 0.0;
    double reference_power = 0.0; ///< P(h_mean, abar): demand scale for "nearly zero"
    double overflow_fraction = 0.0;
};

/// Arrivals i.i.d. on {0, 2 abar} with equal probability, one simulation per
/// abar; q_max is raised to 2 abar when needed.
inline std::vector<ArrivalSweepRow> sweep_arrival(const ModelTemplate& tmpl, const std::vector<double>& abars,
                                                  HeuristicKind kind, const SimConfig& cfg,
                                                  std::size_t threads = 1) {
    return parallel_map(abars.size(), threads, [&](std::size_t i) {
        ModelTemplate t = tmpl;
        const double ab = abars[i];
        if (ab < 0.0 || std::floor(2.0 * ab) != 2.0 * ab)
            throw ValidationError("sweep_arrival: 2*abar must be a nonnegative integer");
        t.arrival = ab == 0.0 ? MarkovChainSpec::singleton(0.0)
                              : MarkovChainSpec::iid({0.0, 2.0 * ab}, {0.5, 0.5});
        t.params.q_max = std::max(t.params.q_max, static_cast<int>(2.0 * ab));
        const Model m = t.build();
        const auto r = run_simulation(SimPolicy::heuristic(kind, m), m, cfg);
        ArrivalSweepRow row;
        row.abar = ab;
        row.mean_grid_power = r.mean_grid_power;
        row.mean_grid_power_se = r.mean_grid_power_se;
        row.mean_queue = r.mean_queue;
        row.reference_power = required_power(t.params, t.channel.stationary_mean(),
                                             static_cast<int>(std::ceil(ab)));
        row.overflow_fraction = r.overflow_fraction;
        return row;
    });
}

struct BudgetSweepRow {
    double p_bar = 0.0;
    double mean_queue = 0.0;
    double mean_queue_se = 0.0;
    double mean_grid_power = 0.0;
    double overflow_fraction = 0.0;
};

inline std::vector<BudgetSweepRow> sweep_budget(const ModelTemplate& tmpl, const std::vector<double>& pbars,
                                                HeuristicKind kind, const SimConfig& cfg,
                                                std::size_t threads = 1) {
    return parallel_map(pbars.size(), threads, [&](std::size_t i) {
        ModelTemplate t = tmpl;
        t.params.p_bar = pbars[i];
        const Model m = t.build();
        const auto r = run_simulation(SimPolicy::heuristic(kind, m), m, cfg);
        return BudgetSweepRow{pbars[i], r.mean_queue, r.mean_queue_se, r.mean_grid_power,
                              r.overflow_fraction};
    });
}

struct ChannelSweepRow {
    double hbar = 0.0; ///< mean of h / sigma2
    double queue_radical = 0.0, queue_radical_se = 0.0;
    double queue_conservative = 0.0, queue_conservative_se = 0.0;
    double queue_mixed = 0.0, queue_mixed_se = 0.0;
    double grid_radical = 0.0, grid_conservative = 0.0, grid_mixed = 0.0, grid_mixed_se = 0.0;
    double xi = 0.0;
    bool mixed_feasible = true;
};

/// Channel sweep with the gain discretized into n_levels equiprobable
/// levels of mean hbar * sigma2; the mixed policy is calibrated per point.
inline std::vector<ChannelSweepRow> sweep_channel(const ModelTemplate& tmpl, const std::vector<double>& hbars,
                                                  std::size_t n_levels, const SimConfig& cfg,
                                                  std::size_t threads = 1) {
    return parallel_map(hbars.size(), threads, [&](std::size_t i) {
        ModelTemplate t = tmpl;
        t.channel = discretize_rayleigh(hbars[i] * t.params.sigma2, n_levels);
        const Model m = t.build();
        const auto cal = calibrate_mixed_xi(m, cfg);
        ChannelSweepRow row;
        row.hbar = hbars[i];
        row.queue_radical = cal.radical.mean_queue;
        row.queue_radical_se = cal.radical.mean_queue_se;
        row.queue_conservative = cal.conservative.mean_queue;
        row.queue_conservative_se = cal.conservative.mean_queue_se;
        row.queue_mixed = cal.mixed.mean_queue;
        row.queue_mixed_se = cal.mixed.mean_queue_se;
        row.grid_radical = cal.g_radical;
        row.grid_conservative = cal.g_conservative;
        row.grid_mixed = cal.mixed.mean_grid_power;
        row.grid_mixed_se = cal.mixed.mean_grid_power_se;
        row.xi = cal.xi;
        row.mixed_feasible = cal.feasible;
        return row;
    });
}

} // namespace ehmdp
