#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ehmdp;

namespace {

SimConfig short_run(std::uint64_t seed = 5) {
    SimConfig c;
    c.n_slots = 20'000;
    c.seed = seed;
    c.record_trace = true;
    return c;
}

} // namespace

TEST(RandomStream, SubstreamsAreIndependentAndReproducible) {
    RandomStream a(1, StreamId::channel), b(1, StreamId::channel), c(1, StreamId::arrival), d(2, StreamId::channel);
    bool differs_stream = false, differs_seed = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        differs_stream |= x != c.next_u64();
        differs_seed |= x != d.next_u64();
    }
    EXPECT_TRUE(differs_stream);
    EXPECT_TRUE(differs_seed);
}

TEST(RandomStream, UniformAndCategoricalLaws) {
    RandomStream s(9, StreamId::harvest);
    const std::vector<double> p{0.1, 0.6, 0.2, 0.1};
    std::vector<double> count(4, 0.0);
    const int n = 200'000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = s.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
        count[s.categorical(p)] += 1.0;
    }
    EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
    for (std::size_t k = 0; k < 4; ++k)
        EXPECT_NEAR(count[k] / n, p[k], 4.0 * std::sqrt(p[k] * (1 - p[k]) / n));
}

TEST(Simulation, EnergyConservationPerSlot) {
    const Model m = fx::desk();
    const auto r = run_simulation(SimPolicy::heuristic(HeuristicKind::radical, m), m, short_run());
    ASSERT_EQ(r.trace.size(), 20'000u);
    for (std::size_t t = 0; t + 1 < r.trace.size(); ++t) {
        const auto& s = r.trace[t];
        const auto& n = r.trace[t + 1];
        EXPECT_EQ(n.state.eb - s.state.eb, m.harvest_units(s.state.e) - s.action.w - s.spilled);
        if (s.spilled > 0)
            EXPECT_EQ(n.state.eb, m.capacity_units());
        EXPECT_EQ(n.state.q + s.dropped, s.state.q - s.action.r + m.arrival_packets(s.state.a));
    }
}

TEST(Simulation, GridAccountingIsExact) {
    const Model m = fx::desk();
    const auto cfg = short_run();
    const auto r = run_simulation(SimPolicy::heuristic(HeuristicKind::conservative, m), m, cfg);
    double energy = 0.0, mean = 0.0;
    for (std::size_t t = cfg.resolved_warmup(); t < r.trace.size(); ++t) {
        const auto& s = r.trace[t];
        EXPECT_DOUBLE_EQ(s.required_power, m.required_power(s.state, s.action.r));
        EXPECT_DOUBLE_EQ(s.grid_power, std::max(s.required_power - m.battery_power(s.action), 0.0));
        energy += s.grid_power * m.params().tau;
        mean += s.grid_power;
    }
    EXPECT_DOUBLE_EQ(r.grid_energy, energy);
    EXPECT_NEAR(r.mean_grid_power, mean / static_cast<double>(r.measured_slots), 1e-12);
}

TEST(Simulation, ConservativeNeverExceedsBudgetPlusOneQuantum) {
    const Model m = fx::desk();
    const auto r = run_simulation(SimPolicy::heuristic(HeuristicKind::conservative, m), m, short_run());
    const double bound = m.params().p_bar + m.params().delta_e / m.params().tau;
    for (const auto& s : r.trace)
        EXPECT_LE(s.grid_power, bound + 1e-12);
    EXPECT_LE(r.max_grid_power, bound + 1e-12);
}

TEST(Simulation, SameSeedIdenticalResultDifferentSeedDiffers) {
    const Model m = fx::desk();
    const auto pol = SimPolicy::heuristic(HeuristicKind::mixed, m, 0.4);
    const auto a = run_simulation(pol, m, short_run(3));
    const auto b = run_simulation(pol, m, short_run(3));
    const auto c = run_simulation(pol, m, short_run(4));
    EXPECT_EQ(a.mean_queue, b.mean_queue);
    EXPECT_EQ(a.mean_grid_power, b.mean_grid_power);
    EXPECT_EQ(a.mean_queue_se, b.mean_queue_se);
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t t = 0; t < a.trace.size(); ++t) {
        EXPECT_EQ(a.trace[t].state, b.trace[t].state);
        EXPECT_EQ(a.trace[t].used_plus, b.trace[t].used_plus);
    }
    EXPECT_NE(a.mean_grid_power, c.mean_grid_power);
}

TEST(Simulation, MixedCoinFrequencyMatchesXi) {
    const Model m = fx::desk();
    SimConfig cfg;
    cfg.n_slots = 50'000;
    const auto r = run_simulation(SimPolicy::heuristic(HeuristicKind::mixed, m, 0.3), m, cfg);
    const double n = static_cast<double>(r.measured_slots);
    EXPECT_NEAR(r.plus_fraction, 0.3, 4.0 * std::sqrt(0.3 * 0.7 / n));
}

TEST(Simulation, AgreesWithExactEvaluationWithinThreeStandardErrors) {
    const Model m = fx::desk();
    const CompiledMdp mdp(m);
    SolverConfig sc;
    sc.beta = fx::kDeskBeta;
    const auto opt = relative_value_iteration(mdp, sc).policy;
    const std::vector<Policy> policies{opt, radical_policy(m), conservative_policy(m),
                                       MixedPolicy{radical_policy(m), conservative_policy(m), 0.5}};
    SimConfig cfg;
    cfg.n_slots = 100'000;
    cfg.seed = 21;
    for (const auto& pol : policies) {
        const auto ev = evaluate_policy(pol, sc.beta, m);
        const auto sim = run_simulation(pol, m, cfg);
        EXPECT_NEAR(sim.mean_queue, ev.mean_queue_b, 3.0 * sim.mean_queue_se);
        EXPECT_NEAR(sim.mean_grid_power, ev.mean_grid_k, 3.0 * sim.mean_grid_power_se);
    }
}

TEST(Simulation, RadicalQueueTracksMeanArrival) {
    const Model m = fx::desk();
    SimConfig cfg;
    cfg.n_slots = 100'000;
    const auto r = run_simulation(SimPolicy::heuristic(HeuristicKind::radical, m), m, cfg);
    EXPECT_NEAR(r.mean_queue, m.arrival().stationary_mean(), 3.0 * r.mean_queue_se);
    EXPECT_EQ(r.overflow_fraction, 0.0);
    EXPECT_EQ(r.dropped_packets, 0);
}

TEST(Simulation, RejectsInfeasibleAction) {
    const Model m = fx::desk();
    SimPolicy bad;
    bad.plus = [](const SystemState& x) { return Action{x.q + 1, 0}; };
    EXPECT_THROW(run_simulation(bad, m, short_run()), UndefinedAction);
    DeterministicPolicy tiny;
    EXPECT_THROW(run_simulation(Policy{tiny}, m, short_run()), ContractViolation);
}

TEST(Simulation, ValidatesConfig) {
    const Model m = fx::desk();
    SimConfig cfg;
    cfg.n_slots = 100;
    cfg.warmup = 100;
    EXPECT_THROW(run_simulation(SimPolicy::heuristic(HeuristicKind::radical, m), m, cfg), ValidationError);
    cfg.warmup = 0;
    cfg.batches = 1;
    EXPECT_THROW(run_simulation(SimPolicy::heuristic(HeuristicKind::radical, m), m, cfg), ValidationError);
}

TEST(DiscretizeRayleigh, WorkedValues) {
    const auto one = discretize_rayleigh(3.0, 1);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_NEAR(one.values[0], 3.0, 1e-12);
    // Two bins split at ln 2; conditional means 1 - ln 2 and 1 + ln 2.
    const auto two = discretize_rayleigh(1.0, 2);
    EXPECT_NEAR(two.values[0], 1.0 - std::log(2.0), 1e-12);
    EXPECT_NEAR(two.values[1], 1.0 + std::log(2.0), 1e-12);
    EXPECT_EQ(two.transition[0], (std::vector<double>{0.5, 0.5}));
    EXPECT_EQ(two.transition[1], (std::vector<double>{0.5, 0.5}));
}

TEST(DiscretizeRayleigh, PreservesMeanAndOrder) {
    for (std::size_t n : {3u, 8u, 16u, 64u})
        for (double mean : {0.5, 10.0}) {
            const auto c = discretize_rayleigh(mean, n);
            EXPECT_NEAR(c.stationary_mean(), mean, 1e-12 * mean);
            EXPECT_NO_THROW(c.validate("channel"));
            // Each level is the conditional mean of its bin: it lies in the bin.
            for (std::size_t k = 0; k < n; ++k) {
                const double lo = -mean * std::log(1.0 - static_cast<double>(k) / n);
                const double hi = k + 1 == n ? INFINITY : -mean * std::log(1.0 - static_cast<double>(k + 1) / n);
                EXPECT_GT(c.values[k], lo);
                EXPECT_LT(c.values[k], hi);
            }
        }
    EXPECT_THROW(discretize_rayleigh(1.0, 0), DomainError);
    EXPECT_THROW(discretize_rayleigh(-1.0, 4), DomainError);
}

TEST(Sweeps, ThreadCountDoesNotChangeResults) {
    const RunConfig rc = RunConfig::from_file(fx::config_path("desk.json"));
    auto tmpl = rc.model_template();
    SimConfig cfg;
    cfg.n_slots = 5'000;
    const std::vector<double> pbars{0.5, 1.0, 2.0, 4.0};
    const auto a = sweep_budget(tmpl, pbars, HeuristicKind::conservative, cfg, 1);
    const auto b = sweep_budget(tmpl, pbars, HeuristicKind::conservative, cfg, 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].p_bar, b[i].p_bar);
        EXPECT_EQ(a[i].mean_queue, b[i].mean_queue);
        EXPECT_EQ(a[i].mean_grid_power, b[i].mean_grid_power);
    }
}

TEST(Sweeps, BudgetSweepQueueDecreasesAndApproachesMeanArrival) {
    const RunConfig rc = RunConfig::from_file(fx::config_path("desk.json"));
    SimConfig cfg;
    cfg.n_slots = 50'000;
    const std::vector<double> pbars{0.0, 0.5, 1.0, 2.0, 4.0, 1e6};
    const auto rows = sweep_budget(rc.model_template(), pbars, HeuristicKind::conservative, cfg);
    for (std::size_t i = 1; i < rows.size(); ++i)
        EXPECT_LE(rows[i].mean_queue, rows[i - 1].mean_queue + 3.0 * rows[i].mean_queue_se);
    EXPECT_NEAR(rows.back().mean_queue, 1.0, 3.0 * rows.back().mean_queue_se);
    // Steep at small budgets, flat at large ones.
    EXPECT_GT(rows[0].mean_queue - rows[2].mean_queue, rows[4].mean_queue - rows[5].mean_queue);
}

TEST(Sweeps, ArrivalSweepRequiresHalfIntegerMeans) {
    const RunConfig rc = RunConfig::from_file(fx::config_path("desk.json"));
    SimConfig cfg;
    cfg.n_slots = 1'000;
    EXPECT_THROW(sweep_arrival(rc.model_template(), {0.3}, HeuristicKind::radical, cfg), ValidationError);
    const auto rows = sweep_arrival(rc.model_template(), {0.0, 1.5}, HeuristicKind::radical, cfg);
    EXPECT_EQ(rows[0].mean_grid_power, 0.0);
    EXPECT_EQ(rows[0].mean_queue, 0.0);
}
