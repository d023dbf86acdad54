#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ehmdp;

namespace {

ModelParams five_uses() {
    ModelParams p;
    p.n_uses = 5.0;
    p.circuit_c = 1.0;
    return p;
}

Model chain_model(ModelParams p, MarkovChainSpec h, MarkovChainSpec a, MarkovChainSpec e) {
    return Model(p, std::move(h), std::move(a), std::move(e));
}

} // namespace

TEST(RequiredPower, MatchesWorkedValues) {
    const auto p = five_uses();
    EXPECT_NEAR(p.theta(), 0.27726, 1e-5);
    EXPECT_EQ(required_power(p, 1.0, 0), 0.0);
    EXPECT_NEAR(required_power(p, 1.0, 1), 1.31951, 1e-5);
    EXPECT_NEAR(required_power(p, 0.5, 2), 2.48221, 1e-5);
}

TEST(RequiredPower, RejectsNonPositiveGain) {
    const auto p = five_uses();
    EXPECT_THROW(required_power(p, 0.0, 1), DomainError);
    EXPECT_THROW(required_power(p, -1.0, 1), DomainError);
    EXPECT_THROW(required_power(p, 1.0, -1), DomainError);
}

TEST(RequiredPower, StrictlyIncreasingWithCircuitJump) {
    const auto p = five_uses();
    for (double h : {0.1, 0.5, 1.0, 7.0}) {
        EXPECT_GT(required_power(p, h, 1) - p.circuit_c, 0.0);
        for (int r = 1; r < 40; ++r)
            EXPECT_LT(required_power(p, h, r), required_power(p, h, r + 1));
    }
}

TEST(PowerInverse, MatchesWorkedValues) {
    const auto p = five_uses();
    EXPECT_EQ(power_inverse(p, 0.5, 2.48221), 2);
    EXPECT_EQ(power_inverse(p, 1.0, 0.5), 0);
    EXPECT_EQ(power_inverse(p, 3.0, 0.0), 0);
    EXPECT_THROW(power_inverse(p, 0.0, 1.0), DomainError);
}

TEST(PowerInverse, IsLargestAffordableRate) {
    const auto p = five_uses();
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> hd(0.05, 5.0), bd(0.0, 200.0);
    for (int k = 0; k < 500; ++k) {
        const double h = hd(gen), budget = bd(gen);
        const int r = power_inverse(p, h, budget);
        EXPECT_LE(required_power(p, h, r), budget);
        EXPECT_GT(required_power(p, h, r + 1), budget);
    }
}

TEST(GridPower, MatchesWorkedValues) {
    EXPECT_NEAR(grid_power(2.48221, 1.0), 1.48221, 1e-12);
    EXPECT_EQ(grid_power(2.48221, 3.0), 0.0);
    const Model m = fx::desk();
    SystemState x;
    EXPECT_EQ(m.grid_power(x, {0, 0}), 0.0);
}

TEST(GridPower, RejectsInfeasibleAction) {
    const Model m = fx::desk();
    SystemState x;
    x.q = 1;
    x.eb = 1;
    EXPECT_THROW(m.grid_power(x, {2, 0}), ContractViolation);
    EXPECT_THROW(m.grid_power(x, {1, 2}), ContractViolation);
    EXPECT_THROW(m.grid_power(x, {0, 1}), ContractViolation); // w above P(x, 0) = 0
}

TEST(GridPower, DecomposesRequiredPower) {
    const Model m = fx::desk(false);
    const StateSpace s(m);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const SystemState x = s.state(i);
        for (const Action& u : m.feasible_actions(x)) {
            const double p = m.required_power(x, u.r);
            const double w = m.battery_power(u);
            const double g = m.grid_power(x, u);
            EXPECT_GE(g + w, p - 1e-12);
            EXPECT_EQ(std::abs(g + w - p) <= 1e-12, w <= p + 1e-12);
        }
    }
}

TEST(StepQueue, MatchesWorkedValues) {
    EXPECT_EQ(step_queue(5, 2, 3, 20).next, 6);
    EXPECT_EQ(step_queue(5, 2, 3, 20).dropped, 0);
    for (int q = 0; q < 6; ++q)
        EXPECT_EQ(step_queue(q, q, 4, 10).next, 4);
    const auto s = step_queue(19, 0, 4, 20);
    EXPECT_EQ(s.next, 20);
    EXPECT_EQ(s.dropped, 3);
    EXPECT_THROW(step_queue(1, 2, 0, 5), ContractViolation);
}

TEST(StepQueue, StaysInRangeAndIsExactWithoutClamp) {
    for (int q = 0; q <= 8; ++q)
        for (int r = 0; r <= q; ++r)
            for (int a = 0; a <= 8; ++a) {
                const auto s = step_queue(q, r, a, 8);
                EXPECT_GE(s.next, 0);
                EXPECT_LE(s.next, 8);
                EXPECT_EQ(s.next + s.dropped, q - r + a);
                EXPECT_EQ(step_queue(q, r, a, 1'000'000).next, q - r + a);
            }
}

TEST(StepBattery, MatchesWorkedValues) {
    EXPECT_EQ(step_battery(9, 2, 1, 10).next, 8);
    const auto s = step_battery(9, 0, 5, 10);
    EXPECT_EQ(s.next, 10);
    EXPECT_EQ(s.spilled, 4);
    for (int eb = 0; eb <= 10; ++eb)
        EXPECT_EQ(step_battery(eb, eb, 0, 10).next, 0);
    EXPECT_THROW(step_battery(2, 3, 0, 10), ContractViolation);
}

TEST(StepBattery, ConservesEnergyWithinCapacity) {
    for (int eb = 0; eb <= 6; ++eb)
        for (int w = 0; w <= eb; ++w)
            for (int e = 0; e <= 7; ++e) {
                const auto s = step_battery(eb, w, e, 6);
                EXPECT_GE(s.next, 0);
                EXPECT_LE(s.next, 6);
                EXPECT_EQ(s.next - eb, e - w - s.spilled);
                if (s.spilled > 0)
                    EXPECT_EQ(s.next, 6);
            }
}

TEST(EnergyGrid, RejectsOffGridEnergies) {
    ModelParams p;
    p.delta_e = 0.5;
    p.e_max = 1.25;
    EXPECT_THROW(p.validate(), ValidationError);
    p.e_max = 1.5;
    EXPECT_NO_THROW(p.validate());
    EXPECT_EQ(p.battery_capacity_units(), 3);
    p.e_max = 2.0;
    p.q_max = 2;
    EXPECT_THROW(Model(p, MarkovChainSpec::singleton(1.0), MarkovChainSpec::singleton(1.0),
                       MarkovChainSpec::singleton(0.3)),
                 ValidationError);
}

TEST(StateSpace, SizeIsProductOfCardinalities) {
    const Model m = fx::desk();
    const StateSpace s(m);
    // seven queue levels (0..6), two gains, two arrivals, four battery levels, two harvests
    EXPECT_EQ(s.size(), 7u * 2 * 2 * 4 * 2);
    EXPECT_EQ(s.size(), 224u);
    ModelParams p = m.params();
    p.q_max = 5;
    const Model m5(p, m.channel(), m.arrival(), m.harvest());
    EXPECT_EQ(StateSpace(m5).size(), 192u);
}

TEST(StateSpace, SingleStateInstance) {
    ModelParams p;
    const Model m(p, MarkovChainSpec::singleton(1.0), MarkovChainSpec::singleton(0.0),
                  MarkovChainSpec::singleton(0.0));
    EXPECT_EQ(StateSpace(m).size(), 1u);
}

TEST(StateSpace, IndexIsBijectiveInDocumentedOrder) {
    const Model m = fx::desk();
    const StateSpace s(m);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const SystemState x = s.state(i);
        EXPECT_EQ(s.index(x), i);
        EXPECT_EQ(i, ((((static_cast<std::size_t>(x.q) * 2 + x.h) * 2 + x.a) * 4 + x.eb) * 2 + x.e));
    }
}

TEST(StateSpace, EnforcesLimit) { EXPECT_THROW(StateSpace(fx::desk(), 100), CapacityError); }

TEST(FeasibleActions, MatchesWorkedValues) {
    const Model m = fx::desk();
    SystemState x;
    EXPECT_EQ(m.feasible_actions(x, true), (std::vector<Action>{{0, 0}}));
    x.q = 2;
    x.eb = 2;
    EXPECT_EQ(m.feasible_actions(x, false).size(), 9u);

    ModelParams p = five_uses();
    p.e_max = 50.0;
    p.q_max = 3;
    const Model big(p, MarkovChainSpec::singleton(1.0), MarkovChainSpec::singleton(1.0),
                    MarkovChainSpec::singleton(0.0));
    SystemState y;
    y.q = 1;
    y.eb = 50;
    const auto acts = big.feasible_actions(y, true);
    int wmax0 = -1, wmax1 = -1;
    for (const auto& u : acts)
        (u.r == 0 ? wmax0 : wmax1) = std::max(u.r == 0 ? wmax0 : wmax1, u.w);
    EXPECT_EQ(wmax0, 0);
    EXPECT_EQ(wmax1, 1); // floor(P(x, 1)) = floor(1.3195)
}

TEST(FeasibleActions, RestrictedSetIsSubsetContainingZeroDraw) {
    const Model m = fx::desk();
    const StateSpace s(m);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const SystemState x = s.state(i);
        const auto on = m.feasible_actions(x, true);
        const auto off = m.feasible_actions(x, false);
        EXPECT_TRUE(std::is_sorted(on.begin(), on.end()));
        EXPECT_EQ(on.front(), (Action{0, 0}));
        for (const auto& u : on)
            EXPECT_NE(std::find(off.begin(), off.end(), u), off.end());
        for (int r = 0; r <= x.q; ++r)
            EXPECT_NE(std::find(on.begin(), on.end(), Action{r, 0}), on.end());
    }
}

TEST(MarkovChainSpec, ValidationNamesTheRow) {
    MarkovChainSpec c{{0.0, 1.0}, {{0.5, 0.5}, {0.6, 0.3}}};
    try {
        c.validate("arrival");
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("0.9"), std::string::npos);
    }
    EXPECT_THROW((MarkovChainSpec{{1.0, 0.5}, {{1, 0}, {0, 1}}}.validate("channel")), ValidationError);
}

TEST(MarkovChainSpec, StationaryLaw) {
    const MarkovChainSpec c{{0, 1}, {{0.6, 0.4}, {0.3, 0.7}}};
    const auto pi = c.stationary();
    EXPECT_NEAR(pi[0], 3.0 / 7.0, 1e-12);
    EXPECT_NEAR(pi[1], 4.0 / 7.0, 1e-12);
    EXPECT_NEAR(c.stationary_mean(), 4.0 / 7.0, 1e-12);
}

TEST(TransitionKernel, WorkedExamples) {
    ModelParams p;
    p.q_max = 4;
    const Model single(p, MarkovChainSpec::singleton(1.0), MarkovChainSpec::singleton(1.0),
                       MarkovChainSpec::singleton(0.0));
    const StateSpace s1(single);
    SystemState x;
    x.q = 2;
    const auto k1 = transition_kernel(single, s1, x, {1, 0});
    ASSERT_EQ(k1.size(), 1u);
    EXPECT_EQ(k1[0].prob, 1.0);
    EXPECT_EQ(s1.state(k1[0].next).q, 2);

    const Model m = chain_model(p, MarkovChainSpec{{0.5, 1.0}, {{0.9, 0.1}, {0.2, 0.8}}},
                                MarkovChainSpec{{0, 1}, {{0.5, 0.5}, {0.5, 0.5}}}, MarkovChainSpec::singleton(0.0));
    const StateSpace s(m);
    const auto k = transition_kernel(m, s, x, {0, 0});
    ASSERT_EQ(k.size(), 4u);
    std::vector<double> probs;
    for (const auto& t : k)
        probs.push_back(t.prob);
    std::sort(probs.begin(), probs.end());
    EXPECT_NEAR(probs[0], 0.05, 1e-15);
    EXPECT_NEAR(probs[1], 0.05, 1e-15);
    EXPECT_NEAR(probs[2], 0.45, 1e-15);
    EXPECT_NEAR(probs[3], 0.45, 1e-15);
    EXPECT_THROW(transition_kernel(m, s, x, {3, 0}), ContractViolation);
}

TEST(TransitionKernel, RowsSumToOneAndMatchOracle) {
    const Model m = fx::desk();
    const StateSpace s(m);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const SystemState x = s.state(i);
        for (const Action& u : m.feasible_actions(x)) {
            const auto k = transition_kernel(m, s, x, u);
            const auto o = fx::oracle::row(m, s, x, u);
            double sum = 0.0;
            for (const auto& t : k)
                sum += t.prob;
            EXPECT_NEAR(sum, 1.0, 1e-12);
            ASSERT_EQ(k.size(), o.next.size());
            for (std::size_t j = 0; j < k.size(); ++j) {
                EXPECT_EQ(k[j].next, o.next[j].first);
                EXPECT_DOUBLE_EQ(k[j].prob, o.next[j].second);
            }
            EXPECT_NEAR(m.grid_power(x, u), o.grid, 1e-12);
        }
    }
}

TEST(FeasibleActions, MatchesOracleOnDesk) {
    for (bool restrict : {true, false}) {
        const Model m = fx::desk(restrict);
        const StateSpace s(m);
        for (std::size_t i = 0; i < s.size(); ++i)
            EXPECT_EQ(m.feasible_actions(s.state(i)), fx::oracle::actions(m, s.state(i), restrict));
    }
}
