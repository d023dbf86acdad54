#pragma once

// Instances shared by the tests, and oracles written without the library's
// solver code: dynamics, power law and action sets are re-derived here and
// solved by dense policy iteration.

#include "ehmdp/ehmdp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace fx {

using namespace ehmdp;

inline std::string config_path(const std::string& name) { return std::string(EHMDP_CONFIG_DIR) + "/" + name; }

/// 224 states: q <= 6, two gains, arrivals {0, 2}, battery 0..3, harvest {0, 3}.
inline Model desk(bool restrict_to_required = true) {
    ModelParams p;
    p.bits_per_packet = 1.0;
    p.n_uses = 2.0;
    p.circuit_c = 1.0;
    p.e_max = 3.0;
    p.p_bar = 1.45;
    p.delta_e = 1.0;
    p.q_max = 6;
    p.restrict_to_required = restrict_to_required;
    return Model(p, MarkovChainSpec::iid({0.5, 1.0}, {0.5, 0.5}), MarkovChainSpec::iid({0, 2}, {0.5, 0.5}),
                 MarkovChainSpec::iid({0, 3}, {0.5, 0.5}));
}

constexpr double kDeskBeta = 0.4;

/// Six states (q in {0,1}, battery 0..2), up to four actions: battery sizing.
inline Model tiny_battery() {
    ModelParams p;
    p.n_uses = 2.0;
    p.circuit_c = 0.5;
    p.e_max = 2.0;
    p.delta_e = 1.0;
    p.q_max = 1;
    return Model(p, MarkovChainSpec::singleton(1.0), MarkovChainSpec::singleton(1.0),
                 MarkovChainSpec::singleton(1.0));
}

/// Six states (q in {0,1,2}, Markov-modulated gain), three actions at most.
inline Model tiny_channel() {
    ModelParams p;
    p.n_uses = 2.0;
    p.circuit_c = 0.2;
    p.e_max = 0.0;
    p.q_max = 2;
    return Model(p, MarkovChainSpec{{0.5, 2.0}, {{0.7, 0.3}, {0.4, 0.6}}}, MarkovChainSpec::singleton(1.0),
                 MarkovChainSpec::singleton(0.0));
}

/// Six states (q in {0,1,2}, bursty Markov arrivals), three actions at most.
inline Model tiny_arrival() {
    ModelParams p;
    p.n_uses = 1.0;
    p.circuit_c = 0.3;
    p.e_max = 0.0;
    p.q_max = 2;
    return Model(p, MarkovChainSpec::singleton(1.0), MarkovChainSpec{{0, 1}, {{0.8, 0.2}, {0.5, 0.5}}},
                 MarkovChainSpec::singleton(0.0));
}

/// Eight states with one battery quantum and i.i.d. harvest: q, e_b, e in {0,1}.
inline Model tiny_harvest() {
    ModelParams p;
    p.n_uses = 2.0;
    p.circuit_c = 0.5;
    p.e_max = 1.0;
    p.delta_e = 1.0;
    p.q_max = 1;
    return Model(p, MarkovChainSpec::singleton(1.0), MarkovChainSpec::singleton(1.0),
                 MarkovChainSpec::iid({0, 1}, {0.5, 0.5}));
}

// ---------------------------------------------------------------------------
// Oracle

namespace oracle {

struct Row {
    std::vector<std::pair<std::size_t, double>> next;
    double queue = 0.0;
    double grid = 0.0;
};

inline double power(const ModelParams& p, double h, int r) {
    if (r == 0)
        return 0.0;
    const double theta = 2.0 * std::log(2.0) * p.bits_per_packet / p.n_uses;
    return p.rho * p.sigma2 / h * (std::exp(theta * r) - 1.0) + p.circuit_c;
}

inline std::vector<Action> actions(const Model& m, const SystemState& x, bool restrict_to_required) {
    const auto& p = m.params();
    std::vector<Action> out;
    for (int r = 0; r <= x.q; ++r)
        for (int w = 0; w <= x.eb; ++w) {
            if (restrict_to_required && w * p.delta_e / p.tau > power(p, m.channel().values[x.h], r) + 1e-9)
                break;
            out.push_back({r, w});
        }
    return out;
}

inline Row row(const Model& m, const StateSpace& s, const SystemState& x, const Action& u) {
    const auto& p = m.params();
    const int cap = static_cast<int>(std::lround(p.e_max / p.delta_e));
    Row out;
    out.queue = x.q;
    out.grid = std::max(0.0, power(p, m.channel().values[x.h], u.r) - u.w * p.delta_e / p.tau);
    const int q2 = std::min(x.q - u.r + static_cast<int>(m.arrival().values[x.a]), p.q_max);
    const int b2 = std::min(x.eb - u.w + static_cast<int>(std::lround(m.harvest().values[x.e] / p.delta_e)), cap);
    for (std::size_t h = 0; h < m.channel().size(); ++h)
        for (std::size_t a = 0; a < m.arrival().size(); ++a)
            for (std::size_t e = 0; e < m.harvest().size(); ++e) {
                const double pr = m.channel().transition[x.h][h] * m.arrival().transition[x.a][a] *
                                  m.harvest().transition[x.e][e];
                if (pr > 0.0)
                    out.next.push_back({s.index({q2, h, a, b2, e}), pr});
            }
    return out;
}

struct Solution {
    double gain = 0.0;
    std::vector<double> values; ///< bias (average) or discounted values
    DeterministicPolicy policy;
};

/// Exact values of a fixed policy: (I - alpha P) v = c, or for alpha = 1 the
/// unichain system g + h = c + P h with h(0) = 0.
inline Solution evaluate(const Model& m, const StateSpace& s, const DeterministicPolicy& pol, double beta,
                         double alpha) {
    const auto n = static_cast<Eigen::Index>(s.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n + 1, n + 1);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = row(m, s, s.state(static_cast<std::size_t>(i)), pol.actions[static_cast<std::size_t>(i)]);
        c(i) = r.queue + beta * r.grid;
        for (const auto& [j, pr] : r.next)
            a(i, static_cast<Eigen::Index>(j)) -= alpha * pr;
    }
    Solution out;
    out.policy = pol;
    if (alpha < 1.0) {
        const Eigen::VectorXd v = a.topLeftCorner(n, n).partialPivLu().solve(c.head(n));
        out.values.assign(v.data(), v.data() + n);
        return out;
    }
    // Unknowns (h_0..h_{n-1}, g); column n carries g, the last row pins h_0.
    a.col(n).setZero();
    a.block(0, n, n, 1).setOnes();
    a.row(n).setZero();
    a(n, 0) = 1.0;
    const Eigen::VectorXd v = a.fullPivLu().solve(c);
    out.values.assign(v.data(), v.data() + n);
    out.gain = v(n);
    return out;
}

/// Howard policy iteration; an action is replaced only on strict improvement.
inline Solution policy_iteration(const Model& m, double beta, double alpha = 1.0) {
    const StateSpace s(m);
    const bool restrict = m.params().restrict_to_required;
    DeterministicPolicy pol;
    pol.actions.assign(s.size(), Action{0, 0});
    for (int it = 0; it < 1000; ++it) {
        const auto sol = evaluate(m, s, pol, beta, alpha);
        bool changed = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const SystemState x = s.state(i);
            auto q = [&](const Action& u) {
                const auto r = row(m, s, x, u);
                double v = r.queue + beta * r.grid;
                for (const auto& [j, pr] : r.next)
                    v += alpha * pr * sol.values[j];
                return v;
            };
            const double current = q(pol.actions[i]);
            Action best = pol.actions[i];
            double best_v = current;
            for (const auto& u : actions(m, x, restrict)) {
                const double v = q(u);
                if (v < best_v - 1e-10 * std::max(1.0, std::abs(best_v))) {
                    best_v = v;
                    best = u;
                }
            }
            if (!(best == pol.actions[i])) {
                pol.actions[i] = best;
                changed = true;
            }
        }
        if (!changed)
            return sol;
    }
    throw std::runtime_error("oracle policy iteration did not terminate");
}

/// Stationary law of a policy's chain by dense least squares on [P^T - I; 1^T].
inline std::vector<double> stationary(const Model& m, const DeterministicPolicy& pol) {
    const StateSpace s(m);
    const auto n = static_cast<Eigen::Index>(s.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + 1, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = row(m, s, s.state(static_cast<std::size_t>(i)), pol.actions[static_cast<std::size_t>(i)]);
        for (const auto& [j, pr] : r.next)
            a(static_cast<Eigen::Index>(j), i) += pr;
        a(i, i) -= 1.0;
    }
    a.row(n).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
    b(n) = 1.0;
    const Eigen::VectorXd pi = a.colPivHouseholderQr().solve(b);
    return {pi.data(), pi.data() + n};
}

} // namespace oracle
} // namespace fx
