#pragma once

// Average-cost and discounted dynamic programming over the compiled model:
// transition kernel, relative value iteration, discounted value iteration,
// exact policy evaluation and a brute-force oracle for tiny instances.

#include "ehmdp/errors.hpp"
#include "ehmdp/model.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ehmdp {

struct Transition {
    std::size_t next = 0;
    double prob = 0.0;
};

/// Successor distribution p(.|x, act). Only positive-probability successors
/// are listed; queue and battery move deterministically through the clamps.
inline std::vector<Transition> transition_kernel(const Model& model, const StateSpace& space,
                                                 const SystemState& x, const Action& act) {
    if (!model.valid_state(x) || !model.feasible(x, act))
        throw ContractViolation("transition_kernel: action is infeasible in this state");
    const auto [qs, bs] = model.step(x, act);
    const auto& ph = model.channel().transition[x.h];
    const auto& pa = model.arrival().transition[x.a];
    const auto& pe = model.harvest().transition[x.e];
    std::vector<Transition> out;
    for (std::size_t h = 0; h < ph.size(); ++h) {
        if (ph[h] == 0.0)
            continue;
        for (std::size_t a = 0; a < pa.size(); ++a) {
            if (pa[a] == 0.0)
                continue;
            for (std::size_t e = 0; e < pe.size(); ++e) {
                if (pe[e] == 0.0)
                    continue;
                out.push_back({space.index({qs.next, h, a, bs.next, e}), ph[h] * pa[a] * pe[e]});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Policies and value tables

struct DeterministicPolicy {
    std::vector<Action> actions; ///< one action per state index
};

/// Per-epoch randomization: `plus` with probability xi, else `minus`.
struct MixedPolicy {
    DeterministicPolicy plus;
    DeterministicPolicy minus;
    double xi = 0.0;
};

using Policy = std::variant<DeterministicPolicy, MixedPolicy>;

enum class ValueKind { relative_bias, discounted };

struct ValueTable {
    std::vector<double> values;
    ValueKind kind = ValueKind::relative_bias;
    double alpha = 1.0;          ///< 1 for a relative bias
    std::size_t reference = 0;   ///< normalization state (bias only)
};

struct SolverConfig {
    double beta = 1.0;
    double epsilon = 1e-9;
    std::size_t max_iters = 1'000'000;
    std::size_t reference_state = 0;
    double alpha = 0.99;          ///< discounted mode only
    /// Weight of the new iterate in v <- v + t (Tv - v); values below 1 make
    /// the iteration converge on periodic chains without changing the
    /// optimal gain or policy.
    double aperiodicity = 0.5;
    /// Actions within tie_tolerance * max(1, |best|) of the best are ties;
    /// the lexicographically smallest (r, w) wins.
    double tie_tolerance = 1e-9;
    bool record_trace = false;
};

enum class ActionSet {
    full,           ///< all (r, w) pairs
    greedy_battery, ///< (r, greedy w) only: the rate-only reduced problem
};

/// Flattened model: per-state action lists with their grid power and the
/// index of the post-decision point used to look up expected next values.
///
/// Expected values EV[idx(q', h, a, e_b', e)] = E[V(q', H', A', e_b', E') | h, a, e]
/// share the state index layout, so an action only stores where its
/// deterministic successor (q', e_b') lands for the current exogenous triple.
class CompiledMdp {
public:
    explicit CompiledMdp(Model model, ActionSet set = ActionSet::full,
                         std::optional<bool> restrict_to_required = std::nullopt,
                         std::size_t state_limit = StateSpace::default_limit)
        : model_(std::move(model)), space_(model_, state_limit), set_(set),
          restrict_(restrict_to_required.value_or(model_.params().restrict_to_required)) {
        const std::size_t n = space_.size();
        offsets_.reserve(n + 1);
        offsets_.push_back(0);
        queue_cost_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const SystemState x = space_.state(i);
            queue_cost_[i] = x.q;
            auto add = [&](const Action& act) {
                const auto [qs, bs] = model_.step(x, act);
                actions_.push_back(act);
                grid_.push_back(ehmdp::grid_power(model_.required_power(x, act.r),
                                                  model_.battery_power(act)));
                post_.push_back(space_.index({qs.next, x.h, x.a, bs.next, x.e}));
            };
            if (set_ == ActionSet::full) {
                for (const Action& act : model_.feasible_actions(x, restrict_))
                    add(act);
            } else {
                for (int r = 0; r <= x.q; ++r)
                    add({r, model_.draw_cap(x, r)});
            }
            offsets_.push_back(actions_.size());
        }
        flatten(model_.channel(), ph_);
        flatten(model_.arrival(), pa_);
        flatten(model_.harvest(), pe_);
    }

    const Model& model() const { return model_; }
    const StateSpace& space() const { return space_; }
    ActionSet action_set() const { return set_; }
    bool restricted() const { return restrict_; }
    std::size_t size() const { return space_.size(); }

    std::size_t action_begin(std::size_t i) const { return offsets_[i]; }
    std::size_t action_end(std::size_t i) const { return offsets_[i + 1]; }
    const Action& action(std::size_t k) const { return actions_[k]; }
    double grid(std::size_t k) const { return grid_[k]; }
    std::size_t post(std::size_t k) const { return post_[k]; }
    double queue_cost(std::size_t i) const { return queue_cost_[i]; }
    std::size_t total_actions() const { return actions_.size(); }

    /// ev <- E[v(next) | post-decision point], via one contraction per chain.
    void expect(const std::vector<double>& v, std::vector<double>& ev,
                std::vector<double>& scratch) const {
        const std::size_t ne = space_.harvest_levels(), nb = space_.battery_levels(),
                          na = space_.arrival_levels(), nh = space_.channel_levels();
        ev.resize(v.size());
        scratch.resize(v.size());
        contract(v, scratch, pe_, ne, 1, v.size() / ne);
        contract(scratch, ev, pa_, na, nb * ne, v.size() / (na * nb * ne));
        contract(ev, scratch, ph_, nh, na * nb * ne, v.size() / (nh * na * nb * ne));
        ev.swap(scratch);
    }

    double action_value(std::size_t i, std::size_t k, const std::vector<double>& ev, double beta,
                        double alpha) const {
        return queue_cost_[i] + beta * grid_[k] + alpha * ev[post_[k]];
    }

    /// Index of the lexicographically first action within tolerance of the best.
    std::size_t argmin(std::size_t i, const std::vector<double>& ev, double beta, double alpha,
                       double tie_tolerance, double* best_value = nullptr) const {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k)
            best = std::min(best, action_value(i, k, ev, beta, alpha));
        const double tol = tie_tolerance * std::max(1.0, std::abs(best));
        for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) {
            if (action_value(i, k, ev, beta, alpha) <= best + tol) {
                if (best_value)
                    *best_value = best;
                return k;
            }
        }
        return offsets_[i];
    }

private:
    static void flatten(const MarkovChainSpec& c, std::vector<double>& out) {
        out.clear();
        for (const auto& row : c.transition)
            out.insert(out.end(), row.begin(), row.end());
    }

    // out[o, l, s] = sum_m P[l][m] in[o, m, s] over index o*n*stride + l*stride + s.
    static void contract(const std::vector<double>& in, std::vector<double>& out,
                         const std::vector<double>& p, std::size_t n, std::size_t stride,
                         std::size_t outer) {
        for (std::size_t o = 0; o < outer; ++o) {
            const std::size_t base = o * n * stride;
            for (std::size_t l = 0; l < n; ++l) {
                double* dst = out.data() + base + l * stride;
                std::fill(dst, dst + stride, 0.0);
                for (std::size_t m = 0; m < n; ++m) {
                    const double w = p[l * n + m];
                    if (w == 0.0)
                        continue;
                    const double* src = in.data() + base + m * stride;
                    for (std::size_t s = 0; s < stride; ++s)
                        dst[s] += w * src[s];
                }
            }
        }
    }

    Model model_;
    StateSpace space_;
    ActionSet set_;
    bool restrict_;
    std::vector<std::size_t> offsets_;
    std::vector<Action> actions_;
    std::vector<double> grid_;
    std::vector<std::size_t> post_;
    std::vector<double> queue_cost_;
    std::vector<double> ph_, pa_, pe_;
};

/// Greedy policy with respect to `values` (lexicographic tie-break).
inline DeterministicPolicy greedy_policy(const CompiledMdp& mdp, const std::vector<double>& values,
                                         double beta, double alpha, double tie_tolerance) {
    std::vector<double> ev, scratch;
    mdp.expect(values, ev, scratch);
    DeterministicPolicy pol;
    pol.actions.resize(mdp.size());
    for (std::size_t i = 0; i < mdp.size(); ++i)
        pol.actions[i] = mdp.action(mdp.argmin(i, ev, beta, alpha, tie_tolerance));
    return pol;
}

/// One application of the Bellman operator: returns T v and its greedy policy.
inline std::pair<std::vector<double>, DeterministicPolicy>
bellman_update(const CompiledMdp& mdp, const std::vector<double>& values, double beta, double alpha,
               double tie_tolerance = 1e-9) {
    std::vector<double> ev, scratch, out(mdp.size());
    mdp.expect(values, ev, scratch);
    DeterministicPolicy pol;
    pol.actions.resize(mdp.size());
    for (std::size_t i = 0; i < mdp.size(); ++i) {
        double best = 0.0;
        pol.actions[i] = mdp.action(mdp.argmin(i, ev, beta, alpha, tie_tolerance, &best));
        out[i] = best;
    }
    return {std::move(out), std::move(pol)};
}

namespace detail {

inline void check_config(const SolverConfig& cfg, const CompiledMdp& mdp, bool discounted) {
    if (!(cfg.beta >= 0.0) || !std::isfinite(cfg.beta))
        throw ValidationError("solver: beta must be >= 0");
    if (!(cfg.epsilon > 0.0))
        throw ValidationError("solver: epsilon must be positive");
    if (cfg.reference_state >= mdp.size())
        throw ValidationError("solver: reference_state out of range");
    if (!(cfg.aperiodicity > 0.0 && cfg.aperiodicity <= 1.0))
        throw ValidationError("solver: aperiodicity must lie in (0, 1]");
    if (discounted && !(cfg.alpha > 0.0 && cfg.alpha < 1.0))
        throw ValidationError("solver: alpha must lie in (0, 1)");
}

} // namespace detail

struct RviResult {
    double gain = 0.0;
    ValueTable bias;
    DeterministicPolicy policy;
    std::size_t iterations = 0;
    double span = 0.0;
    std::vector<double> span_trace; ///< filled when cfg.record_trace
};

/// Relative value iteration for the average cost q + beta * grid power.
///
/// Stops when span(Tv - v) < epsilon; the gain is the midpoint of the final
/// bounds min(Tv - v) <= J <= max(Tv - v). `warm_start` seeds v.
inline RviResult relative_value_iteration(const CompiledMdp& mdp, const SolverConfig& cfg,
                                          const std::vector<double>* warm_start = nullptr) {
    detail::check_config(cfg, mdp, false);
    const std::size_t n = mdp.size();
    std::vector<double> v(n, 0.0), tv(n), ev, scratch;
    if (warm_start && warm_start->size() == n)
        v = *warm_start;
    const double ref0 = v[cfg.reference_state];
    for (double& x : v)
        x -= ref0;

    RviResult res;
    const double t = cfg.aperiodicity;
    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        mdp.expect(v, ev, scratch);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t k = mdp.action_begin(i); k < mdp.action_end(i); ++k)
                best = std::min(best, mdp.action_value(i, k, ev, cfg.beta, 1.0));
            tv[i] = best;
            const double d = best - v[i];
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        res.iterations = it;
        res.span = hi - lo;
        if (cfg.record_trace)
            res.span_trace.push_back(res.span);
        if (res.span < cfg.epsilon) {
            res.gain = 0.5 * (lo + hi);
            break;
        }
        if (!std::isfinite(res.span))
            throw NonConvergence("relative value iteration diverged", it, res.span);
        for (std::size_t i = 0; i < n; ++i)
            v[i] += t * (tv[i] - v[i]);
        const double ref = v[cfg.reference_state];
        for (double& x : v)
            x -= ref;
        if (it == cfg.max_iters)
            throw NonConvergence("relative value iteration hit max_iters", it, res.span);
    }
    res.policy = greedy_policy(mdp, v, cfg.beta, 1.0, cfg.tie_tolerance);
    res.bias = {std::move(v), ValueKind::relative_bias, 1.0, cfg.reference_state};
    return res;
}

struct DiscountedResult {
    ValueTable values;
    DeterministicPolicy policy;
    std::size_t iterations = 0;
    double residual = 0.0;
    double threshold = 0.0; ///< stopping threshold actually used
};

/// Successive approximation V_{n+1} = T V_n from V_0 = 0.
///
/// Stops when ||V_{n+1} - V_n|| < epsilon (1 - alpha) / (2 alpha), which
/// puts the greedy policy within epsilon of optimal. When that threshold is
/// below the rounding noise of the values it is raised to 64 ulps of ||V||.
inline DiscountedResult discounted_value_iteration(const CompiledMdp& mdp, const SolverConfig& cfg) {
    detail::check_config(cfg, mdp, true);
    const std::size_t n = mdp.size();
    std::vector<double> v(n, 0.0), tv(n), ev, scratch;
    const double target = cfg.epsilon * (1.0 - cfg.alpha) / (2.0 * cfg.alpha);
    DiscountedResult res;
    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        mdp.expect(v, ev, scratch);
        double resid = 0.0, norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t k = mdp.action_begin(i); k < mdp.action_end(i); ++k)
                best = std::min(best, mdp.action_value(i, k, ev, cfg.beta, cfg.alpha));
            tv[i] = best;
            resid = std::max(resid, std::abs(best - v[i]));
            norm = std::max(norm, std::abs(best));
        }
        v.swap(tv);
        res.iterations = it;
        res.residual = resid;
        res.threshold =
            std::max(target, 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, norm));
        if (resid < res.threshold)
            break;
        if (!std::isfinite(resid))
            throw NonConvergence("discounted value iteration diverged", it, resid);
        if (it == cfg.max_iters)
            throw NonConvergence("discounted value iteration hit max_iters", it, resid);
    }
    res.policy = greedy_policy(mdp, v, cfg.beta, cfg.alpha, cfg.tie_tolerance);
    res.values = {std::move(v), ValueKind::discounted, cfg.alpha, 0};
    return res;
}

// ---------------------------------------------------------------------------
// Exact evaluation of a stationary policy

struct PolicyEvaluation {
    double gain_j = 0.0;
    double mean_queue_b = 0.0;
    double mean_grid_k = 0.0;
    std::vector<double> stationary_dist;
    double overflow_probability = 0.0; ///< stationary probability of a buffer clamp
    std::vector<char> recurrent;       ///< membership of the recurrent class
};

namespace detail {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct InducedChain {
    SparseRowMatrix p;
    std::vector<double> grid;     ///< expected grid power per state
    std::vector<double> overflow; ///< probability of a buffer clamp per state
};

inline void append_rows(const Model& model, const StateSpace& space, const DeterministicPolicy& pol,
                        double weight, InducedChain& chain,
                        std::vector<Eigen::Triplet<double>>& trips) {
    if (pol.actions.size() != space.size())
        throw ContractViolation("policy size does not match the state space");
    for (std::size_t i = 0; i < space.size(); ++i) {
        const SystemState x = space.state(i);
        const Action& act = pol.actions[i];
        if (!model.feasible(x, act))
            throw ContractViolation("policy action (" + std::to_string(act.r) + ", " +
                                    std::to_string(act.w) + ") is infeasible at state " +
                                    std::to_string(i));
        chain.grid[i] += weight * model.grid_power(x, act);
        if (x.q - act.r + model.arrival_packets(x.a) > model.params().q_max)
            chain.overflow[i] += weight;
        for (const Transition& t : transition_kernel(model, space, x, act))
            trips.emplace_back(static_cast<int>(i), static_cast<int>(t.next), weight * t.prob);
    }
}

inline InducedChain induced_chain(const Model& model, const StateSpace& space, const Policy& policy) {
    InducedChain chain;
    const auto n = space.size();
    chain.grid.assign(n, 0.0);
    chain.overflow.assign(n, 0.0);
    std::vector<Eigen::Triplet<double>> trips;
    if (const auto* d = std::get_if<DeterministicPolicy>(&policy)) {
        append_rows(model, space, *d, 1.0, chain, trips);
    } else {
        const auto& m = std::get<MixedPolicy>(policy);
        if (!(m.xi >= 0.0 && m.xi <= 1.0))
            throw ContractViolation("mixed policy: xi must lie in [0, 1]");
        if (m.xi > 0.0)
            append_rows(model, space, m.plus, m.xi, chain, trips);
        if (m.xi < 1.0)
            append_rows(model, space, m.minus, 1.0 - m.xi, chain, trips);
    }
    chain.p.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    chain.p.setFromTriplets(trips.begin(), trips.end());
    chain.p.makeCompressed();
    return chain;
}

/// Strongly connected components (iterative Tarjan). Returns component id per node.
inline std::vector<int> strongly_connected(const SparseRowMatrix& p, int& count) {
    const auto n = static_cast<int>(p.rows());
    std::vector<int> index(n, -1), low(n, 0), comp(n, -1), stack;
    std::vector<char> on_stack(n, 0);
    std::vector<std::pair<int, SparseRowMatrix::InnerIterator>> work;
    int counter = 0;
    count = 0;
    for (int root = 0; root < n; ++root) {
        if (index[root] >= 0)
            continue;
        work.emplace_back(root, SparseRowMatrix::InnerIterator(p, root));
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!work.empty()) {
            auto& [v, it] = work.back();
            bool descended = false;
            for (; it; ++it) {
                if (it.value() <= 0.0)
                    continue;
                const int w = static_cast<int>(it.col());
                if (index[w] < 0) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    ++it;
                    work.emplace_back(w, SparseRowMatrix::InnerIterator(p, w));
                    descended = true;
                    break;
                }
                if (on_stack[w])
                    low[v] = std::min(low[v], index[w]);
            }
            if (descended)
                continue;
            const int done = v;
            if (low[done] == index[done]) {
                int w = -1;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = 0;
                    comp[w] = count;
                } while (w != done);
                ++count;
            }
            work.pop_back();
            if (!work.empty()) {
                const int parent = work.back().first;
                low[parent] = std::min(low[parent], low[done]);
            }
        }
    }
    return comp;
}

/// Closed communicating classes of the chain, as component ids.
inline std::vector<int> closed_classes(const SparseRowMatrix& p, const std::vector<int>& comp,
                                       int count) {
    std::vector<char> leaks(static_cast<std::size_t>(count), 0);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (SparseRowMatrix::InnerIterator it(p, i); it; ++it)
            if (it.value() > 0.0 && comp[static_cast<std::size_t>(it.col())] != comp[i])
                leaks[static_cast<std::size_t>(comp[i])] = 1;
    std::vector<int> out;
    for (int c = 0; c < count; ++c)
        if (!leaks[static_cast<std::size_t>(c)])
            out.push_back(c);
    return out;
}

inline double stationary_residual(const SparseRowMatrix& p, const std::vector<double>& pi) {
    std::vector<double> next(pi.size(), 0.0);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (SparseRowMatrix::InnerIterator it(p, i); it; ++it)
            next[static_cast<std::size_t>(it.col())] += pi[static_cast<std::size_t>(i)] * it.value();
    double r = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i)
        r = std::max(r, std::abs(next[i] - pi[i]));
    return r;
}

/// Stationary law of the chain restricted to one closed class.
inline std::vector<double> stationary_on_class(const SparseRowMatrix& p, const std::vector<int>& comp,
                                               int cls) {
    const auto n = static_cast<std::size_t>(p.rows());
    std::vector<int> local(n, -1);
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
        if (comp[i] == cls) {
            local[i] = static_cast<int>(members.size());
            members.push_back(i);
        }
    const auto m = static_cast<int>(members.size());
    std::vector<double> pi(n, 0.0);
    if (m == 1) {
        pi[members[0]] = 1.0;
        return pi;
    }
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    std::vector<Eigen::Triplet<double>> trips;
    for (int li = 0; li < m; ++li) {
        const auto i = static_cast<Eigen::Index>(members[static_cast<std::size_t>(li)]);
        for (SparseRowMatrix::InnerIterator it(p, i); it; ++it) {
            const int lj = local[static_cast<std::size_t>(it.col())];
            if (lj != m - 1)
                trips.emplace_back(lj, li, it.value());
        }
        if (li != m - 1)
            trips.emplace_back(li, li, -1.0);
        trips.emplace_back(m - 1, li, 1.0);
    }
    Eigen::SparseMatrix<double> a(m, m);
    a.setFromTriplets(trips.begin(), trips.end());
    a.makeCompressed();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    rhs(m - 1) = 1.0;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    bool ok = lu.info() == Eigen::Success;
    if (ok) {
        Eigen::VectorXd x = lu.solve(rhs);
        ok = lu.info() == Eigen::Success && x.allFinite();
        if (ok)
            for (int li = 0; li < m; ++li)
                pi[members[static_cast<std::size_t>(li)]] = std::max(0.0, x(li));
    }
    double s = 0.0;
    for (double v : pi)
        s += v;
    if (ok && s > 0.0) {
        for (double& v : pi)
            v /= s;
        ok = stationary_residual(p, pi) < 1e-12;
    }
    if (!ok) {
        // Lazy power iteration as a fallback for ill-conditioned classes.
        std::fill(pi.begin(), pi.end(), 0.0);
        for (std::size_t i : members)
            pi[i] = 1.0 / m;
        std::vector<double> next(n);
        for (std::size_t it = 0; it < 10'000'000; ++it) {
            std::fill(next.begin(), next.end(), 0.0);
            for (std::size_t i : members) {
                next[i] += 0.5 * pi[i];
                for (SparseRowMatrix::InnerIterator e(p, static_cast<Eigen::Index>(i)); e; ++e)
                    next[static_cast<std::size_t>(e.col())] += 0.5 * pi[i] * e.value();
            }
            double d = 0.0;
            for (std::size_t i : members)
                d = std::max(d, std::abs(next[i] - pi[i]));
            pi.swap(next);
            if (d < 1e-15)
                break;
        }
    }
    return pi;
}

} // namespace detail

/// Exact long-run averages of a stationary (possibly mixed) policy.
/// Throws MultichainError if the induced chain has several closed classes.
inline PolicyEvaluation evaluate_policy(const Policy& policy, double beta, const Model& model) {
    const StateSpace space(model);
    const auto chain = detail::induced_chain(model, space, policy);
    int count = 0;
    const auto comp = detail::strongly_connected(chain.p, count);
    const auto closed = detail::closed_classes(chain.p, comp, count);
    if (closed.size() != 1)
        throw MultichainError("induced chain has " + std::to_string(closed.size()) +
                                  " recurrent classes",
                              closed.size());
    PolicyEvaluation ev;
    ev.stationary_dist = detail::stationary_on_class(chain.p, comp, closed[0]);
    ev.recurrent.assign(space.size(), 0);
    for (std::size_t i = 0; i < space.size(); ++i) {
        ev.recurrent[i] = comp[i] == closed[0];
        const double p = ev.stationary_dist[i];
        ev.mean_queue_b += p * space.state(i).q;
        ev.mean_grid_k += p * chain.grid[i];
        ev.overflow_probability += p * chain.overflow[i];
    }
    ev.gain_j = ev.mean_queue_b + beta * ev.mean_grid_k;
    return ev;
}

/// Per-state gain of a policy whose chain may have several recurrent classes.
/// Solves (I - P) g = 0, g + (I - P) h = c in the least-squares sense; g is unique.
inline std::vector<double> multichain_gain(const Policy& policy, double beta, const Model& model) {
    const StateSpace space(model);
    const auto chain = detail::induced_chain(model, space, policy);
    const auto n = static_cast<Eigen::Index>(space.size());
    Eigen::MatrixXd p = Eigen::MatrixXd(chain.p);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
    m.topLeftCorner(n, n) = id - p;
    m.bottomLeftCorner(n, n) = id;
    m.bottomRightCorner(n, n) = id - p;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * n);
    for (Eigen::Index i = 0; i < n; ++i)
        rhs(n + i) = space.state(static_cast<std::size_t>(i)).q + beta * chain.grid[static_cast<std::size_t>(i)];
    const Eigen::VectorXd sol = m.completeOrthogonalDecomposition().solve(rhs);
    return {sol.data(), sol.data() + n};
}

struct BruteForceResult {
    double gain = 0.0;
    DeterministicPolicy policy;
    std::size_t policies_enumerated = 0;
};

/// Exhaustive search over stationary deterministic policies. The gain of a
/// multichain policy is its worst per-state gain. Ties keep the
/// lexicographically first policy in state-index order.
inline BruteForceResult brute_force_solve(double beta, const Model& model,
                                          std::size_t cap = 10'000'000,
                                          std::optional<bool> restrict_to_required = std::nullopt) {
    const StateSpace space(model);
    const bool restrict = restrict_to_required.value_or(model.params().restrict_to_required);
    std::vector<std::vector<Action>> choices(space.size());
    double total = 1.0;
    for (std::size_t i = 0; i < space.size(); ++i) {
        choices[i] = model.feasible_actions(space.state(i), restrict);
        total *= static_cast<double>(choices[i].size());
        if (total > static_cast<double>(cap))
            throw InstanceTooLarge("brute force would enumerate more than " + std::to_string(cap) +
                                   " policies");
    }
    std::vector<std::size_t> pick(space.size(), 0);
    BruteForceResult best;
    best.gain = std::numeric_limits<double>::infinity();
    DeterministicPolicy pol;
    pol.actions.resize(space.size());
    while (true) {
        for (std::size_t i = 0; i < space.size(); ++i)
            pol.actions[i] = choices[i][pick[i]];
        double g = 0.0;
        try {
            g = evaluate_policy(pol, beta, model).gain_j;
        } catch (const MultichainError&) {
            const auto gv = multichain_gain(pol, beta, model);
            g = *std::max_element(gv.begin(), gv.end());
        }
        ++best.policies_enumerated;
        if (best.policies_enumerated == 1 || g < best.gain - 1e-12 * std::max(1.0, std::abs(best.gain))) {
            best.gain = g;
            best.policy = pol;
        }
        // Odometer with the last state varying fastest.
        std::size_t i = space.size();
        while (i > 0) {
            --i;
            if (++pick[i] < choices[i].size())
                break;
            pick[i] = 0;
            if (i == 0)
                return best;
        }
        if (space.size() == 0)
            return best;
    }
}

} // namespace ehmdp
