#pragma once

// Lagrangian outer loop: search for the smallest multiplier whose optimal
// policy meets the grid-power budget, then mix the two policies adjacent to
// it so the budget is met with equality.

#include "ehmdp/errors.hpp"
#include "ehmdp/mdp.hpp"
#include "ehmdp/model.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <vector>

namespace ehmdp {

enum class SearchMode { bisection, stochastic_approximation };

struct ConstrainedSolverConfig {
    double beta_init = 1e4;
    double nu = 0.0;              ///< 0 selects max(0.01 beta*, nu_floor)
    double nu_floor = 1e-6;
    std::size_t nu_widenings = 6; ///< x10 retries when K+ and K- sit on one side
    double k_tolerance = 0.0;     ///< 0 selects 1e-3 * p_bar (or 1e-9 if p_bar = 0)
    std::size_t max_outer_iters = 20000;
    SearchMode search_mode = SearchMode::bisection;
    double beta_rel_tol = 1e-6;   ///< bisection stops when hi/lo - 1 < this
    double beta_floor = 1e-10;    ///< below this the constraint is treated as inactive
    double sa_scale = 1.0;        ///< step beta += sa_scale / n * (K - p_bar)
    double sa_gap = 1e-3;         ///< SA stops when best feasible - best infeasible < this
    SolverConfig inner;           ///< beta is overwritten per trial

    double resolved_k_tolerance(double p_bar) const {
        if (k_tolerance > 0.0)
            return k_tolerance;
        return p_bar > 0.0 ? 1e-3 * p_bar : 1e-9;
    }
};

struct TracePoint {
    std::size_t iteration = 0;
    double beta = 0.0;
    double j = 0.0;
    double b = 0.0;
    double k = 0.0;
};

struct BetaSearchResult {
    double beta_star = 0.0;
    DeterministicPolicy policy;
    PolicyEvaluation evaluation;
    double beta_infeasible = 0.0; ///< largest multiplier seen with K > p_bar (0 if none)
    std::vector<TracePoint> trace;
};

enum class SolutionKind { single, mixed };

struct ConstrainedSolution {
    SolutionKind kind = SolutionKind::single;
    Policy policy;
    double beta_star = 0.0;
    double xi = 1.0;              ///< probability of the plus policy (mixed only)
    double xi_interpolated = 1.0; ///< root of xi K+ + (1 - xi) K- = p_bar
    double beta_plus = 0.0, beta_minus = 0.0;
    double k_plus = 0.0, k_minus = 0.0;
    double b_plus = 0.0, b_minus = 0.0;
    double nu = 0.0;
    std::size_t nu_widenings_used = 0;
    double achieved_b = 0.0;
    double achieved_k = 0.0;
    std::vector<TracePoint> trace;
};

/// Solves UP_beta for arbitrary beta, caching results and warm-starting RVI
/// from the nearest multiplier already solved.
class LagrangianOracle {
public:
    struct Entry {
        DeterministicPolicy policy;
        PolicyEvaluation evaluation;
        std::vector<double> bias;
    };

    LagrangianOracle(const CompiledMdp& mdp, SolverConfig inner) : mdp_(mdp), inner_(inner) {}

    const Entry& solve(double beta) {
        if (auto it = cache_.find(beta); it != cache_.end())
            return it->second;
        SolverConfig cfg = inner_;
        cfg.beta = beta;
        const std::vector<double>* warm = nullptr;
        if (!cache_.empty()) {
            auto it = cache_.lower_bound(beta);
            if (it == cache_.end())
                --it;
            warm = &it->second.bias;
        }
        auto rvi = relative_value_iteration(mdp_, cfg, warm);
        Entry e;
        e.evaluation = evaluate_policy(rvi.policy, beta, mdp_.model());
        e.policy = std::move(rvi.policy);
        e.bias = std::move(rvi.bias.values);
        trace_.push_back({trace_.size() + 1, beta, e.evaluation.gain_j, e.evaluation.mean_queue_b,
                          e.evaluation.mean_grid_k});
        return cache_.emplace(beta, std::move(e)).first->second;
    }

    const std::vector<TracePoint>& trace() const { return trace_; }

private:
    const CompiledMdp& mdp_;
    SolverConfig inner_;
    std::map<double, Entry> cache_;
    std::vector<TracePoint> trace_;
};

namespace detail {

inline void check_constrained(const ConstrainedSolverConfig& cfg) {
    if (!(cfg.beta_init > 0.0))
        throw ValidationError("constrained: beta_init must be positive");
    if (cfg.nu < 0.0 || !(cfg.nu_floor > 0.0))
        throw ValidationError("constrained: nu must be positive");
    if (cfg.k_tolerance < 0.0)
        throw ValidationError("constrained: k_tolerance must be positive");
    if (cfg.max_outer_iters == 0)
        throw ValidationError("constrained: max_outer_iters must be positive");
}

inline BetaSearchResult bisection_search(LagrangianOracle& oracle, const ConstrainedSolverConfig& cfg,
                                         double p_bar, double k_tol) {
    BetaSearchResult out;
    const auto& top = oracle.solve(cfg.beta_init);
    if (top.evaluation.mean_grid_k > p_bar + k_tol)
        throw InfeasibleBudget("grid power " + std::to_string(top.evaluation.mean_grid_k) +
                               " exceeds the budget even at beta_init = " +
                               std::to_string(cfg.beta_init));
    const auto& zero = oracle.solve(0.0);
    if (zero.evaluation.mean_grid_k <= p_bar) {
        out.beta_star = 0.0;
        out.policy = zero.policy;
        out.evaluation = zero.evaluation;
        return out;
    }
    double hi = cfg.beta_init;
    double lo = hi;
    std::size_t iters = 0;
    // Walk down by decades until the budget is violated.
    while (true) {
        lo = hi * 0.1;
        if (lo < cfg.beta_floor) {
            lo = 0.0;
            break;
        }
        if (++iters > cfg.max_outer_iters)
            throw NonConvergence("beta search: bracketing did not terminate", iters, hi);
        if (oracle.solve(lo).evaluation.mean_grid_k > p_bar)
            break;
        hi = lo;
    }
    while (lo > 0.0 && hi / lo - 1.0 > cfg.beta_rel_tol) {
        if (++iters > cfg.max_outer_iters)
            throw NonConvergence("beta search: bisection did not converge", iters, hi - lo);
        const double mid = std::sqrt(lo * hi);
        if (oracle.solve(mid).evaluation.mean_grid_k <= p_bar)
            hi = mid;
        else
            lo = mid;
    }
    const auto& best = oracle.solve(hi);
    out.beta_star = hi;
    out.beta_infeasible = lo;
    out.policy = best.policy;
    out.evaluation = best.evaluation;
    return out;
}

inline BetaSearchResult sa_search(LagrangianOracle& oracle, const ConstrainedSolverConfig& cfg,
                                  double p_bar, double k_tol) {
    BetaSearchResult out;
    double beta = cfg.beta_init;
    const auto& first = oracle.solve(beta);
    if (first.evaluation.mean_grid_k > p_bar + k_tol)
        throw InfeasibleBudget("grid power " + std::to_string(first.evaluation.mean_grid_k) +
                               " exceeds the budget even at beta_init = " +
                               std::to_string(cfg.beta_init));
    double feasible = std::numeric_limits<double>::infinity();
    double infeasible = 0.0;
    bool seen_infeasible = false;
    for (std::size_t n = 1; n <= cfg.max_outer_iters; ++n) {
        const double k = oracle.solve(beta).evaluation.mean_grid_k;
        if (k <= p_bar)
            feasible = std::min(feasible, beta);
        else {
            infeasible = std::max(infeasible, beta);
            seen_infeasible = true;
        }
        if (feasible == 0.0)
            break;
        if (seen_infeasible && feasible - infeasible < cfg.sa_gap)
            break;
        beta = std::max(0.0, beta + cfg.sa_scale / static_cast<double>(n) * (k - p_bar));
        if (n == cfg.max_outer_iters)
            throw NonConvergence("stochastic approximation did not close its bracket", n,
                                 feasible - infeasible);
    }
    const auto& best = oracle.solve(feasible);
    out.beta_star = feasible;
    out.beta_infeasible = infeasible;
    out.policy = best.policy;
    out.evaluation = best.evaluation;
    return out;
}

} // namespace detail

/// Smallest beta (within tolerance) whose UP_beta policy satisfies K <= p_bar.
inline BetaSearchResult beta_star_search(const CompiledMdp& mdp, const ConstrainedSolverConfig& cfg) {
    detail::check_constrained(cfg);
    const double p_bar = mdp.model().params().p_bar;
    const double k_tol = cfg.resolved_k_tolerance(p_bar);
    LagrangianOracle oracle(mdp, cfg.inner);
    BetaSearchResult res = cfg.search_mode == SearchMode::bisection
                               ? detail::bisection_search(oracle, cfg, p_bar, k_tol)
                               : detail::sa_search(oracle, cfg, p_bar, k_tol);
    res.trace = oracle.trace();
    return res;
}

/// Constrained optimum: g_{beta*} when it meets the budget with equality (or
/// the budget is slack at beta* = 0), otherwise the per-epoch mixture of the
/// policies at beta* + nu and beta* - nu.
///
/// xi_interpolated solves xi K+ + (1 - xi) K- = p_bar. Because the
/// stationary law of a per-epoch mixture is not linear in xi, the mixture at
/// xi_interpolated can miss the budget; xi is then refined by bisection on
/// the exact mixture evaluation until K is within tolerance.
inline ConstrainedSolution solve_constrained(const CompiledMdp& mdp, const ConstrainedSolverConfig& cfg) {
    detail::check_constrained(cfg);
    const Model& model = mdp.model();
    const double p_bar = model.params().p_bar;
    const double k_tol = cfg.resolved_k_tolerance(p_bar);
    LagrangianOracle oracle(mdp, cfg.inner);
    BetaSearchResult search = cfg.search_mode == SearchMode::bisection
                                  ? detail::bisection_search(oracle, cfg, p_bar, k_tol)
                                  : detail::sa_search(oracle, cfg, p_bar, k_tol);

    ConstrainedSolution sol;
    sol.beta_star = search.beta_star;
    const double k_star = search.evaluation.mean_grid_k;
    // beta_infeasible = 0 means no positive multiplier violated the budget:
    // the constraint is inactive and the search only walked down to beta_floor.
    if (search.beta_star == 0.0 || search.beta_infeasible == 0.0 || std::abs(k_star - p_bar) <= k_tol) {
        sol.kind = SolutionKind::single;
        sol.policy = search.policy;
        sol.achieved_b = search.evaluation.mean_queue_b;
        sol.achieved_k = k_star;
        sol.trace = oracle.trace();
        return sol;
    }

    double nu = cfg.nu > 0.0 ? cfg.nu : std::max(0.01 * search.beta_star, cfg.nu_floor);
    const double tiny = std::max(cfg.beta_floor, 1e-3 * search.beta_star);
    for (std::size_t attempt = 0;; ++attempt) {
        const double bp = search.beta_star + nu;
        const double bm = std::max(search.beta_star - nu, tiny);
        const auto& plus = oracle.solve(bp);
        const auto& minus = oracle.solve(bm);
        const double kp = plus.evaluation.mean_grid_k;
        const double km = minus.evaluation.mean_grid_k;
        const double bplus = plus.evaluation.mean_queue_b, bminus = minus.evaluation.mean_queue_b;
        if (km > p_bar && p_bar > kp && bplus <= bminus + 1e-12 * std::max(1.0, std::abs(bminus))) {
            // The feasible side already attains the lower queue: no mixing needed.
            sol.kind = SolutionKind::single;
            sol.beta_plus = bp;
            sol.policy = plus.policy;
            sol.achieved_b = bplus;
            sol.achieved_k = kp;
            break;
        }
        if (km > p_bar && p_bar > kp) {
            sol.kind = SolutionKind::mixed;
            sol.nu = nu;
            sol.nu_widenings_used = attempt;
            sol.beta_plus = bp;
            sol.beta_minus = bm;
            sol.k_plus = kp;
            sol.k_minus = km;
            sol.b_plus = plus.evaluation.mean_queue_b;
            sol.b_minus = minus.evaluation.mean_queue_b;
            sol.xi_interpolated = (p_bar - km) / (kp - km);
            MixedPolicy mix{plus.policy, minus.policy, sol.xi_interpolated};
            auto ev = evaluate_policy(mix, search.beta_star, model);
            if (std::abs(ev.mean_grid_k - p_bar) > k_tol) {
                // K(0) = K- > p_bar > K+ = K(1); bisect on the exact mixture.
                double lo = 0.0, hi = 1.0;
                for (int it = 0; it < 200 && std::abs(ev.mean_grid_k - p_bar) > 1e-2 * k_tol; ++it) {
                    mix.xi = 0.5 * (lo + hi);
                    ev = evaluate_policy(mix, search.beta_star, model);
                    if (ev.mean_grid_k > p_bar)
                        lo = mix.xi;
                    else
                        hi = mix.xi;
                }
            }
            sol.xi = mix.xi;
            sol.achieved_b = ev.mean_queue_b;
            sol.achieved_k = ev.mean_grid_k;
            sol.policy = std::move(mix);
            break;
        }
        if (attempt >= cfg.nu_widenings)
            throw NonConvergence("mixing: K+ and K- stay on one side of the budget after widening nu",
                                 attempt + 1, nu);
        nu *= 10.0;
    }
    sol.trace = oracle.trace();
    return sol;
}

} // namespace ehmdp
