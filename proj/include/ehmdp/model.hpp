#pragma once

// Physical model of the energy-harvesting transmitter: power-rate law,
// queue and battery recursions, Markov chains for the exogenous processes
// and the finite state/action enumeration built on top of them.

#include "ehmdp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ehmdp {

/// Physical constants and discretization of the model.
///
/// Energies (battery, harvest, capacity) live on the grid
/// {0, delta_e, 2 delta_e, ...}; battery draws are taken on the same grid so
/// the battery state never leaves it. A draw of k quanta removes k*delta_e
/// energy and corresponds to the power k*delta_e/tau.
struct ModelParams {
    double tau = 1.0;             ///< slot length
    double bits_per_packet = 1.0; ///< b
    double n_uses = 5.0;          ///< channel uses per slot (N)
    double rho = 1.0;             ///< power scaling, >= 1
    double sigma2 = 1.0;          ///< noise variance
    double circuit_c = 0.0;       ///< circuit power paid whenever r > 0
    double e_max = 0.0;           ///< battery capacity
    double p_bar = 0.0;           ///< average grid-power budget
    double delta_e = 1.0;         ///< energy quantum
    int q_max = 0;                ///< buffer truncation level (packets)
    /// Cap battery draws at the required power (w <= P(x,r)).
    bool restrict_to_required = true;

    double theta() const { return 2.0 * std::log(2.0) * bits_per_packet / n_uses; }

    /// Battery draw of `units` quanta expressed as power.
    double power_of_units(long long units) const {
        return static_cast<double>(units) * delta_e / tau;
    }

    double energy_of_units(long long units) const {
        return static_cast<double>(units) * delta_e;
    }

    /// Converts an energy that must sit on the grid into a quantum count.
    int energy_units(double energy, const std::string& what) const {
        if (!(energy >= 0.0))
            throw ValidationError(what + " must be a nonnegative energy");
        const double k = std::round(energy / delta_e);
        if (std::abs(k * delta_e - energy) > 1e-9 * std::max(1.0, std::abs(energy)))
            throw ValidationError(what + " = " + std::to_string(energy) +
                                  " is not a multiple of delta_e = " + std::to_string(delta_e));
        if (k > static_cast<double>(std::numeric_limits<int>::max()))
            throw ValidationError(what + " has too many energy quanta");
        return static_cast<int>(k);
    }

    int battery_capacity_units() const { return energy_units(e_max, "e_max"); }

    void validate() const {
        auto require = [](bool ok, const std::string& msg) {
            if (!ok)
                throw ValidationError(msg);
        };
        require(tau > 0.0 && std::isfinite(tau), "tau must be positive");
        require(bits_per_packet > 0.0, "b must be positive");
        require(n_uses > 0.0, "n_uses must be positive");
        require(rho >= 1.0, "rho must be >= 1");
        require(sigma2 > 0.0, "sigma2 must be positive");
        require(circuit_c >= 0.0, "circuit_c must be >= 0");
        require(delta_e > 0.0 && std::isfinite(delta_e), "delta_e must be positive");
        require(p_bar >= 0.0, "p_bar must be >= 0");
        require(q_max >= 0, "q_max must be >= 0");
        require(theta() > 0.0, "theta must be positive");
        (void)battery_capacity_units();
    }
};

/// Finite-state Markov chain over ordered values (channel gains, packet
/// arrivals or harvested energies).
struct MarkovChainSpec {
    std::vector<double> values;
    std::vector<std::vector<double>> transition;

    std::size_t size() const { return values.size(); }

    static MarkovChainSpec singleton(double value) { return {{value}, {{1.0}}}; }

    /// i.i.d. chain: every row equals `probs`.
    static MarkovChainSpec iid(std::vector<double> vals, const std::vector<double>& probs) {
        MarkovChainSpec c;
        c.values = std::move(vals);
        c.transition.assign(c.values.size(), probs);
        return c;
    }

    void validate(const std::string& name) const {
        if (values.empty())
            throw ValidationError(name + ": chain has no values");
        for (std::size_t i = 1; i < values.size(); ++i)
            if (!(values[i] > values[i - 1]))
                throw ValidationError(name + ": values must be strictly increasing");
        if (transition.size() != values.size())
            throw ValidationError(name + ": transition must have one row per value");
        for (std::size_t i = 0; i < transition.size(); ++i) {
            const auto& row = transition[i];
            if (row.size() != values.size())
                throw ValidationError(name + ": transition row " + std::to_string(i) +
                                      " has wrong length");
            double sum = 0.0;
            for (double p : row) {
                if (!(p >= 0.0) || !std::isfinite(p))
                    throw ValidationError(name + ": transition row " + std::to_string(i) +
                                          " has a negative or non-finite entry");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-12) {
                std::ostringstream os;
                os.precision(15);
                os << name << ": transition row " << i << " sums to " << sum << ", expected 1";
                throw ValidationError(os.str());
            }
        }
    }

    /// Stationary law. Assumes a single recurrent class.
    std::vector<double> stationary() const {
        const auto n = static_cast<Eigen::Index>(size());
        Eigen::MatrixXd a(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                a(i, j) = transition[j][i] - (i == j ? 1.0 : 0.0);
        a.row(n - 1).setOnes();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
        rhs(n - 1) = 1.0;
        Eigen::VectorXd pi = a.fullPivLu().solve(rhs);
        std::vector<double> out(pi.data(), pi.data() + n);
        for (double& p : out)
            p = std::max(p, 0.0);
        const double s = std::accumulate(out.begin(), out.end(), 0.0);
        for (double& p : out)
            p /= s;
        return out;
    }

    double stationary_mean() const {
        const auto pi = stationary();
        double m = 0.0;
        for (std::size_t i = 0; i < size(); ++i)
            m += pi[i] * values[i];
        return m;
    }
};

/// System state (q, h, a, e_b, e). Exogenous coordinates are indices into
/// their chains; the battery is a count of energy quanta.
struct SystemState {
    int q = 0;
    std::size_t h = 0;
    std::size_t a = 0;
    int eb = 0;
    std::size_t e = 0;

    friend bool operator==(const SystemState&, const SystemState&) = default;
};

/// Transmit rate r (packets) and battery draw w in energy quanta, so the
/// energy taken from the battery is w*delta_e and the power is w*delta_e/tau.
struct Action {
    int r = 0;
    int w = 0;

    friend bool operator==(const Action&, const Action&) = default;
    friend auto operator<=>(const Action&, const Action&) = default;
};

/// Remaining buffer u = q - r and remaining battery eta = e_b - w (quanta).
struct ResidualView {
    int u = 0;
    int eta = 0;
};

inline ResidualView residual(const SystemState& x, const Action& act) {
    return {x.q - act.r, x.eb - act.w};
}

// ---------------------------------------------------------------------------
// One-step physics

/// Total power needed to send r packets reliably over gain h, including the
/// circuit overhead C whenever r > 0.
inline double required_power(const ModelParams& p, double h, int r) {
    if (!(h > 0.0))
        throw DomainError("required_power: channel gain must be positive");
    if (r < 0)
        throw DomainError("required_power: rate must be nonnegative");
    if (r == 0)
        return 0.0;
    return p.rho * (p.sigma2 / h) * std::expm1(p.theta() * r) + p.circuit_c;
}

/// Largest integer rate whose required power fits in `budget` (0 if none).
inline int power_inverse(const ModelParams& p, double h, double budget) {
    if (!(h > 0.0))
        throw DomainError("power_inverse: channel gain must be positive");
    if (!(budget >= 0.0) || budget < p.circuit_c)
        return 0;
    const double scale = p.rho * p.sigma2 / h;
    const double guess = std::log1p((budget - p.circuit_c) / scale) / p.theta();
    if (!std::isfinite(guess) || guess > 1e9)
        return std::numeric_limits<int>::max() / 2;
    int r = std::max(0, static_cast<int>(std::floor(guess)));
    while (r > 0 && required_power(p, h, r) > budget)
        --r;
    while (required_power(p, h, r + 1) <= budget)
        ++r;
    return r;
}

/// (P - w)^+ for a required power and a battery power.
inline double grid_power(double required, double battery_power) {
    return std::max(required - battery_power, 0.0);
}

struct QueueStep {
    int next = 0;
    int dropped = 0; ///< packets lost to the q_max truncation
};

/// Buffer recursion q' = q - r + a, clamped at q_max.
inline QueueStep step_queue(int q, int r, int a, int q_max) {
    if (r < 0 || r > q)
        throw ContractViolation("step_queue: rate must satisfy 0 <= r <= q");
    const long long raw = static_cast<long long>(q) - r + a;
    if (raw > q_max)
        return {q_max, static_cast<int>(raw - q_max)};
    return {static_cast<int>(raw), 0};
}

struct BatteryStep {
    int next = 0;
    int spilled = 0; ///< quanta lost because the battery was full
};

/// Battery recursion e_b' = min(e_b - w + e, E_max), all in quanta.
inline BatteryStep step_battery(int eb, int w, int e, int capacity) {
    if (w < 0 || w > eb)
        throw ContractViolation("step_battery: draw must satisfy 0 <= w*tau <= e_b");
    const long long raw = static_cast<long long>(eb) - w + e;
    if (raw > capacity)
        return {capacity, static_cast<int>(raw - capacity)};
    return {static_cast<int>(raw), 0};
}

/// Largest number of quanta k <= available with k*delta_e/tau <= power.
inline int floor_to_grid(const ModelParams& p, double power, int available) {
    if (power <= 0.0 || available <= 0)
        return 0;
    const double k = std::floor(power * p.tau / p.delta_e * (1.0 + 1e-12) + 1e-12);
    if (k >= available)
        return available;
    return static_cast<int>(k);
}

// ---------------------------------------------------------------------------

/// A validated model: parameters plus the channel, arrival and harvest chains.
class Model {
public:
    Model(ModelParams params, MarkovChainSpec channel, MarkovChainSpec arrival,
          MarkovChainSpec harvest)
        : params_(params), channel_(std::move(channel)), arrival_(std::move(arrival)),
          harvest_(std::move(harvest)) {
        params_.validate();
        channel_.validate("channel");
        arrival_.validate("arrival");
        harvest_.validate("harvest");
        for (double h : channel_.values)
            if (!(h > 0.0))
                throw ValidationError("channel: gains must be positive");
        for (double a : arrival_.values) {
            if (a < 0.0 || std::floor(a) != a)
                throw ValidationError("arrival: values must be nonnegative integers");
            arrivals_.push_back(static_cast<int>(a));
        }
        for (double e : harvest_.values)
            harvest_units_.push_back(params_.energy_units(e, "harvest value"));
        capacity_ = params_.battery_capacity_units();
        if (params_.q_max < *std::max_element(arrivals_.begin(), arrivals_.end()))
            throw ValidationError("q_max must be at least the largest arrival");
    }

    const ModelParams& params() const { return params_; }
    const MarkovChainSpec& channel() const { return channel_; }
    const MarkovChainSpec& arrival() const { return arrival_; }
    const MarkovChainSpec& harvest() const { return harvest_; }

    int capacity_units() const { return capacity_; }
    int battery_levels() const { return capacity_ + 1; }
    int arrival_packets(std::size_t a) const { return arrivals_[a]; }
    int harvest_units(std::size_t e) const { return harvest_units_[e]; }
    double gain(const SystemState& x) const { return channel_.values[x.h]; }

    bool valid_state(const SystemState& x) const {
        return x.q >= 0 && x.q <= params_.q_max && x.h < channel_.size() &&
               x.a < arrival_.size() && x.eb >= 0 && x.eb <= capacity_ && x.e < harvest_.size();
    }

    double required_power(const SystemState& x, int r) const {
        return ehmdp::required_power(params_, gain(x), r);
    }

    double battery_power(const Action& act) const { return params_.power_of_units(act.w); }

    /// Largest grid draw allowed for rate r under the w <= P(x,r) cap.
    int draw_cap(const SystemState& x, int r) const {
        return floor_to_grid(params_, required_power(x, r), x.eb);
    }

    bool feasible(const SystemState& x, const Action& act, bool restrict_to_required) const {
        if (act.r < 0 || act.r > x.q || act.w < 0 || act.w > x.eb)
            return false;
        if (restrict_to_required && act.w > draw_cap(x, act.r))
            return false;
        return true;
    }

    bool feasible(const SystemState& x, const Action& act) const {
        return feasible(x, act, params_.restrict_to_required);
    }

    /// Grid power (P(x,r) - w)^+ of a feasible action.
    double grid_power(const SystemState& x, const Action& act) const {
        if (!valid_state(x) || !feasible(x, act))
            throw ContractViolation("grid_power: action is infeasible in this state");
        return ehmdp::grid_power(required_power(x, act.r), battery_power(act));
    }

    /// Feasible actions in lexicographic (r, w) order; (0,0) always first.
    std::vector<Action> feasible_actions(const SystemState& x, bool restrict_to_required) const {
        std::vector<Action> out;
        for (int r = 0; r <= x.q; ++r) {
            const int wmax = restrict_to_required ? draw_cap(x, r) : x.eb;
            for (int w = 0; w <= wmax; ++w)
                out.push_back({r, w});
        }
        return out;
    }

    std::vector<Action> feasible_actions(const SystemState& x) const {
        return feasible_actions(x, params_.restrict_to_required);
    }

    /// Deterministic part of the successor: (q', e_b') with clamps.
    std::pair<QueueStep, BatteryStep> step(const SystemState& x, const Action& act) const {
        return {step_queue(x.q, act.r, arrivals_[x.a], params_.q_max),
                step_battery(x.eb, act.w, harvest_units_[x.e], capacity_)};
    }

private:
    ModelParams params_;
    MarkovChainSpec channel_;
    MarkovChainSpec arrival_;
    MarkovChainSpec harvest_;
    std::vector<int> arrivals_;
    std::vector<int> harvest_units_;
    int capacity_ = 0;
};

/// Free-function form used by callers that pass the restriction flag explicitly.
inline std::vector<Action> feasible_actions(const SystemState& x, const Model& model,
                                            bool restrict_to_required) {
    return model.feasible_actions(x, restrict_to_required);
}

// ---------------------------------------------------------------------------

/// Bijection between SystemState and [0, size()).
///
/// index = ((((q * |H| + h) * |A| + a) * B + e_b) * |E| + e), with B the
/// number of battery levels. The ordering is part of the public contract:
/// exported policy tables are written in index order.
class StateSpace {
public:
    static constexpr std::size_t default_limit = 5'000'000;

    explicit StateSpace(const Model& model, std::size_t limit = default_limit)
        : nq_(static_cast<std::size_t>(model.params().q_max) + 1), nh_(model.channel().size()),
          na_(model.arrival().size()), nb_(static_cast<std::size_t>(model.battery_levels())),
          ne_(model.harvest().size()) {
        const long double total = static_cast<long double>(nq_) * nh_ * na_ * nb_ * ne_;
        if (total > static_cast<long double>(limit))
            throw CapacityError("state space has " + std::to_string(static_cast<double>(total)) +
                                " states, above the limit of " + std::to_string(limit));
        size_ = nq_ * nh_ * na_ * nb_ * ne_;
    }

    std::size_t size() const { return size_; }
    std::size_t queue_levels() const { return nq_; }
    std::size_t channel_levels() const { return nh_; }
    std::size_t arrival_levels() const { return na_; }
    std::size_t battery_levels() const { return nb_; }
    std::size_t harvest_levels() const { return ne_; }
    std::size_t exogenous_levels() const { return nh_ * na_ * ne_; }

    std::size_t index(const SystemState& x) const {
        return (((static_cast<std::size_t>(x.q) * nh_ + x.h) * na_ + x.a) * nb_ +
                static_cast<std::size_t>(x.eb)) *
                   ne_ +
               x.e;
    }

    SystemState state(std::size_t i) const {
        SystemState x;
        x.e = i % ne_;
        i /= ne_;
        x.eb = static_cast<int>(i % nb_);
        i /= nb_;
        x.a = i % na_;
        i /= na_;
        x.h = i % nh_;
        x.q = static_cast<int>(i / nh_);
        return x;
    }

private:
    std::size_t nq_, nh_, na_, nb_, ne_;
    std::size_t size_ = 0;
};

} // namespace ehmdp
