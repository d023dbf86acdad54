// Command-line front end: solve, simulate, sweep and verify a model config.
//
// Exit codes: 0 success, 1 internal error, 2 invalid input, 3 non-convergence
// or infeasible budget, 4 a hard certificate failed.

#include "ehmdp/ehmdp.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace ehmdp;

namespace {

constexpr const char* kVersion = "1.0.0";

struct Options {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<double> beta;
    bool constrained = false;
    std::string policy = "optimal";
    std::vector<std::string> overrides;
    std::size_t threads = 1;
};

class Run {
public:
    Run(std::string subcommand, const Options& opt) : sub_(std::move(subcommand)), opt_(opt) {
        fs::create_directories(opt_.out);
        rc_ = RunConfig::from_file(opt_.config, opt_.overrides);
        if (opt_.seed)
            rc_.set_seed(*opt_.seed);
        if (opt_.beta)
            rc_.set_beta(*opt_.beta);
    }

    const RunConfig& config() const { return rc_; }

    void write(const std::string& name, const std::string& text) {
        write_text((fs::path(opt_.out) / name).string(), text);
        artifacts_.push_back(name);
    }

    void write(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

    // The thread count and output directory are left out so that reruns
    // compare byte for byte.
    void manifest() {
        json m{{"tool", "ehmdp_cli"},
               {"version", kVersion},
               {"subcommand", sub_},
               {"config_path", opt_.config},
               {"seed", rc_.doc["simulation"]["seed"]},
               {"overrides", opt_.overrides},
               {"flags", {{"beta", rc_.doc["solver"]["beta"]}, {"constrained", opt_.constrained},
                          {"policy", opt_.policy}}},
               {"resolved_config", rc_.doc}};
        artifacts_.push_back("manifest.json");
        m["artifacts"] = artifacts_;
        write_text((fs::path(opt_.out) / "manifest.json").string(), m.dump(2) + "\n");
    }

private:
    std::string sub_;
    Options opt_;
    RunConfig rc_;
    std::vector<std::string> artifacts_;
};

struct Solved {
    Policy policy;
    double beta = 0.0;
    json summary;
    std::string trace;
};

Solved solve_model(const CompiledMdp& mdp, const RunConfig& rc, bool constrained) {
    Solved s;
    const Model& model = mdp.model();
    if (constrained) {
        const auto sol = solve_constrained(mdp, rc.constrained());
        s.policy = sol.policy;
        s.beta = sol.beta_star;
        const auto ev = evaluate_policy(sol.policy, sol.beta_star, model);
        s.summary = evaluation_json(ev);
        s.summary["mode"] = "constrained";
        s.summary["kind"] = sol.kind == SolutionKind::mixed ? "mixed" : "single";
        s.summary["beta_star"] = sol.beta_star;
        s.summary["xi"] = sol.xi;
        s.summary["xi_interpolated"] = sol.xi_interpolated;
        s.summary["beta_plus"] = sol.beta_plus;
        s.summary["beta_minus"] = sol.beta_minus;
        s.summary["k_plus"] = sol.k_plus;
        s.summary["k_minus"] = sol.k_minus;
        s.summary["b_plus"] = sol.b_plus;
        s.summary["b_minus"] = sol.b_minus;
        s.summary["nu"] = sol.nu;
        s.summary["achieved_b"] = sol.achieved_b;
        s.summary["achieved_k"] = sol.achieved_k;
        s.summary["p_bar"] = model.params().p_bar;
        CsvWriter csv({"iteration", "beta", "j", "b", "k"});
        for (const auto& t : sol.trace) {
            csv.cell(t.iteration).cell(t.beta).cell(t.j).cell(t.b).cell(t.k);
            csv.end_row();
        }
        s.trace = csv.str();
    } else {
        SolverConfig cfg = rc.solver();
        cfg.record_trace = true;
        const auto rvi = relative_value_iteration(mdp, cfg);
        s.policy = rvi.policy;
        s.beta = cfg.beta;
        s.summary = evaluation_json(evaluate_policy(rvi.policy, cfg.beta, model));
        s.summary["mode"] = "lagrangian";
        s.summary["beta"] = cfg.beta;
        s.summary["gain"] = rvi.gain;
        s.summary["iterations"] = rvi.iterations;
        s.summary["span"] = rvi.span;
        CsvWriter csv({"iteration", "span"});
        for (std::size_t i = 0; i < rvi.span_trace.size(); ++i) {
            csv.cell(i + 1).cell(rvi.span_trace[i]);
            csv.end_row();
        }
        s.trace = csv.str();
    }
    s.summary["states"] = mdp.size();
    return s;
}

int cmd_solve(Run& run, const Options& opt) {
    const Model model = run.config().model();
    const CompiledMdp mdp(model);
    const auto s = solve_model(mdp, run.config(), opt.constrained);
    run.write("policy.csv", policy_csv(s.policy, model));
    run.write("eval.json", s.summary);
    run.write("trace.csv", s.trace);
    run.manifest();
    return 0;
}

std::string trace_csv(const SimResult& r) {
    CsvWriter csv({"slot", "q", "h", "a", "eb", "e", "r", "w", "required_power", "grid_power", "spilled",
                   "dropped", "used_plus"});
    for (const auto& t : r.trace) {
        csv.cell(t.slot).cell(t.state.q).cell(t.state.h).cell(t.state.a).cell(t.state.eb).cell(t.state.e);
        csv.cell(t.action.r).cell(t.action.w).cell(t.required_power).cell(t.grid_power);
        csv.cell(t.spilled).cell(t.dropped).cell(t.used_plus ? 1 : 0);
        csv.end_row();
    }
    return csv.str();
}

int cmd_simulate(Run& run, const Options& opt) {
    const Model model = run.config().model();
    const SimConfig sim = run.config().simulation();
    json out{{"policy", opt.policy}};
    SimResult res;
    if (opt.policy == "optimal") {
        const CompiledMdp mdp(model);
        const auto s = solve_model(mdp, run.config(), opt.constrained);
        out["solve"] = s.summary;
        res = run_simulation(s.policy, model, sim);
    } else if (opt.policy == "mixed") {
        const auto cal = calibrate_mixed_xi(model, sim);
        out["xi"] = cal.xi;
        out["xi_linear"] = cal.xi_linear;
        out["g_radical"] = cal.g_radical;
        out["g_conservative"] = cal.g_conservative;
        out["feasible"] = cal.feasible;
        res = cal.feasible ? run_simulation(SimPolicy::heuristic(HeuristicKind::mixed, model, cal.xi), model, sim)
                           : cal.conservative;
    } else {
        res = run_simulation(SimPolicy::heuristic(parse_heuristic(opt.policy), model), model, sim);
    }
    out["result"] = sim_json(res);
    out["stationary_mean_arrival"] = model.arrival().stationary_mean();
    run.write("sim.json", out);
    if (sim.record_trace)
        run.write("sim_trace.csv", trace_csv(res));
    run.manifest();
    return 0;
}

int cmd_sweep(Run& run, const Options& opt) {
    const auto& block = run.config().doc["sweep"];
    const auto kind = detail::get<std::string>(block, "kind", "sweep");
    const auto values = detail::get<std::vector<double>>(block, "values", "sweep");
    if (values.empty())
        throw ValidationError("sweep: 'sweep.values' is empty");
    const auto tmpl = run.config().model_template();
    const SimConfig sim = run.config().simulation();
    std::string text;
    if (kind == "arrival" || kind == "budget") {
        const auto heuristic = parse_heuristic(detail::get<std::string>(block, "policy", "sweep"));
        if (heuristic == HeuristicKind::mixed)
            throw ValidationError("sweep: arrival and budget sweeps take radical or conservative");
        if (kind == "arrival") {
            CsvWriter csv({"abar", "mean_grid_power", "mean_grid_power_se", "mean_queue", "reference_power",
                           "overflow_fraction"});
            for (const auto& r : sweep_arrival(tmpl, values, heuristic, sim, opt.threads)) {
                csv.cell(r.abar).cell(r.mean_grid_power).cell(r.mean_grid_power_se).cell(r.mean_queue);
                csv.cell(r.reference_power).cell(r.overflow_fraction);
                csv.end_row();
            }
            text = csv.str();
        } else {
            CsvWriter csv({"p_bar", "mean_queue", "mean_queue_se", "mean_grid_power", "overflow_fraction"});
            for (const auto& r : sweep_budget(tmpl, values, heuristic, sim, opt.threads)) {
                csv.cell(r.p_bar).cell(r.mean_queue).cell(r.mean_queue_se).cell(r.mean_grid_power);
                csv.cell(r.overflow_fraction);
                csv.end_row();
            }
            text = csv.str();
        }
    } else if (kind == "channel") {
        const auto levels = detail::get<std::size_t>(block, "levels", "sweep");
        CsvWriter csv({"hbar", "queue_radical", "queue_radical_se", "queue_mixed", "queue_mixed_se",
                       "queue_conservative", "queue_conservative_se", "grid_radical", "grid_mixed",
                       "grid_mixed_se", "grid_conservative", "xi", "mixed_feasible"});
        for (const auto& r : sweep_channel(tmpl, values, levels, sim, opt.threads)) {
            csv.cell(r.hbar).cell(r.queue_radical).cell(r.queue_radical_se).cell(r.queue_mixed);
            csv.cell(r.queue_mixed_se).cell(r.queue_conservative).cell(r.queue_conservative_se);
            csv.cell(r.grid_radical).cell(r.grid_mixed).cell(r.grid_mixed_se).cell(r.grid_conservative);
            csv.cell(r.xi).cell(r.mixed_feasible ? 1 : 0);
            csv.end_row();
        }
        text = csv.str();
    } else {
        throw ValidationError("sweep: kind must be arrival, budget or channel");
    }
    run.write("sweep.csv", text);
    run.manifest();
    return 0;
}

int cmd_verify(Run& run, const Options&) {
    const Model model = run.config().model();
    const CompiledMdp mdp(model);
    const SolverConfig cfg = run.config().solver();
    const auto reports = certify(mdp, cfg.beta, run.config().verify(), cfg);
    json arr = json::array();
    std::ostringstream txt;
    txt << "certificate                        status          hard  worst_violation\n";
    for (const auto& r : reports) {
        arr.push_back(report_json(r, mdp.space()));
        std::string name = r.name, status = to_string(r.status);
        name.resize(std::max<std::size_t>(name.size(), 35), ' ');
        status.resize(std::max<std::size_t>(status.size(), 16), ' ');
        txt << name << status << (r.hard ? "yes   " : "no    ") << fmt(r.worst_violation) << "\n";
    }
    const bool failed = hard_failure(reports);
    txt << (failed ? "RESULT: FAIL\n" : "RESULT: PASS\n");
    run.write("report.json", json{{"beta", cfg.beta}, {"states", mdp.size()}, {"pass", !failed}, {"certificates", arr}});
    run.write("report.txt", txt.str());
    run.manifest();
    std::cout << txt.str();
    return failed ? 4 : 0;
}

int report_error(const Options& opt, const std::string& type, const std::string& message, int code,
                 json extra = json::object()) {
    std::cerr << "error (" << type << "): " << message << "\n";
    try {
        if (!opt.out.empty()) {
            fs::create_directories(opt.out);
            extra["error"] = type;
            extra["message"] = message;
            extra["exit_code"] = code;
            write_text((fs::path(opt.out) / "error.json").string(), extra.dump(2) + "\n");
        }
    } catch (...) {
    }
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Delay-optimal transmission scheduling with harvested and grid energy"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    Options opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "JSON model/run config")->required();
        sub->add_option("--out", opt.out, "output directory")->capture_default_str();
        sub->add_option("--seed", opt.seed, "simulation seed (overrides simulation.seed)");
        sub->add_option("--beta", opt.beta, "Lagrange multiplier (overrides solver.beta)");
        sub->add_flag("--constrained", opt.constrained, "solve the budget-constrained problem");
        sub->add_option("--policy", opt.policy, "policy to simulate")
            ->check(CLI::IsMember({"optimal", "radical", "conservative", "mixed"}))
            ->capture_default_str();
        sub->add_option("--set", opt.overrides, "override a config key: key.path=value");
        sub->add_option("--threads", opt.threads, "worker threads for sweeps")->check(CLI::PositiveNumber);
    };
    std::vector<std::pair<CLI::App*, int (*)(Run&, const Options&)>> subs{
        {app.add_subcommand("solve", "solve UP_beta or the constrained problem"), cmd_solve},
        {app.add_subcommand("simulate", "simulate a policy"), cmd_simulate},
        {app.add_subcommand("sweep", "parameter sweep of heuristic policies"), cmd_sweep},
        {app.add_subcommand("verify", "solve and run the structural certificates"), cmd_verify},
    };
    for (auto& [sub, fn] : subs)
        add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        for (auto& [sub, fn] : subs)
            if (sub->parsed()) {
                Run run(sub->get_name(), opt);
                return fn(run, opt);
            }
    } catch (const NonConvergence& e) {
        return report_error(opt, "non_convergence", e.what(), 3,
                            json{{"iterations", e.iterations()}, {"residual", e.residual()}});
    } catch (const InfeasibleBudget& e) {
        return report_error(opt, "infeasible_budget", e.what(), 3);
    } catch (const MultichainError& e) {
        return report_error(opt, "multichain", e.what(), 3, json{{"recurrent_classes", e.recurrent_classes()}});
    } catch (const ValidationError& e) {
        return report_error(opt, "validation", e.what(), 2);
    } catch (const DomainError& e) {
        return report_error(opt, "validation", e.what(), 2);
    } catch (const CapacityError& e) {
        return report_error(opt, "capacity", e.what(), 2);
    } catch (const InstanceTooLarge& e) {
        return report_error(opt, "capacity", e.what(), 2);
    } catch (const std::exception& e) {
        return report_error(opt, "internal", e.what(), 1);
    }
    return 1;
}
