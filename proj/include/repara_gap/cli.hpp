/*
   Copyright 2026 The repara_gap Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

// Command dispatch for the repara-gap tool. Kept in a header so tests can
// drive it in-process; tools/repara_gap_cli.cpp only forwards argv.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "repara_gap/bounds.hpp"
#include "repara_gap/config.hpp"
#include "repara_gap/errors.hpp"
#include "repara_gap/gap_lab.hpp"
#include "repara_gap/io.hpp"
#include "repara_gap/mdp_checks.hpp"

namespace repara_gap {

inline constexpr int exit_ok = 0;
inline constexpr int exit_internal = 1;
inline constexpr int exit_usage = 2;

inline constexpr const char* seed_env_var = "REPARA_GAP_SEED";

// Thresholds applied by check-mdp and gradcheck.
inline constexpr double gumbel_tv_limit = 0.01;
inline constexpr double trajectory_tv_limit = 0.02;
inline constexpr double relaxation_limit = 1e-6;
inline constexpr double gradcheck_limit = 1e-4;
inline constexpr double gradcheck_step = 1e-5;
inline constexpr std::size_t gradcheck_probes = 10;

enum class OutputFormat { csv, json };

struct CliOptions {
    std::string verb;
    std::filesystem::path config;
    std::filesystem::path out = "out";
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    OutputFormat format = OutputFormat::csv;
};

namespace detail {

inline std::string exit_code_help()
{
    return "Exit status:\n"
           "  0   success\n"
           "  1   internal error\n"
           "  2   usage error (bad flags, bad " + std::string(seed_env_var) + ")\n"
           "  10  invalid argument\n"
           "  11  SVD did not converge\n"
           "  12  rollout diverged\n"
           "  13  every training run failed\n"
           "  20  config file missing or unreadable\n"
           "  21  config malformed or invalid\n"
           "  30  output could not be written\n"
           "  40  a self-check (check-mdp, gradcheck) failed its threshold\n";
}

inline std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

inline nlohmann::ordered_json ordered(const nlohmann::json& j) { return nlohmann::ordered_json::parse(j.dump()); }

/// Collects every output of a command, then writes them all at the end.
class OutputSet {
public:
    OutputSet(std::filesystem::path dir, OutputFormat format) : dir_(std::move(dir)), format_(format) {}

    void table(const std::string& stem, const CsvTable& t)
    {
        if (format_ == OutputFormat::csv) files_.push_back({stem + ".csv", t.str()});
        else files_.push_back({stem + ".json", dump(t.json())});
    }

    void json(const std::string& stem, const nlohmann::ordered_json& j) { files_.push_back({stem + ".json", dump(j)}); }

    std::vector<std::filesystem::path> commit() const
    {
        ensure_directory(dir_);
        std::vector<std::filesystem::path> written;
        for (const auto& [name, content] : files_) {
            atomic_write(dir_ / name, content);
            written.push_back(dir_ / name);
        }
        return written;
    }

private:
    std::filesystem::path dir_;
    OutputFormat format_;
    std::vector<std::pair<std::string, std::string>> files_;
};

inline double reward_range_for_tanh(const EnvSpec& spec)
{
    // |r| <= 1, so |R| <= sum_t gamma^t and c = 2 sum_t gamma^t.
    double s = 0.0, d = 1.0;
    for (std::size_t t = 0; t <= spec.horizon; ++t) {
        s += d;
        d *= spec.gamma;
    }
    return 2.0 * s;
}

struct TrainedPolicy {
    Env env;
    NoiseSet train_noise;
    NoiseSet test_noise;
    TrainResult result;
};

inline TrainedPolicy train_first_seed(const ExperimentConfig& cfg)
{
    const SweepPoint point = apply_sweep(cfg, std::nullopt);
    const std::uint64_t seed = cfg.seeds.front();
    PolicySpec ps = point.policy;
    ps.policy_seed = seed;
    TrainedPolicy tp{make_env(point.env), train_noise_for(point.env, cfg.train.episodes, seed),
                     test_noise_for(point.env, cfg.test_episodes, seed), {}};
    tp.result = train(tp.env, ps, cfg.train, tp.train_noise);
    return tp;
}

inline double max_state_norm(const Env& env, const PolicyParams& params, const NoiseSet& noise)
{
    double m = 0.0;
    for (const auto& n : noise)
        for (const auto& s : rollout(env, params, n).states) m = std::max(m, norm2(s));
    return m;
}

// ---------------------------------------------------------------------------
// Commands. Each returns the exit status and fills `outputs`.

inline int cmd_check_mdp(const ExperimentConfig& cfg, OutputSet& outputs, std::ostream& out)
{
    MdpCheckConfig mc;
    mc.seed = cfg.seed;
    const MdpCheckReport rep = run_mdp_checks(mc);
    const bool pass = rep.max_gumbel_max_tv < gumbel_tv_limit && rep.max_trajectory_tv < trajectory_tv_limit &&
                      rep.relaxation_nonincreasing && rep.fixed_noise_diff < relaxation_limit;
    nlohmann::ordered_json j = ordered(to_json(rep));
    j["seed"] = cfg.seed;
    j["pass"] = pass;
    outputs.json("check_mdp", j);
    out << "check-mdp: max_tv " << format_double(std::max(rep.max_gumbel_max_tv, rep.max_trajectory_tv))
        << (pass ? " pass" : " FAIL") << "\n";
    return pass ? exit_ok : static_cast<int>(ErrorCode::check_failed);
}

inline int cmd_gradcheck(const ExperimentConfig& cfg, OutputSet& outputs, std::ostream& out)
{
    const SweepPoint point = apply_sweep(cfg, std::nullopt);
    const std::uint64_t seed = cfg.seeds.front();
    PolicySpec ps = point.policy;
    ps.policy_seed = seed;
    const Env env = make_env(point.env);
    const PolicyParams params = init_params(ps);
    const NoiseSet noise = train_noise_for(point.env, cfg.train.episodes, seed);
    const GradCheckResult r = gradient_check(env, params, noise, gradcheck_probes, gradcheck_step,
                                             RngStream(seed, derive_stream_id({0x67726164ULL})));
    const bool pass = r.max_relative_error < gradcheck_limit;
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["probes"] = r.probes;
    j["step"] = gradcheck_step;
    j["max_relative_error"] = r.max_relative_error;
    j["threshold"] = gradcheck_limit;
    j["pass"] = pass;
    outputs.json("gradcheck", j);
    out << "gradcheck: max_relative_error " << format_double(r.max_relative_error) << (pass ? " pass" : " FAIL")
        << "\n";
    return pass ? exit_ok : static_cast<int>(ErrorCode::check_failed);
}

inline int cmd_intrinsic(const ExperimentConfig& cfg, const CliOptions& opt, OutputSet& outputs, std::ostream& out,
                         bool width_sweep)
{
    const GapReport rep = width_sweep ? run_param_sweep(cfg, opt.jobs) : run_intrinsic(cfg, opt.jobs);
    const std::string stem = width_sweep ? "sweep" : "intrinsic";
    outputs.table(stem, intrinsic_table(rep));
    outputs.table(stem + "_aggregate", intrinsic_aggregate_table(rep));
    outputs.table("curve", curve_table(rep.curve));
    out << stem << ": " << rep.rows.size() << " rows, " << rep.failures << " failed\n";
    return exit_ok;
}

inline int cmd_external(const ExperimentConfig& cfg, const CliOptions& opt, OutputSet& outputs, std::ostream& out)
{
    const ExternalReport rep = run_external(cfg, opt.jobs);
    outputs.table("external", external_table(rep));
    outputs.table("external_aggregate", external_aggregate_table(rep));
    outputs.table("curve", curve_table(rep.curve));
    std::size_t diverged = 0;
    for (const auto& r : rep.rows) diverged += r.diverged ? 1 : 0;
    out << "external: " << rep.rows.size() << " rows, " << diverged << " diverged\n";
    return exit_ok;
}

inline int cmd_bounds(const ExperimentConfig& cfg, OutputSet& outputs, std::ostream& out)
{
    const BoundsSpec& b = cfg.bounds;
    BoundInputs in;
    in.gamma = cfg.env.gamma;
    in.horizon = cfg.env.horizon;
    in.zeta = b.zeta;
    in.epsilon = b.epsilon;
    in.m = parameter_count(apply_sweep(cfg, std::nullopt).policy);
    in.n = cfg.train.episodes;
    in.delta = b.delta;
    in.rademacher_c = b.rademacher_c;

    nlohmann::ordered_json j;
    std::optional<TrainedPolicy> tp;
    const bool need_training = !b.constants || (!b.reward_range && cfg.env.reward_kind == RewardKind::linear);
    if (need_training) tp = train_first_seed(cfg);

    if (b.constants) {
        in.constants = *b.constants;
        j["constants_source"] = "config";
    } else {
        const auto& params = tp->result.params;
        in.constants = measured_constants(tp->env, params, max_state_norm(tp->env, params, tp->train_noise));
        j["constants_source"] = "measured";
    }
    if (b.reward_range) {
        in.c = *b.reward_range;
        j["reward_range_source"] = "config";
    } else if (cfg.env.reward_kind == RewardKind::tanh) {
        in.c = reward_range_for_tanh(cfg.env);
        j["reward_range_source"] = "tanh_bound";
    } else {
        double m = 0.0;
        for (const auto& n : tp->train_noise) m = std::max(m, std::abs(episode_return(tp->env, tp->result.params, n)));
        in.c = 2.0 * m;
        j["reward_range_source"] = "empirical_max";
    }
    const BoundReport rep = theorem1_total(in);
    j["report"] = ordered(to_json(rep));
    if (tp) {
        const double train_r = tp->result.final_return;
        const double test_r = mean_return(tp->env, tp->result.params, tp->test_noise);
        j["measured"] = {{"seed", cfg.seeds.front()},
                         {"train_return", train_r},
                         {"test_return", test_r},
                         {"intrinsic_gap", std::abs(train_r - test_r)}};
    }
    outputs.json("bounds", j);
    out << "bounds: theorem1_total " << format_double(rep.theorem1_total) << "\n";
    return exit_ok;
}

inline int cmd_pacbayes(const ExperimentConfig& cfg, OutputSet& outputs, std::ostream& out)
{
    const BoundsSpec& b = cfg.bounds;
    require(b.sigma_q > 0.0, "pacbayes: bounds.sigma_q must be positive");
    const TrainedPolicy tp = train_first_seed(cfg);
    const PolicyParams& theta = tp.result.params;
    const Vector flat = flatten(theta.layers);
    const double kl = gaussian_kl(flat, b.sigma_q, b.sigma_p);
    const double penalty = pac_bayes_penalty(kl, cfg.train.episodes, b.delta);
    const RngStream mc(cfg.seeds.front(), derive_stream_id({0x7061636261796573ULL}));
    const double train_r = mean_return(tp.env, theta, tp.train_noise);
    const double test_r = mean_return(tp.env, theta, tp.test_noise);
    const double perturbed_train = pac_bayes_expected_return(tp.env, theta, b.sigma_q, tp.train_noise, b.n_mc, mc);
    const double perturbed_test = pac_bayes_expected_return(tp.env, theta, b.sigma_q, tp.test_noise, b.n_mc, mc.substream(1));

    nlohmann::ordered_json j;
    j["seed"] = cfg.seeds.front();
    j["sigma_q"] = b.sigma_q;
    j["sigma_p"] = b.sigma_p;
    j["delta"] = b.delta;
    j["n"] = cfg.train.episodes;
    j["m"] = flat.size();
    j["n_mc"] = b.n_mc;
    j["kl"] = kl;
    j["penalty"] = penalty;
    j["train_return"] = train_r;
    j["test_return"] = test_r;
    j["perturbed_train_return"] = perturbed_train;
    j["perturbed_test_return"] = perturbed_test;
    j["perturbation_shift"] = std::abs(perturbed_train - train_r);
    outputs.json("pacbayes", j);
    out << "pacbayes: kl " << format_double(kl) << " penalty " << format_double(penalty) << "\n";
    return exit_ok;
}

inline void report_error(std::ostream& err, const std::string& code, int status, const std::string& message)
{
    nlohmann::ordered_json j;
    j["error"] = code;
    j["exit"] = status;
    j["message"] = message;
    err << j.dump() << "\n";
}

inline std::optional<std::uint64_t> parse_u64(const std::string& s)
{
    if (s.empty()) return std::nullopt;
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

} // namespace detail

/// Runs a parsed command. Work happens before any file is written.
inline int dispatch(const CliOptions& opt, std::ostream& out, std::ostream& err)
{
    try {
        const ExperimentConfig cfg = parse_config(opt.config, opt.seed);
        detail::OutputSet outputs(opt.out, opt.format);
        int status = exit_ok;
        if (opt.verb == "check-mdp") status = detail::cmd_check_mdp(cfg, outputs, out);
        else if (opt.verb == "gradcheck") status = detail::cmd_gradcheck(cfg, outputs, out);
        else if (opt.verb == "run-intrinsic") status = detail::cmd_intrinsic(cfg, opt, outputs, out, false);
        else if (opt.verb == "run-sweep") status = detail::cmd_intrinsic(cfg, opt, outputs, out, true);
        else if (opt.verb == "run-external") status = detail::cmd_external(cfg, opt, outputs, out);
        else if (opt.verb == "bounds") status = detail::cmd_bounds(cfg, outputs, out);
        else if (opt.verb == "pacbayes") status = detail::cmd_pacbayes(cfg, outputs, out);
        else {
            detail::report_error(err, "usage", exit_usage, "unknown command " + opt.verb);
            return exit_usage;
        }
        outputs.commit();
        if (status != exit_ok)
            detail::report_error(err, std::string(to_string(ErrorCode::check_failed)), status,
                                 opt.verb + " exceeded its threshold");
        return status;
    } catch (const Error& e) {
        const int status = static_cast<int>(e.code());
        detail::report_error(err, std::string(to_string(e.code())), status, e.what());
        return status;
    } catch (const std::exception& e) {
        detail::report_error(err, "internal", exit_internal, e.what());
        return exit_internal;
    }
}

/// Full command line: argv[0] is the program name.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Generalization-gap experiments for reparameterizable RL", "repara-gap"};
    app.footer(detail::exit_code_help());
    app.require_subcommand(1);

    CliOptions opt;
    std::string format = "csv";
    std::optional<std::uint64_t> seed_flag;
    const std::pair<const char*, const char*> verbs[] = {
        {"check-mdp", "Gumbel-max sampling and relaxation checks on discrete MDPs"},
        {"gradcheck", "Compare the pathwise return gradient with central differences"},
        {"run-intrinsic", "Train/test gap over seeds and an optional sweep"},
        {"run-external", "Gap under initialization and transition shifts, with bounds"},
        {"run-sweep", "Intrinsic gap over hidden widths (sweep.param = hidden_width)"},
        {"bounds", "Evaluate the composed generalization bound"},
        {"pacbayes", "KL, PAC-Bayes penalty and perturbed returns for a trained policy"},
    };
    for (const auto& [name, help] : verbs) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config, "Experiment config (JSON)")->required();
        sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
        sub->add_option("--seed", seed_flag, "Override the config seed (beats " + std::string(seed_env_var) + ")");
        sub->add_option("--jobs", opt.jobs, "Parallel seed/sweep jobs")->check(CLI::PositiveNumber)->capture_default_str();
        sub->add_option("--format", format, "Tabular output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
        sub->footer(detail::exit_code_help());
        sub->final_callback([&opt, sub] { opt.verb = sub->get_name(); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        std::ostringstream discard;
        app.exit(e, discard, discard);
        detail::report_error(err, "usage", exit_usage, e.what());
        return exit_usage;
    }

    opt.format = format == "json" ? OutputFormat::json : OutputFormat::csv;
    opt.seed = seed_flag;
    if (!opt.seed) {
        if (const char* env = std::getenv(seed_env_var); env && *env) {
            opt.seed = detail::parse_u64(env);
            if (!opt.seed) {
                detail::report_error(err, "usage", exit_usage, std::string(seed_env_var) + " is not an unsigned integer");
                return exit_usage;
            }
        }
    }
    return dispatch(opt, out, err);
}

} // namespace repara_gap
