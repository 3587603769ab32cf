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

// JSON experiment configuration.
//
//   {
//     "seed": 0,                                   required
//     "env": {"state_dim": 16, "action_dim": 4,    required
//             "noise_dim": 2, "horizon": 32, "gamma": 1.0,
//             "trans_tau_states": 1.0, "trans_tau_actions": 1.0,
//             "reward_kind": "linear" | "tanh", "env_seed": <seed>, "t2_unit_norm": false},
//     "policy": {"hidden": [32], "tau": 1.0, "init_scale": 1.0},
//     "train": {"episodes": 64, "epochs": 256, "learning_rates": [0.01, 0.001],
//               "halving_patience": 8},
//     "eval": {"test_episodes": 64},
//     "shift": {"targets": ["initialization", "transition"], "zetas": [1, 10, 100, 1000]},
//     "sweep": {"param": "policy_tau" | "trans_tau_states" | "trans_tau_actions" | "hidden_width",
//               "values": [...]},
//     "seeds": [<seed>, ..., <seed> + 9],
//     "bounds": {"zeta": 0, "epsilon": 0, "delta": 0.05, "rademacher_c": 1,
//                "reward_range": <measured>, "sigma_q": 1e-4, "sigma_p": 1, "n_mc": 256,
//                "constants": {"L_t1", "L_t2", "L_pi1", "L_pi2", "L_r"}}
//   }
//
// Unknown keys are rejected. Errors name the offending field path.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "repara_gap/errors.hpp"
#include "repara_gap/gap_lab.hpp"

namespace repara_gap {

inline constexpr std::size_t default_seed_count = 10;

namespace detail {

using json = nlohmann::json;

[[noreturn]] inline void config_error(const std::string& path, const std::string& reason)
{
    fail(ErrorCode::config_invalid, path + ": " + reason);
}

inline std::string join_path(const std::string& base, std::string_view key)
{
    return base.empty() ? std::string(key) : base + "." + std::string(key);
}

inline void check_object(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed)
{
    if (!j.is_object()) config_error(path.empty() ? "<root>" : path, "must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (auto a : allowed) known = known || it.key() == a;
        if (!known) config_error(join_path(path, it.key()), "unknown key");
    }
}

inline std::uint64_t as_uint(const json& v, const std::string& path)
{
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    config_error(path, "must be a nonnegative integer");
}

inline double as_double(const json& v, const std::string& path)
{
    if (!v.is_number()) config_error(path, "must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) config_error(path, "must be finite");
    return d;
}

inline std::string as_string(const json& v, const std::string& path)
{
    if (!v.is_string()) config_error(path, "must be a string");
    return v.get<std::string>();
}

inline const json* find(const json& obj, std::string_view key)
{
    const auto it = obj.find(std::string(key));
    return it == obj.end() ? nullptr : &*it;
}

inline void read_uint(const json& obj, const std::string& path, std::string_view key, std::size_t& out)
{
    if (const json* v = find(obj, key)) out = as_uint(*v, join_path(path, key));
}

inline void read_double(const json& obj, const std::string& path, std::string_view key, double& out)
{
    if (const json* v = find(obj, key)) out = as_double(*v, join_path(path, key));
}

template <class T, class F>
std::vector<T> read_array(const json& v, const std::string& path, F&& element)
{
    if (!v.is_array()) config_error(path, "must be an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(element(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

inline void positive(double v, const std::string& path)
{
    if (!(v > 0.0)) config_error(path, "must be positive");
}

inline void at_least_one(std::size_t v, const std::string& path)
{
    if (v < 1) config_error(path, "must be >= 1");
}

inline void parse_env(const json& j, ExperimentConfig& cfg, bool& env_seed_given)
{
    const std::string p = "env";
    check_object(j, p, {"state_dim", "action_dim", "noise_dim", "horizon", "gamma", "trans_tau_states",
                        "trans_tau_actions", "reward_kind", "env_seed", "t2_unit_norm"});
    EnvSpec& e = cfg.env;
    for (std::string_view req : {"state_dim", "action_dim"})
        if (!find(j, req)) config_error(join_path(p, req), "required");
    read_uint(j, p, "state_dim", e.state_dim);
    read_uint(j, p, "action_dim", e.action_dim);
    read_uint(j, p, "noise_dim", e.noise_dim);
    read_uint(j, p, "horizon", e.horizon);
    read_double(j, p, "gamma", e.gamma);
    read_double(j, p, "trans_tau_states", e.trans_tau_states);
    read_double(j, p, "trans_tau_actions", e.trans_tau_actions);
    if (const json* v = find(j, "reward_kind")) {
        const std::string k = as_string(*v, "env.reward_kind");
        if (k == "linear") e.reward_kind = RewardKind::linear;
        else if (k == "tanh") e.reward_kind = RewardKind::tanh;
        else config_error("env.reward_kind", "must be \"linear\" or \"tanh\"");
    }
    if (const json* v = find(j, "t2_unit_norm")) {
        if (!v->is_boolean()) config_error("env.t2_unit_norm", "must be a boolean");
        e.t2_unit_norm = v->get<bool>();
    }
    if (const json* v = find(j, "env_seed")) {
        e.env_seed = as_uint(*v, "env.env_seed");
        env_seed_given = true;
    }
    at_least_one(e.state_dim, "env.state_dim");
    at_least_one(e.action_dim, "env.action_dim");
    at_least_one(e.noise_dim, "env.noise_dim");
    at_least_one(e.horizon, "env.horizon");
    if (!(e.gamma > 0.0 && e.gamma <= 1.0)) config_error("env.gamma", "gamma must be in (0,1]");
    positive(e.trans_tau_states, "env.trans_tau_states");
    positive(e.trans_tau_actions, "env.trans_tau_actions");
}

inline void parse_policy(const json& j, ExperimentConfig& cfg)
{
    check_object(j, "policy", {"hidden", "tau", "init_scale"});
    PolicySpec& ps = cfg.policy;
    if (const json* v = find(j, "hidden")) {
        ps.hidden_dims = read_array<std::size_t>(*v, "policy.hidden", [](const json& e, const std::string& path) {
            const auto w = as_uint(e, path);
            at_least_one(w, path);
            return static_cast<std::size_t>(w);
        });
    }
    read_double(j, "policy", "tau", ps.tau);
    read_double(j, "policy", "init_scale", ps.init_scale);
    positive(ps.tau, "policy.tau");
    positive(ps.init_scale, "policy.init_scale");
}

inline void parse_train(const json& j, ExperimentConfig& cfg)
{
    check_object(j, "train", {"episodes", "epochs", "learning_rates", "halving_patience"});
    TrainConfig& t = cfg.train;
    read_uint(j, "train", "episodes", t.episodes);
    read_uint(j, "train", "epochs", t.epochs);
    read_uint(j, "train", "halving_patience", t.halving_patience);
    if (const json* v = find(j, "learning_rates")) {
        t.learning_rates = read_array<double>(*v, "train.learning_rates", [](const json& e, const std::string& path) {
            const double lr = as_double(e, path);
            positive(lr, path);
            return lr;
        });
        if (t.learning_rates.empty()) config_error("train.learning_rates", "must be nonempty");
    }
    at_least_one(t.episodes, "train.episodes");
    at_least_one(t.epochs, "train.epochs");
    at_least_one(t.halving_patience, "train.halving_patience");
}

inline void parse_shift(const json& j, ExperimentConfig& cfg)
{
    check_object(j, "shift", {"targets", "zetas"});
    if (const json* v = find(j, "targets")) {
        cfg.shift.targets = read_array<ShiftTarget>(*v, "shift.targets", [](const json& e, const std::string& path) {
            const std::string s = as_string(e, path);
            if (s == "initialization") return ShiftTarget::initialization;
            if (s == "transition") return ShiftTarget::transition;
            config_error(path, "must be \"initialization\" or \"transition\"");
        });
        if (cfg.shift.targets.empty()) config_error("shift.targets", "must be nonempty");
    }
    if (const json* v = find(j, "zetas")) {
        cfg.shift.zetas = read_array<double>(*v, "shift.zetas", [](const json& e, const std::string& path) {
            const double z = as_double(e, path);
            if (z < 0.0) config_error(path, "must be >= 0");
            return z;
        });
        if (cfg.shift.zetas.empty()) config_error("shift.zetas", "must be nonempty");
    }
}

inline void parse_sweep(const json& j, ExperimentConfig& cfg)
{
    check_object(j, "sweep", {"param", "values"});
    if (!find(j, "param")) config_error("sweep.param", "required");
    const std::string p = as_string(j["param"], "sweep.param");
    SweepParam param = SweepParam::none;
    for (SweepParam c : {SweepParam::none, SweepParam::policy_tau, SweepParam::trans_tau_states,
                         SweepParam::trans_tau_actions, SweepParam::hidden_width})
        if (p == to_string(c)) param = c;
    if (param == SweepParam::none && p != "none") config_error("sweep.param", "unknown sweep parameter \"" + p + "\"");
    cfg.sweep.param = param;
    if (const json* v = find(j, "values"))
        cfg.sweep.values = read_array<double>(*v, "sweep.values", [param](const json& e, const std::string& path) {
            const double x = as_double(e, path);
            positive(x, path);
            if (param == SweepParam::hidden_width && x != std::floor(x)) config_error(path, "must be an integer width");
            return x;
        });
    if (param != SweepParam::none && cfg.sweep.values.empty()) config_error("sweep.values", "must be nonempty");
}

inline void parse_bounds(const json& j, ExperimentConfig& cfg)
{
    check_object(j, "bounds", {"zeta", "epsilon", "delta", "rademacher_c", "reward_range", "constants", "sigma_q",
                               "sigma_p", "n_mc"});
    BoundsSpec& b = cfg.bounds;
    read_double(j, "bounds", "zeta", b.zeta);
    read_double(j, "bounds", "epsilon", b.epsilon);
    read_double(j, "bounds", "delta", b.delta);
    read_double(j, "bounds", "rademacher_c", b.rademacher_c);
    read_double(j, "bounds", "sigma_q", b.sigma_q);
    read_double(j, "bounds", "sigma_p", b.sigma_p);
    read_uint(j, "bounds", "n_mc", b.n_mc);
    if (const json* v = find(j, "reward_range")) b.reward_range = as_double(*v, "bounds.reward_range");
    if (const json* v = find(j, "constants")) {
        check_object(*v, "bounds.constants", {"L_t1", "L_t2", "L_pi1", "L_pi2", "L_r"});
        LipschitzConstants l;
        const std::pair<const char*, double*> fields[] = {
            {"L_t1", &l.l_t1}, {"L_t2", &l.l_t2}, {"L_pi1", &l.l_pi1}, {"L_pi2", &l.l_pi2}, {"L_r", &l.l_r}};
        for (const auto& [name, dst] : fields) {
            const std::string path = std::string("bounds.constants.") + name;
            if (!find(*v, name)) config_error(path, "required");
            *dst = as_double((*v)[name], path);
            if (*dst < 0.0) config_error(path, "must be >= 0");
        }
        b.constants = l;
    }
    if (b.zeta < 0.0) config_error("bounds.zeta", "must be >= 0");
    if (b.epsilon < 0.0) config_error("bounds.epsilon", "must be >= 0");
    if (!(b.delta > 0.0 && b.delta < 1.0)) config_error("bounds.delta", "must be in (0,1)");
    if (b.rademacher_c < 0.0) config_error("bounds.rademacher_c", "must be >= 0");
    if (b.reward_range && *b.reward_range < 0.0) config_error("bounds.reward_range", "must be >= 0");
    if (b.sigma_q < 0.0) config_error("bounds.sigma_q", "must be >= 0");
    positive(b.sigma_p, "bounds.sigma_p");
    at_least_one(b.n_mc, "bounds.n_mc");
}

} // namespace detail

/// Parses and validates a config document. `seed_override` replaces "seed"
/// and, where they were not given explicitly, the defaults derived from it.
inline ExperimentConfig parse_config_json(const nlohmann::json& j, std::optional<std::uint64_t> seed_override = std::nullopt)
{
    using namespace detail;
    check_object(j, "", {"seed", "env", "policy", "train", "eval", "shift", "sweep", "seeds", "bounds"});
    ExperimentConfig cfg;
    if (!find(j, "seed")) config_error("seed", "required");
    cfg.seed = as_uint(j["seed"], "seed");
    if (seed_override) cfg.seed = *seed_override;

    if (!find(j, "env")) config_error("env", "required");
    bool env_seed_given = false;
    parse_env(j["env"], cfg, env_seed_given);
    if (!env_seed_given) cfg.env.env_seed = cfg.seed;
    cfg.policy.input_dim = cfg.env.state_dim;
    cfg.policy.output_dim = cfg.env.action_dim;

    if (const json* v = find(j, "policy")) parse_policy(*v, cfg);
    if (const json* v = find(j, "train")) parse_train(*v, cfg);
    if (const json* v = find(j, "eval")) {
        check_object(*v, "eval", {"test_episodes"});
        read_uint(*v, "eval", "test_episodes", cfg.test_episodes);
        at_least_one(cfg.test_episodes, "eval.test_episodes");
    }
    if (const json* v = find(j, "shift")) parse_shift(*v, cfg);
    if (const json* v = find(j, "sweep")) parse_sweep(*v, cfg);
    if (const json* v = find(j, "seeds")) {
        cfg.seeds = read_array<std::uint64_t>(*v, "seeds", [](const json& e, const std::string& path) {
            return as_uint(e, path);
        });
        if (cfg.seeds.empty()) config_error("seeds", "must be nonempty");
    } else {
        for (std::uint64_t k = 0; k < default_seed_count; ++k) cfg.seeds.push_back(cfg.seed + k);
    }
    if (const json* v = find(j, "bounds")) parse_bounds(*v, cfg);

    try {
        validate(cfg);
    } catch (const Error& e) {
        fail(ErrorCode::config_invalid, e.what());
    }
    return cfg;
}

inline ExperimentConfig parse_config_text(std::string_view text, std::optional<std::uint64_t> seed_override = std::nullopt)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::config_invalid, std::string("malformed JSON: ") + e.what());
    }
    return parse_config_json(j, seed_override);
}

/// Missing or unreadable files raise config_missing; bad contents config_invalid.
inline ExperimentConfig parse_config(const std::filesystem::path& path,
                                     std::optional<std::uint64_t> seed_override = std::nullopt)
{
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec))
        fail(ErrorCode::config_missing, "config file not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::config_missing, "cannot read config file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), seed_override);
}

} // namespace repara_gap
