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

#include <stdexcept>
#include <string>
#include <string_view>

namespace repara_gap {

/// Failure categories. Each maps onto a distinct CLI exit status.
enum class ErrorCode : int {
    invalid_argument = 10,
    svd_not_converged = 11,
    rollout_diverged = 12,
    training_failed = 13,
    config_missing = 20,
    config_invalid = 21,
    io_failure = 30,
    check_failed = 40,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::svd_not_converged: return "svd_not_converged";
    case ErrorCode::rollout_diverged: return "rollout_diverged";
    case ErrorCode::training_failed: return "training_failed";
    case ErrorCode::config_missing: return "config_missing";
    case ErrorCode::config_invalid: return "config_invalid";
    case ErrorCode::io_failure: return "io_failure";
    case ErrorCode::check_failed: return "check_failed";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Raised when the state leaves the finite range during a rollout.
class RolloutDiverged : public Error {
public:
    explicit RolloutDiverged(std::size_t step)
        : Error(ErrorCode::rollout_diverged,
                "rollout diverged at step " + std::to_string(step)),
          step_(step)
    {
    }

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what)
{
    throw Error(code, what);
}

inline void require(bool condition, const std::string& what)
{
    if (!condition) fail(ErrorCode::invalid_argument, what);
}

} // namespace repara_gap
