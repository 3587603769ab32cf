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

// Output helpers: locale-independent number formatting, CSV assembly and
// atomic file replacement.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "repara_gap/errors.hpp"

namespace repara_gap {

/// Shortest representation that round-trips; "nan", "inf", "-inf" otherwise.
inline std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Rows of typed cells rendered either as CSV or as a JSON array of objects.
/// Non-finite numbers become null in JSON.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    const std::vector<std::string>& header() const noexcept { return header_; }

    /// Cells are appended in header order; call end_row() after the last one.
    CsvTable& cell(std::string_view s) { return push(std::string(s), nlohmann::ordered_json(std::string(s))); }
    CsvTable& cell(double v)
    {
        return push(format_double(v), std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json());
    }
    CsvTable& cell(std::uint64_t v) { return push(std::to_string(v), nlohmann::ordered_json(v)); }
    CsvTable& flag(bool b) { return push(b ? "1" : "0", nlohmann::ordered_json(b)); }

    void end_row()
    {
        require(cells_ == header_.size(), "CsvTable: row width does not match header");
        rows_.push_back(std::move(current_));
        json_rows_.push_back(std::move(current_json_));
        current_.clear();
        current_json_ = nlohmann::ordered_json::object();
        cells_ = 0;
    }

    std::size_t rows() const noexcept { return rows_.size(); }

    std::string str() const
    {
        std::string out;
        for (std::size_t i = 0; i < header_.size(); ++i) {
            if (i) out += ',';
            out += header_[i];
        }
        out += '\n';
        for (const auto& r : rows_) {
            out += r;
            out += '\n';
        }
        return out;
    }

    nlohmann::ordered_json json() const { return json_rows_; }

private:
    CsvTable& push(std::string text, nlohmann::ordered_json value)
    {
        require(cells_ < header_.size(), "CsvTable: too many cells in row");
        if (cells_ > 0) current_ += ',';
        current_ += text;
        current_json_[header_[cells_]] = std::move(value);
        ++cells_;
        return *this;
    }

    std::vector<std::string> header_;
    std::vector<std::string> rows_;
    nlohmann::ordered_json json_rows_ = nlohmann::ordered_json::array();
    std::string current_;
    nlohmann::ordered_json current_json_ = nlohmann::ordered_json::object();
    std::size_t cells_ = 0;
};

/// Writes to a temporary sibling and renames it over `path`, so readers see
/// either the old file or the complete new one.
inline void atomic_write(const std::filesystem::path& path, std::string_view content)
{
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::io_failure, "cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            fail(ErrorCode::io_failure, "write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(ErrorCode::io_failure, "cannot rename onto " + path.string());
    }
}

inline void ensure_directory(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        fail(ErrorCode::io_failure, "cannot create output directory " + dir.string());
}

} // namespace repara_gap
