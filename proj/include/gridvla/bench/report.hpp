#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "gridvla/bench/evaluate.hpp"

namespace gridvla::bench {

nlohmann::json to_json(const EvalReport& r);

std::string report_csv(const EvalReport& r);
std::string report_markdown(const EvalReport& r);
std::string success_svg(const EvalReport& r);

// Writes report.csv, report.json, report.md and success.svg into out_dir.
void write_report(const EvalReport& r, const std::filesystem::path& out_dir);

// Writes `text` to `path`, throwing IoError naming the path on failure.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gridvla::bench
