#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pipeline {

/// Runs the CLI in-process with `ltmia` prepended; returns the exit code.
int cli(const std::vector<std::string>& args, std::string* out = nullptr, std::string* log = nullptr);

/// synth -> attack -> train -> score -> eval -> report in `dir` on a small
/// config. Returns every produced file's bytes keyed by file name; empty if
/// a step failed.
std::map<std::string, std::string> run_small(const std::filesystem::path& dir, unsigned threads);

}  // namespace pipeline
