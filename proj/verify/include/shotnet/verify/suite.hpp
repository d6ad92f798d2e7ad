// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace shotnet::verify {

struct CheckResult {
  std::string category;  // "gradient", "oracle" or "round-trip"
  std::string name;
  bool passed = false;
  std::size_t cases = 0;
  double worst = 0.0;  // largest error seen (relative for gradients)
  std::string detail;
  double seconds = 0.0;
};

struct SuiteOptions {
  std::uint64_t seed = 2026;
  int oracle_cases = 100;
  /// Scratch space for file round-trips; a fresh temp dir when empty.
  std::filesystem::path scratch_dir;
};

std::vector<CheckResult> run_gradient_checks(const SuiteOptions& options = {});
std::vector<CheckResult> run_oracle_checks(const SuiteOptions& options = {});
std::vector<CheckResult> run_roundtrip_checks(const SuiteOptions& options = {});

/// All of the above, in that order.
std::vector<CheckResult> run_verify_suite(const SuiteOptions& options = {});

bool all_passed(const std::vector<CheckResult>& results);
std::string format_table(const std::vector<CheckResult>& results);

}  // namespace shotnet::verify
