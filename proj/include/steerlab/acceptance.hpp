#pragma once

#include "steerlab/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

// The acceptance suite: one pass/fail line per criterion, run against the
// default experiment configuration. Also behind `steerlab check`.

namespace steerlab::acceptance {

struct CriterionResult {
  int number = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  int workers = 0;
  std::filesystem::path workdir;  // scratch space for the reproducibility run
  bool keep_workdir = false;
};

std::vector<CriterionResult> run_all(const ExperimentConfig& cfg, const Options& opts,
                                     std::ostream& out);

// True if every criterion passed.
bool all_passed(const std::vector<CriterionResult>& results);

}  // namespace steerlab::acceptance
