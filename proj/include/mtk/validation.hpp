#pragma once

#include <functional>
#include <string>
#include <vector>

namespace mtk {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct ValidationOptions {
  /// Smaller run counts for a fast smoke check; the acceptance suite uses the full sizes.
  bool quick = false;
  int jobs = 0;
  /// Called once per criterion as soon as it finishes.
  std::function<void(const CriterionResult&)> on_result;
};

/// Runs the ten acceptance criteria in order. Criterion 10 reuses the runs of 6 to 8.
std::vector<CriterionResult> run_validation(const ValidationOptions& options = {});

/// "criterion <id> PASS|FAIL  <name>: <detail> (<seconds> s)"
std::string format_result(const CriterionResult& r);

}  // namespace mtk
