#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "impbake/pipeline.h"

namespace impbake {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool pass = false;
  std::string summary;
  std::vector<std::pair<std::string, double>> metrics;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  /// Bakes, trained networks and rendered images are cached here and reused
  /// by later runs.
  std::filesystem::path work_dir = "acceptance_work";
  /// Grayscale photo (PGM or PFM) used as a natural-image density.
  std::filesystem::path photo;
  /// Directories with sample/eval/pdf networks to use instead of training
  /// them (conductor: multi-bounce, R0 = 1; dielectric: any eta).
  std::filesystem::path conductor_nets, dielectric_nets;
  /// Criteria to run (1..10); empty runs all of them.
  std::vector<int> only;
  int threads = 0;
  LogFn log;
};

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options);

/// {"passed": n, "failed": n, "criteria": [{id, title, pass, summary,
/// seconds, metrics: {...}}]}
std::string acceptance_report_json(const std::vector<CriterionResult>& results);

/// "PASS  C<id> <title>: <summary>"
std::string format_result_line(const CriterionResult& r);

}  // namespace impbake
