// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [--photo FILE] [--only 1,2,...] [--report FILE]

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "impbake/acceptance.h"

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  impbake::AcceptanceOptions opts;
  opts.work_dir = IMPBAKE_ACCEPTANCE_WORK;
  opts.photo = IMPBAKE_TEST_DATA "/camera64.pgm";
  std::string report;
  bool quiet = false;
  app.add_option("--work", opts.work_dir, "cache directory for bakes, networks and images");
  app.add_option("--photo", opts.photo, "grayscale photo for the natural-image density");
  app.add_option("--only", opts.only, "criteria to run")->delimiter(',')->check(CLI::Range(1, 10));
  app.add_option("--threads", opts.threads, "worker threads (0 = all cores)");
  app.add_option("--report", report, "write the JSON report here");
  app.add_flag("--quiet", quiet, "only print the result lines");
  CLI11_PARSE(app, argc, argv);
  if (!quiet) opts.log = [](const std::string& s) { std::cerr << "  " << s << std::endl; };

  const auto results = impbake::run_acceptance(opts);
  bool all = true;
  for (const auto& r : results) {
    std::cout << impbake::format_result_line(r) << std::endl;
    all = all && r.pass;
  }
  if (!report.empty()) std::ofstream(report) << impbake::acceptance_report_json(results) << '\n';
  return all ? 0 : 1;
}
