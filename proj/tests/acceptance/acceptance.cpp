// Acceptance suite: one PASS/FAIL/N/A line per criterion, exit 0 iff none fails.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "carpetmf/verification.hpp"

int main(int argc, char** argv) {
  CLI::App app{"carpetmf acceptance suite"};
  carpetmf::VerifyOptions opt;
  std::string scratch = (std::filesystem::temp_directory_path() / "carpetmf_acceptance").string();
  std::string config;
  app.add_option("--workers", opt.workers)->check(CLI::Range(1u, 1024u));
  app.add_option("--scratch", scratch, "directory for the determinism runs");
  app.add_option("--config", config, "run on a config's system instead of the reference");
  CLI11_PARSE(app, argc, argv);

  opt.scratch = scratch;
  if (!config.empty()) opt.config = carpetmf::load_config(config);
  const auto report = carpetmf::run_verification(opt, &std::cout);
  std::size_t failed = 0;
  for (const auto& r : report.results) failed += r.status == carpetmf::Status::fail;
  std::cout << report.results.size() - failed << " of " << report.results.size() << " criteria without failure\n";
  return failed == 0 ? 0 : 1;
}
