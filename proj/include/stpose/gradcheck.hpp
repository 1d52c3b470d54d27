#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stpose/common.hpp"

namespace stpose {

// Central finite-difference verification of the analytic gradients, run in
// double. Every evaluation rebuilds its graph from scratch with fixed internal
// seeds, so stochastic pieces (dropout masks) are held constant while inputs
// move. Coordinates whose +/-h evaluations route max-pooling differently are
// skipped and counted: the function is not differentiable across an argmax
// tie, so a finite difference there measures nothing.
struct GradcheckOptions {
  int seeds = 10;          // seeds 0 .. seeds-1
  double fd_step = 1e-5;
  double op_tol = 1e-4;    // single-op relative error bound
  double net_tol = 1e-3;   // end-to-end relative error bound
  int max_coords = 32;     // sampled coordinates per check per seed

  // Harness self-test: scale the analytic gradients of the named check by
  // `perturb_factor` before comparing, which a working checker must flag.
  std::string perturb_check;
  double perturb_factor = 1.02;
};

struct CheckResult {
  std::string name;
  bool pass = true;
  double worst_rel_err = 0;
  long checked = 0;   // coordinates compared
  long skipped = 0;   // pooling-tie crossings
  std::string detail; // first failure, empty when passing
};

// One check per tape op, each against its own tolerance.
std::vector<CheckResult> check_ops(const GradcheckOptions& opt);

// End-to-end parameter-gradient checks for the five networks at a tiny
// configuration (16x16 frames, 4 slices, 2 joints, sequences of 2).
std::vector<CheckResult> check_networks(const GradcheckOptions& opt);

// Both suites concatenated.
std::vector<CheckResult> check_all(const GradcheckOptions& opt);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace stpose
