#pragma once

// Central finite-difference checks of every hand-written backward pass.

#include <cstdint>
#include <string>
#include <vector>

namespace lap {

struct GradcheckResult {
  std::string group;  // layers, cbam, blocks, hourglass, loss, network
  std::string name;
  /// ||a - n|| / max(||a||, ||n||) over every compared coordinate.
  double rel_error = 0;
  /// max over coordinates of |a - n| / max(1, |a|).
  double scaled_error = 0;
  double tolerance = 0;
  std::int64_t coordinates = 0;
  /// Largest per-coordinate relative error and where it occurred. Reported for
  /// inspection only: coordinates whose true gradient sits near the difference
  /// quotient's roundoff floor make this ratio meaningless.
  double worst_coordinate_error = 0;
  std::string worst_at;
  bool passed() const { return rel_error < tolerance && scaled_error < tolerance; }
};

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  double network_tolerance = 1e-5;
  /// Coordinates compared per tensor; larger tensors are sampled.
  std::int64_t max_coordinates = 64;
};

/// Per-coordinate |a - n| / max(|a|, |n|, 1e-12).
double relative_error(double analytic, double numeric);

/// Runs every check whose group or name starts with `filter` (empty = all).
std::vector<GradcheckResult> run_gradchecks(const std::string& filter, std::uint64_t seed,
                                            const GradcheckOptions& options = {});

std::vector<std::string> gradcheck_groups();

std::string format_gradcheck_table(const std::vector<GradcheckResult>& results);

}  // namespace lap
