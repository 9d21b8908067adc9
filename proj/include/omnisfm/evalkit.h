#pragma once

#include <map>
#include <string>
#include <vector>

#include "omnisfm/sphere_geom.h"

namespace omnisfm {

using PoseSet = std::map<std::string, Pose>;

struct PoseErrorSample {
  std::string image_a;
  std::string image_b;
  double rot_err = 0.0;        // degrees
  double trans_dir_err = 0.0;  // degrees
  double combined = 0.0;       // max of the two; +inf if unregistered
  bool registered = true;
};

// One sample per unordered pair of ground-truth images. Pairs with both
// images in `est` compare relative poses (R2 R1^T, t2 - R_rel t1) between
// est and gt; other pairs get combined = +inf. Ground-truth baselines
// shorter than 1e-9 use the rotation error alone. Throws EvaluationError if
// `est` has an image missing from `gt` or fewer than two images.
std::vector<PoseErrorSample> RelativePoseErrors(const PoseSet& est,
                                                const PoseSet& gt);

// Area under the recall curve r(t) = |{e <= t}| / n on [0, tau], in
// percent. Computed exactly as 100 / (n tau) * sum max(0, tau - e_i).
double Auc(const std::vector<double>& errors, double tau);

struct EvaluationReport {
  int registered = 0;
  int total = 0;
  std::vector<std::pair<double, double>> auc;  // (tau, percent)
  double mean_rot_err = 0.0;
  double median_rot_err = 0.0;
  double mean_combined = 0.0;
  double median_combined = 0.0;
  int num_pairs = 0;
  int finite_pairs = 0;
};

EvaluationReport Evaluate(const PoseSet& est, const PoseSet& gt,
                          const std::vector<double>& taus = {3.0, 5.0, 10.0});

// "key = value" lines followed by a small human-readable table.
std::string FormatReport(const EvaluationReport& report);

}  // namespace omnisfm
