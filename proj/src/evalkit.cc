#include "omnisfm/evalkit.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "omnisfm/error.h"

namespace omnisfm {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

double AngleBetween(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

double Median(std::vector<double> values) {
  if (values.empty()) {
    return 0.0;
  }
  std::sort(values.begin(), values.end());
  const size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

double Mean(const std::vector<double>& values) {
  if (values.empty()) {
    return 0.0;
  }
  double sum = 0.0;
  for (const double v : values) {
    sum += v;
  }
  return sum / values.size();
}

}  // namespace

std::vector<PoseErrorSample> RelativePoseErrors(const PoseSet& est,
                                                const PoseSet& gt) {
  for (const auto& [name, pose] : est) {
    if (!gt.count(name)) {
      throw EvaluationError("ground truth has no pose for image " + name);
    }
  }
  if (est.size() < 2) {
    throw EvaluationError("evaluation needs at least two registered images");
  }
  std::vector<PoseErrorSample> samples;
  for (auto a = gt.begin(); a != gt.end(); ++a) {
    for (auto b = std::next(a); b != gt.end(); ++b) {
      PoseErrorSample s;
      s.image_a = a->first;
      s.image_b = b->first;
      const auto ea = est.find(a->first);
      const auto eb = est.find(b->first);
      if (ea == est.end() || eb == est.end()) {
        s.registered = false;
        s.rot_err = s.trans_dir_err = s.combined = kInf;
        samples.push_back(s);
        continue;
      }
      const Pose rel_gt = RelativePose(a->second, b->second);
      const Pose rel_est = RelativePose(ea->second, eb->second);
      s.rot_err = RotationAngle(rel_est.rotation * rel_gt.rotation.transpose()) *
                  kRadToDeg;
      if (rel_gt.translation.norm() < 1e-9) {
        s.trans_dir_err = 0.0;
        s.combined = s.rot_err;
      } else {
        s.trans_dir_err =
            rel_est.translation.norm() < 1e-9
                ? 180.0
                : AngleBetween(rel_est.translation, rel_gt.translation) * kRadToDeg;
        s.combined = std::max(s.rot_err, s.trans_dir_err);
      }
      samples.push_back(s);
    }
  }
  return samples;
}

double Auc(const std::vector<double>& errors, double tau) {
  if (errors.empty()) {
    throw EvaluationError("AUC of an empty sample set");
  }
  if (!(tau > 0.0)) {
    throw DomainError("AUC threshold must be positive");
  }
  double area = 0.0;
  for (const double e : errors) {
    if (e < tau) {
      area += tau - std::max(e, 0.0);
    }
  }
  return 100.0 * area / (tau * static_cast<double>(errors.size()));
}

EvaluationReport Evaluate(const PoseSet& est, const PoseSet& gt,
                          const std::vector<double>& taus) {
  const std::vector<PoseErrorSample> samples = RelativePoseErrors(est, gt);
  EvaluationReport report;
  report.registered = static_cast<int>(est.size());
  report.total = static_cast<int>(gt.size());
  report.num_pairs = static_cast<int>(samples.size());
  std::vector<double> combined;
  std::vector<double> finite_rot;
  std::vector<double> finite_combined;
  for (const PoseErrorSample& s : samples) {
    combined.push_back(s.combined);
    if (std::isfinite(s.combined)) {
      finite_rot.push_back(s.rot_err);
      finite_combined.push_back(s.combined);
    }
  }
  report.finite_pairs = static_cast<int>(finite_combined.size());
  for (const double tau : taus) {
    report.auc.emplace_back(tau, Auc(combined, tau));
  }
  report.mean_rot_err = Mean(finite_rot);
  report.median_rot_err = Median(finite_rot);
  report.mean_combined = Mean(finite_combined);
  report.median_combined = Median(finite_combined);
  return report;
}

std::string FormatReport(const EvaluationReport& report) {
  std::ostringstream out;
  out << "registered = " << report.registered << " / " << report.total << "\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& [tau, value] : report.auc) {
    out << "auc@" << std::defaultfloat << tau << " = " << std::fixed << value
        << "\n";
  }
  out << std::setprecision(6);
  out << "pairs = " << report.num_pairs << "\n";
  out << "finite_pairs = " << report.finite_pairs << "\n";
  out << "mean_rot_err_deg = " << report.mean_rot_err << "\n";
  out << "median_rot_err_deg = " << report.median_rot_err << "\n";
  out << "mean_pose_err_deg = " << report.mean_combined << "\n";
  out << "median_pose_err_deg = " << report.median_combined << "\n";
  out << "\n";
  out << "  # Registered";
  for (const auto& [tau, value] : report.auc) {
    out << " | AUC @" << std::setprecision(0) << tau << "deg";
  }
  out << "\n  " << std::setw(5) << report.registered << " / " << std::left
      << std::setw(5) << report.total << std::right;
  out << std::setprecision(2);
  for (const auto& [tau, value] : report.auc) {
    out << " | " << std::setw(10) << value;
  }
  out << "\n";
  return out.str();
}

}  // namespace omnisfm
