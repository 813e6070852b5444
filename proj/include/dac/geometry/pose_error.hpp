#pragma once

#include "dac/geometry/camera.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dac {

struct PoseError {
  double rot_deg{0.0};
  double trans{0.0};
};

inline PoseError pose_errors(const Pose& est, const Pose& truth) {
  const double c = std::clamp(((truth.R().transpose() * est.R()).trace() - 1.0) / 2.0, -1.0, 1.0);
  return {std::acos(c) * 180.0 / std::numbers::pi, (truth.t() - est.t()).norm()};
}

}  // namespace dac
