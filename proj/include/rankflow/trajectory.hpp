#pragma once

#include <vector>

namespace rankflow {

/// One logged sample of an iteration or a flow.
struct TrajectoryRecord {
  double step_or_time = 0.0;  // iteration index for GD, time for flows
  double dist = 0.0;          // ||Z - X||_F
  double sigma_r = 0.0;       // sigma_r(Z)
  double grad_norm = 0.0;     // ||P_T(Z - X)||_F
};

using Trajectory = std::vector<TrajectoryRecord>;

}  // namespace rankflow
