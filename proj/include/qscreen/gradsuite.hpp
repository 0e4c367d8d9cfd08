#pragma once

#include <cstdint>
#include <vector>

#include "qscreen/gradcheck.hpp"
#include "qscreen/session.hpp"

namespace qscreen {

// The standard verification battery: every differentiable op in isolation
// (all coordinates) plus the full tiny-preset pipeline for each encoder
// (sampled coordinates per parameter). 64-bit throughout.
struct GradSuiteOptions {
  bool include_pipelines = true;
  int pipeline_coords_per_tensor = 3;
  uint64_t seed = 7;
  double tolerance = kGradCheckTol;
};

std::vector<GradCheckReport> run_gradient_suite(const GradSuiteOptions& opts = {});

// Random session at the given clip geometry, for pipeline-level checks.
Session synthetic_session(uint64_t seed, int frames, int height, int width);

}  // namespace qscreen
