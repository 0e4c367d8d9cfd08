#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "qscreen/tensor.hpp"

namespace qscreen {

// Analytic-vs-finite-difference gradient comparison. Only meaningful in
// 64-bit; central differences with h = 1e-5 drown in float32 round-off.

struct GradCheckParam {
  std::string name;
  double max_rel_err = 0.0;
  int checked_coords = 0;
};

struct GradCheckReport {
  std::string name;
  std::vector<GradCheckParam> params;
  double max_rel_err = 0.0;
  bool pass = false;

  std::string summary() const;
};

// build: constructs the graph on the given tape from the current leaf values
// and returns the scalar output to differentiate. It is re-invoked for every
// finite-difference evaluation, so it must be a pure function of the leaves.
//
// max_coords_per_tensor == 0 checks every coordinate; otherwise a
// deterministic subset of that size is sampled per leaf.
GradCheckReport check_gradients(
    const std::string& name,
    const std::function<Tensor<double>(Tape<double>&)>& build,
    const std::vector<std::pair<std::string, Tensor<double>>>& leaves,
    double tolerance, int max_coords_per_tensor = 0, uint64_t coord_seed = 1);

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTol = 1e-4;

}  // namespace qscreen
