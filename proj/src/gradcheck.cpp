#include "qscreen/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "qscreen/rng.hpp"

namespace qscreen {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (pass ? "PASS" : "FAIL") << "  " << name << "  max_rel_err=";
  os.precision(3);
  os << std::scientific << max_rel_err;
  return os.str();
}

namespace {

// Scaled relative error: behaves like absolute error below magnitude 1,
// relative above. Keeps near-zero gradients from blowing up the ratio.
double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

std::vector<int64_t> pick_coords(int64_t size, int max_coords, uint64_t seed) {
  std::vector<int64_t> idx(static_cast<size_t>(size));
  std::iota(idx.begin(), idx.end(), int64_t(0));
  if (max_coords <= 0 || size <= max_coords) return idx;
  Rng rng(seed);
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(static_cast<size_t>(max_coords));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport check_gradients(
    const std::string& name,
    const std::function<Tensor<double>(Tape<double>&)>& build,
    const std::vector<std::pair<std::string, Tensor<double>>>& leaves,
    double tolerance, int max_coords_per_tensor, uint64_t coord_seed) {
  GradCheckReport report;
  report.name = name;

  // handles share storage; copying one lifts the const on the pair
  std::vector<Tensor<double>> tensors;
  tensors.reserve(leaves.size());
  for (auto& [leaf_name, leaf] : leaves) {
    (void)leaf_name;
    tensors.push_back(leaf);
    tensors.back().set_requires_grad(true);
    tensors.back().zero_grad();
  }

  // One analytic pass.
  {
    Tape<double> tape;
    Tensor<double> loss = build(tape);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(tensors.size());
  for (auto& leaf : tensors) {
    analytic.emplace_back(leaf.node()->grad.begin(), leaf.node()->grad.end());
  }

  const double h = kGradCheckStep;
  auto eval = [&]() {
    Tape<double> tape;
    return build(tape).item();
  };

  for (size_t li = 0; li < tensors.size(); ++li) {
    auto& leaf = tensors[li];
    GradCheckParam entry;
    entry.name = leaves[li].first;
    const auto coords =
        pick_coords(leaf.size(), max_coords_per_tensor, derive_seed(coord_seed, li));
    for (int64_t ci : coords) {
      double* slot = &leaf.node()->values[static_cast<size_t>(ci)];
      const double v = *slot;
      *slot = v + h;
      const double up = eval();
      *slot = v - h;
      const double down = eval();
      *slot = v;
      const double numeric = (up - down) / (2.0 * h);
      entry.max_rel_err =
          std::max(entry.max_rel_err, rel_err(analytic[li][static_cast<size_t>(ci)], numeric));
      ++entry.checked_coords;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.params.push_back(std::move(entry));
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace qscreen
