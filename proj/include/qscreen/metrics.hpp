#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qscreen {

// Positive class is depression (label 1).
struct Confusion {
  int64_t tp = 0;
  int64_t fn = 0;
  int64_t fp = 0;
  int64_t tn = 0;

  int64_t total() const { return tp + fn + fp + tn; }
  void add(int predicted, int label);
  Confusion& operator+=(const Confusion& o);
};

// All three return 0 when their denominator is empty.
double accuracy(const Confusion& c);
double sensitivity(const Confusion& c);
double specificity(const Confusion& c);

struct MetricsRow {
  std::string method;
  int fold = 0;
  uint64_t seed = 0;
  Confusion confusion;
};

struct MethodAggregate {
  std::string method;
  int n_seeds = 0;
  double acc_mean = 0, acc_std = 0;
  double sens_mean = 0, sens_std = 0;
  double spec_mean = 0, spec_std = 0;
};

// Per-(method,fold,seed) confusion rows plus the seed-level aggregation:
// held-out predictions are pooled across folds per seed, then mean and
// sample std are taken over seeds.
class MetricsReport {
 public:
  void add(MetricsRow row) { rows_.push_back(std::move(row)); }
  const std::vector<MetricsRow>& rows() const { return rows_; }

  std::vector<MethodAggregate> aggregates() const;

  std::string to_csv() const;    // stable bytes for identical inputs
  std::string to_table() const;  // aligned text, aggregation documented in header

 private:
  std::vector<MetricsRow> rows_;
};

}  // namespace qscreen
