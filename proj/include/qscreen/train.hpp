#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qscreen/metrics.hpp"
#include "qscreen/model.hpp"
#include "qscreen/session.hpp"

namespace qscreen {

struct TrainConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double learning_rate = 1e-4;
  int batch_size = 2;  // whole subjects per batch, 20 clips each
  int epochs = 200;
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};

  void validate() const;
};

// Deterministic subject -> fold assignment: ids are sorted, shuffled with the
// given seed, then dealt round-robin, so fold sizes differ by at most one.
struct FoldPlan {
  int n_folds = 5;
  std::map<std::string, int> fold_of;

  static FoldPlan make(std::vector<std::string> subject_ids, int n_folds, uint64_t seed);
  std::vector<std::string> members(int fold) const;
};

inline constexpr uint64_t kDefaultFoldSeed = 17;

template <class T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  int64_t step = 0;

  static AdamState init(const ParamStore<T>& params);
};

// One update with bias correction:
//   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
template <class T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, const TrainConfig& cfg);

struct TrainLog {
  std::vector<double> epoch_loss;            // subject-weighted mean per epoch
  int64_t batches = 0;
  int64_t leakage_checks = 0;                // per-batch subject membership assertions
  std::vector<std::string> train_subjects;   // sorted unique ids seen in batches
};

// Minimizes the mean session-level cross-entropy over mini-batches of whole
// subjects. The held-out fold never contributes to an update; every batch is
// checked against it and the check counter recorded.
template <class T>
TrainLog train(Model<T>& model, const std::vector<Session>& dataset, const FoldPlan& plan,
               int held_out_fold, const TrainConfig& cfg, uint64_t seed);

// fold -1 evaluates every subject; otherwise only the given fold's members.
template <class T>
Confusion evaluate(const Model<T>& model, const std::vector<Session>& dataset,
                   const FoldPlan* plan, int fold);

Confusion evaluate_sds_sum(const std::vector<Session>& dataset, const FoldPlan* plan, int fold);

struct FoldAudit {
  int fold = 0;
  uint64_t seed = 0;
  std::vector<std::string> held_out;
  std::vector<std::string> trained_on;
  int64_t leakage_checks = 0;
  bool disjoint = false;  // no held-out id ever appeared in a training batch
  bool complete = false;  // training touched every other fold's subjects
};

struct CvOptions {
  int jobs = 1;
  int n_folds = 5;
  uint64_t fold_seed = kDefaultFoldSeed;
  bool train_model = true;        // false: SDS-sum baseline rows only
  bool include_sds_baseline = true;
};

struct CrossValidationResult {
  MetricsReport report;
  std::vector<FoldAudit> audits;
};

// 5 folds x |seeds| runs: train on the other folds, evaluate the held-out
// one. Distinct (fold, seed) runs share nothing mutable, so jobs > 1 changes
// only wall time, never a byte of the report.
CrossValidationResult cross_validate(const std::vector<Session>& dataset,
                                     const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                     const CvOptions& opts);

extern template struct AdamState<float>;
extern template struct AdamState<double>;
extern template void adam_step<float>(ParamStore<float>&, AdamState<float>&, const TrainConfig&);
extern template void adam_step<double>(ParamStore<double>&, AdamState<double>&, const TrainConfig&);
extern template TrainLog train<float>(Model<float>&, const std::vector<Session>&, const FoldPlan&,
                                      int, const TrainConfig&, uint64_t);
extern template TrainLog train<double>(Model<double>&, const std::vector<Session>&, const FoldPlan&,
                                       int, const TrainConfig&, uint64_t);
extern template Confusion evaluate<float>(const Model<float>&, const std::vector<Session>&,
                                          const FoldPlan*, int);
extern template Confusion evaluate<double>(const Model<double>&, const std::vector<Session>&,
                                           const FoldPlan*, int);

}  // namespace qscreen
