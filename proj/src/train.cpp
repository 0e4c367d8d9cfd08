#include "qscreen/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

#include "qscreen/rng.hpp"

namespace qscreen {

void TrainConfig::validate() const {
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) {
    throw ConfigError("adam betas must lie in (0,1)");
  }
  if (!(eps > 0)) throw ConfigError("adam eps must be positive");
  if (!(learning_rate >= 0)) throw ConfigError("learning rate must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (seeds.empty()) throw ConfigError("at least one seed required");
}

FoldPlan FoldPlan::make(std::vector<std::string> subject_ids, int n_folds, uint64_t seed) {
  if (n_folds < 2) throw ConfigError("need at least 2 folds");
  if (int(subject_ids.size()) < n_folds) {
    throw ConfigError("dataset has " + std::to_string(subject_ids.size()) +
                      " subjects, fewer than " + std::to_string(n_folds) + " folds");
  }
  std::sort(subject_ids.begin(), subject_ids.end());
  for (size_t i = 1; i < subject_ids.size(); ++i) {
    if (subject_ids[i] == subject_ids[i - 1]) {
      throw ConfigError("duplicate subject id " + subject_ids[i]);
    }
  }
  Rng rng(seed);
  rng.shuffle(subject_ids.begin(), subject_ids.end());
  FoldPlan plan;
  plan.n_folds = n_folds;
  for (size_t i = 0; i < subject_ids.size(); ++i) {
    plan.fold_of[subject_ids[i]] = int(i % size_t(n_folds));
  }
  return plan;
}

std::vector<std::string> FoldPlan::members(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : fold_of) {
    if (f == fold) out.push_back(id);
  }
  return out;
}

template <class T>
AdamState<T> AdamState<T>::init(const ParamStore<T>& params) {
  AdamState<T> s;
  for (const auto& [_, tensor] : params.items()) {
    s.m.emplace_back(size_t(tensor.size()), T(0));
    s.v.emplace_back(size_t(tensor.size()), T(0));
  }
  return s;
}

template <class T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, const TrainConfig& cfg) {
  if (state.m.size() != params.items().size()) {
    throw ShapeError("adam state does not match parameter store");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
  for (size_t pi = 0; pi < params.items().size(); ++pi) {
    auto& [name, tensor] = params.items()[pi];
    if (!tensor.requires_grad()) continue;
    auto g = tensor.grad();
    if (!all_finite(std::span<const T>(g.data(), g.size()))) {
      throw NumericError("non-finite gradient in " + name + " at adam step " +
                         std::to_string(state.step));
    }
    auto vals = tensor.values();
    T* m = state.m[pi].data();
    T* v = state.v[pi].data();
    for (size_t i = 0; i < vals.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double mhat = double(m[i]) / bc1;
      const double vhat = double(v[i]) / bc2;
      vals[i] -= T(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

template <class T>
TrainLog train(Model<T>& model, const std::vector<Session>& dataset, const FoldPlan& plan,
               int held_out_fold, const TrainConfig& cfg, uint64_t seed) {
  cfg.validate();
  std::set<std::string> held_out;
  for (const auto& id : plan.members(held_out_fold)) held_out.insert(id);

  std::vector<int> train_idx;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const auto it = plan.fold_of.find(dataset[i].subject_id);
    if (it == plan.fold_of.end()) {
      throw ConfigError("subject " + dataset[i].subject_id + " missing from fold plan");
    }
    if (it->second != held_out_fold) train_idx.push_back(int(i));
  }
  if (train_idx.empty()) throw ConfigError("no training subjects left after holding out fold");

  TrainLog log;
  std::set<std::string> seen;
  AdamState<T> state = AdamState<T>::init(model.params());
  Rng shuffle_rng(derive_seed(seed, 0xBA7C4));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(train_idx.begin(), train_idx.end());
    double loss_sum = 0.0;
    int64_t n_subjects = 0;
    for (size_t start = 0; start < train_idx.size(); start += size_t(cfg.batch_size)) {
      const size_t end = std::min(train_idx.size(), start + size_t(cfg.batch_size));
      Tape<T> tape;
      Tensor<T> batch_loss;
      for (size_t k = start; k < end; ++k) {
        const Session& s = dataset[size_t(train_idx[k])];
        // the no-leakage audit: every batch membership is asserted
        if (held_out.count(s.subject_id)) {
          throw ConfigError("held-out subject " + s.subject_id + " reached a training batch");
        }
        ++log.leakage_checks;
        seen.insert(s.subject_id);
        Tensor<T> p = model.predict(&tape, s);
        Tensor<T> l = bce_loss(&tape, p, s.label);
        batch_loss = batch_loss.defined() ? add(&tape, batch_loss, l) : l;
      }
      const int bsz = int(end - start);
      if (bsz > 1) batch_loss = scale(&tape, batch_loss, T(1) / T(bsz));
      const double lv = double(batch_loss.item());
      if (!std::isfinite(lv)) {
        throw NumericError("training loss diverged at epoch " + std::to_string(epoch) +
                           "; last finite epoch " + std::to_string(epoch - 1));
      }
      model.params().zero_grads();
      tape.backward(batch_loss);
      adam_step(model.params(), state, cfg);
      loss_sum += lv * bsz;
      n_subjects += bsz;
      ++log.batches;
    }
    log.epoch_loss.push_back(loss_sum / double(n_subjects));
  }
  log.train_subjects.assign(seen.begin(), seen.end());
  return log;
}

template <class T>
Confusion evaluate(const Model<T>& model, const std::vector<Session>& dataset,
                   const FoldPlan* plan, int fold) {
  Confusion c;
  for (const auto& s : dataset) {
    if (fold >= 0) {
      const auto it = plan->fold_of.find(s.subject_id);
      if (it == plan->fold_of.end() || it->second != fold) continue;
    }
    const double p = double(model.predict(nullptr, s).item());
    c.add(decide(p), s.label);
  }
  return c;
}

Confusion evaluate_sds_sum(const std::vector<Session>& dataset, const FoldPlan* plan, int fold) {
  Confusion c;
  for (const auto& s : dataset) {
    if (fold >= 0) {
      const auto it = plan->fold_of.find(s.subject_id);
      if (it == plan->fold_of.end() || it->second != fold) continue;
    }
    std::vector<int> answers;
    answers.reserve(s.questions.size());
    for (const auto& q : s.questions) answers.push_back(q.answer);
    c.add(sds_sum_baseline(answers), s.label);
  }
  return c;
}

namespace {

struct CvTask {
  int fold;
  uint64_t seed;
};

struct CvTaskResult {
  Confusion confusion;
  FoldAudit audit;
};

template <class T>
CvTaskResult run_cv_task(const std::vector<Session>& dataset, const ModelConfig& model_cfg,
                         const TrainConfig& train_cfg, const FoldPlan& plan, const CvTask& task) {
  Model<T> model(model_cfg, derive_seed(task.seed, uint64_t(task.fold)));
  TrainLog log = train(model, dataset, plan, task.fold, train_cfg,
                       derive_seed(task.seed, 0x1000 + uint64_t(task.fold)));
  CvTaskResult res;
  res.confusion = evaluate(model, dataset, &plan, task.fold);
  res.audit.fold = task.fold;
  res.audit.seed = task.seed;
  res.audit.held_out = plan.members(task.fold);
  res.audit.trained_on = log.train_subjects;
  res.audit.leakage_checks = log.leakage_checks;
  std::set<std::string> held(res.audit.held_out.begin(), res.audit.held_out.end());
  res.audit.disjoint = std::none_of(log.train_subjects.begin(), log.train_subjects.end(),
                                    [&](const std::string& id) { return held.count(id) > 0; });
  size_t expected = 0;
  for (int f = 0; f < plan.n_folds; ++f) {
    if (f != task.fold) expected += plan.members(f).size();
  }
  res.audit.complete = log.train_subjects.size() == expected && train_cfg.epochs > 0;
  return res;
}

}  // namespace

CrossValidationResult cross_validate(const std::vector<Session>& dataset,
                                     const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                     const CvOptions& opts) {
  train_cfg.validate();
  model_cfg.validate();
  if (int(dataset.size()) < opts.n_folds) {
    throw ConfigError("dataset has " + std::to_string(dataset.size()) + " subjects, fewer than " +
                      std::to_string(opts.n_folds) + " folds");
  }
  std::vector<std::string> ids;
  ids.reserve(dataset.size());
  for (const auto& s : dataset) ids.push_back(s.subject_id);
  const FoldPlan plan = FoldPlan::make(ids, opts.n_folds, opts.fold_seed);

  CrossValidationResult result;

  if (opts.include_sds_baseline || !opts.train_model) {
    for (int fold = 0; fold < opts.n_folds; ++fold) {
      const Confusion c = evaluate_sds_sum(dataset, &plan, fold);
      for (uint64_t seed : train_cfg.seeds) {
        result.report.add({"sds_sum", fold, seed, c});
      }
    }
  }

  if (opts.train_model) {
    std::vector<CvTask> tasks;
    for (int fold = 0; fold < opts.n_folds; ++fold) {
      for (uint64_t seed : train_cfg.seeds) tasks.push_back({fold, seed});
    }
    std::vector<CvTaskResult> results(tasks.size());

    const int jobs = std::max(1, opts.jobs);
    const auto worker_body = [&](size_t ti) {
      if (model_cfg.dtype == Dtype::f64) {
        results[ti] = run_cv_task<double>(dataset, model_cfg, train_cfg, plan, tasks[ti]);
      } else {
        results[ti] = run_cv_task<float>(dataset, model_cfg, train_cfg, plan, tasks[ti]);
      }
    };
    if (jobs == 1) {
      for (size_t ti = 0; ti < tasks.size(); ++ti) worker_body(ti);
    } else {
      std::atomic<size_t> next{0};
      std::vector<std::exception_ptr> errors(static_cast<size_t>(jobs));
      std::vector<std::thread> threads;
      for (int j = 0; j < jobs; ++j) {
        threads.emplace_back([&, j]() {
          try {
            for (size_t ti = next.fetch_add(1); ti < tasks.size(); ti = next.fetch_add(1)) {
              worker_body(ti);
            }
          } catch (...) {
            errors[size_t(j)] = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }

    const std::string label = model_cfg.method_label();
    for (size_t ti = 0; ti < tasks.size(); ++ti) {
      result.report.add({label, tasks[ti].fold, tasks[ti].seed, results[ti].confusion});
      result.audits.push_back(results[ti].audit);
    }
  }
  return result;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(ParamStore<float>&, AdamState<float>&, const TrainConfig&);
template void adam_step<double>(ParamStore<double>&, AdamState<double>&, const TrainConfig&);
template TrainLog train<float>(Model<float>&, const std::vector<Session>&, const FoldPlan&, int,
                               const TrainConfig&, uint64_t);
template TrainLog train<double>(Model<double>&, const std::vector<Session>&, const FoldPlan&, int,
                                const TrainConfig&, uint64_t);
template Confusion evaluate<float>(const Model<float>&, const std::vector<Session>&,
                                   const FoldPlan*, int);
template Confusion evaluate<double>(const Model<double>&, const std::vector<Session>&,
                                    const FoldPlan*, int);

}  // namespace qscreen
