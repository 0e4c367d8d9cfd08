#include "qscreen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace qscreen {

void Confusion::add(int predicted, int label) {
  if (label == 1) {
    (predicted == 1 ? tp : fn) += 1;
  } else {
    (predicted == 1 ? fp : tn) += 1;
  }
}

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  fn += o.fn;
  fp += o.fp;
  tn += o.tn;
  return *this;
}

double accuracy(const Confusion& c) {
  const int64_t n = c.total();
  return n == 0 ? 0.0 : double(c.tp + c.tn) / double(n);
}

double sensitivity(const Confusion& c) {
  const int64_t n = c.tp + c.fn;
  return n == 0 ? 0.0 : double(c.tp) / double(n);
}

double specificity(const Confusion& c) {
  const int64_t n = c.tn + c.fp;
  return n == 0 ? 0.0 : double(c.tn) / double(n);
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& std_out) {
  mean = 0.0;
  std_out = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  std_out = std::sqrt(ss / double(xs.size() - 1));
}

}  // namespace

std::vector<MethodAggregate> MetricsReport::aggregates() const {
  // preserve first-appearance order of methods and seeds
  std::vector<std::string> methods;
  for (const auto& r : rows_) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
  }
  std::vector<MethodAggregate> out;
  for (const auto& method : methods) {
    std::vector<uint64_t> seeds;
    for (const auto& r : rows_) {
      if (r.method == method && std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) {
        seeds.push_back(r.seed);
      }
    }
    std::vector<double> acc, sens, spec;
    for (uint64_t seed : seeds) {
      Confusion pooled;
      for (const auto& r : rows_) {
        if (r.method == method && r.seed == seed) pooled += r.confusion;
      }
      acc.push_back(accuracy(pooled));
      sens.push_back(sensitivity(pooled));
      spec.push_back(specificity(pooled));
    }
    MethodAggregate agg;
    agg.method = method;
    agg.n_seeds = int(seeds.size());
    mean_std(acc, agg.acc_mean, agg.acc_std);
    mean_std(sens, agg.sens_mean, agg.sens_std);
    mean_std(spec, agg.spec_mean, agg.spec_std);
    out.push_back(agg);
  }
  return out;
}

std::string MetricsReport::to_csv() const {
  std::string out = "method,fold,seed,TP,FN,FP,TN,accuracy,sensitivity,specificity\n";
  char buf[256];
  for (const auto& r : rows_) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%llu,%lld,%lld,%lld,%lld,%.6f,%.6f,%.6f\n",
                  r.method.c_str(), r.fold, (unsigned long long)r.seed, (long long)r.confusion.tp,
                  (long long)r.confusion.fn, (long long)r.confusion.fp, (long long)r.confusion.tn,
                  accuracy(r.confusion), sensitivity(r.confusion), specificity(r.confusion));
    out += buf;
  }
  return out;
}

std::string MetricsReport::to_table() const {
  std::ostringstream os;
  os << "# held-out predictions pooled across folds per seed; mean±std over seeds (sample std)\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-28s %-15s %-15s %-15s\n", "method", "accuracy", "sensitivity",
                "specificity");
  os << buf;
  for (const auto& a : aggregates()) {
    std::snprintf(buf, sizeof(buf), "%-28s %.3f±%.3f     %.3f±%.3f     %.3f±%.3f\n",
                  a.method.c_str(), a.acc_mean, a.acc_std, a.sens_mean, a.sens_std, a.spec_mean,
                  a.spec_std);
    os << buf;
  }
  return os.str();
}

}  // namespace qscreen
