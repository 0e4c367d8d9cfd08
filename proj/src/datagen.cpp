#include "qscreen/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace qscreen {

namespace {

constexpr double kSignalCyclesPerClip = 2.0;
constexpr double kNoiseStddev = 0.05;
constexpr double kBaseIntensity = 0.5;
// Base intensity band leaves headroom so a planted cue of moderate strength
// never hits the [0,1] clamp.
constexpr float kBaseLo = 0.25f;
constexpr float kBaseHi = 0.75f;

// Fixed block-checkerboard spatial profile, zero mean over the frame.
std::vector<float> spatial_profile(int h, int w) {
  std::vector<float> g(size_t(h) * w);
  const int bh = std::max(1, h / 4);
  const int bw = std::max(1, w / 4);
  double sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float v = ((y / bh + x / bw) % 2 == 0) ? 1.0f : -1.0f;
      g[size_t(y) * w + x] = v;
      sum += v;
    }
  }
  const float mean = float(sum / (double(h) * w));
  if (mean != 0.0f) {
    for (auto& v : g) v -= mean;
  }
  return g;
}

// 20 answers in 1..4 with an exact total, shuffled so no position dominates.
std::vector<int> draw_answers(Rng& rng, bool sds_positive) {
  const int target = sds_positive ? rng.uniform_int(kSdsThreshold, 68) : rng.uniform_int(26, 48);
  std::vector<int> a(kQuestionsPerSession, target / kQuestionsPerSession);
  std::vector<int> order(kQuestionsPerSession);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  for (int i = 0; i < target % kQuestionsPerSession; ++i) a[size_t(order[size_t(i)])] += 1;
  // redistribute without changing the sum
  for (int step = 0; step < 40; ++step) {
    const int i = rng.uniform_int(0, kQuestionsPerSession - 1);
    const int j = rng.uniform_int(0, kQuestionsPerSession - 1);
    if (i != j && a[size_t(i)] < 4 && a[size_t(j)] > 1) {
      a[size_t(i)] += 1;
      a[size_t(j)] -= 1;
    }
  }
  return a;
}

Tensor<float> noise_clip(Rng& rng, int t, int h, int w) {
  Tensor<float> clip(Shape{t, h, w});
  for (auto& v : clip.values()) {
    v = std::clamp(float(kBaseIntensity + kNoiseStddev * rng.normal()), kBaseLo, kBaseHi);
  }
  return clip;
}

}  // namespace

void GenSpec::validate() const {
  if (n_subjects < 1) throw ConfigError("n_subjects must be >= 1");
  if (prevalence < 0.0 || prevalence > 1.0) throw ConfigError("prevalence must be in [0,1]");
  if (sds_agreement < 0.0 || sds_agreement > 1.0) {
    throw ConfigError("sds_agreement must be in [0,1]");
  }
  if (signal_strength < 0.0) throw ConfigError("signal_strength must be >= 0");
  if (frames_per_clip < 1 || clip_height < 1 || clip_width < 1) {
    throw ConfigError("clip dimensions must be positive");
  }
  const long n_dep = std::lround(prevalence * n_subjects);
  if (n_dep < 0 || n_dep > n_subjects) {
    throw ConfigError("prevalence " + std::to_string(prevalence) + " unreachable for " +
                      std::to_string(n_subjects) + " subjects");
  }
}

Tensor<float> plant_signal(const Tensor<float>& clip, double strength, Rng& rng) {
  if (clip.rank() != 3) throw ShapeError("plant_signal expects [T,H,W], got " + shape_str(clip.dims()));
  if (strength < 0.0) throw ConfigError("signal strength must be >= 0");
  const int t = clip.dim(0), h = clip.dim(1), w = clip.dim(2);
  const double phase = rng.uniform(0.0, 6.283185307179586);

  Tensor<float> out(clip.dims());
  const std::vector<float> g = spatial_profile(h, w);
  const float* src = clip.values().data();
  float* dst = out.values().data();
  const int64_t plane = int64_t(h) * w;
  for (int ti = 0; ti < t; ++ti) {
    const float s =
        float(strength * std::sin(6.283185307179586 * kSignalCyclesPerClip * ti / t + phase));
    const float* gp = g.data();
    const float* sp = src + int64_t(ti) * plane;
    float* dp = dst + int64_t(ti) * plane;
    for (int64_t i = 0; i < plane; ++i) {
      dp[i] = std::clamp(sp[i] + s * gp[i], 0.0f, 1.0f);
    }
  }
  return out;
}

std::vector<Session> generate(const GenSpec& spec) {
  spec.validate();
  const int n = spec.n_subjects;
  const int n_dep = int(std::lround(spec.prevalence * n));

  // Label assignment, then per-class disagreement flags, both from the
  // cohort-level stream so per-subject streams stay index-stable.
  Rng cohort_rng(derive_seed(spec.seed, 0));
  std::vector<int> labels(size_t(n), 0);
  std::fill(labels.begin(), labels.begin() + n_dep, 1);
  cohort_rng.shuffle(labels.begin(), labels.end());

  std::vector<char> disagree(size_t(n), 0);
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i) {
      if (labels[size_t(i)] == cls) members.push_back(i);
    }
    const int n_agree = int(std::lround(spec.sds_agreement * double(members.size())));
    cohort_rng.shuffle(members.begin(), members.end());
    for (size_t k = size_t(n_agree); k < members.size(); ++k) disagree[size_t(members[k])] = 1;
  }

  std::vector<Session> sessions(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(spec.seed, uint64_t(i) + 1));
    Session& s = sessions[size_t(i)];
    char id[16];
    std::snprintf(id, sizeof(id), "s%04d", i);
    s.subject_id = id;
    s.label = labels[size_t(i)];

    const bool sds_positive = (s.label == 1) != bool(disagree[size_t(i)]);
    const std::vector<int> answers = draw_answers(rng, sds_positive);
    // depression medians are slower: log-normal around 6 s vs 3 s
    const double mu = s.label == 1 ? std::log(6.0) : std::log(3.0);

    s.questions.resize(kQuestionsPerSession);
    for (int q = 0; q < kQuestionsPerSession; ++q) {
      QuestionRecord& rec = s.questions[size_t(q)];
      rec.answer = answers[size_t(q)];
      rec.response_time_sec = rng.lognormal(mu, 0.35);
      Tensor<float> clip = noise_clip(rng, spec.frames_per_clip, spec.clip_height, spec.clip_width);
      // phase draw happens for both classes to keep the streams aligned
      Tensor<float> planted = plant_signal(clip, spec.signal_strength, rng);
      rec.clip = s.label == 1 ? std::move(planted) : std::move(clip);
    }
  }
  return sessions;
}

CohortSummary summarize(const std::vector<Session>& sessions) {
  CohortSummary c;
  for (const auto& s : sessions) {
    const bool sds_pos = s.sds_sum() >= kSdsThreshold;
    if (s.label == 1) {
      ++c.n_depression;
      (sds_pos ? c.label1_sds1 : c.label1_sds0) += 1;
    } else {
      ++c.n_normal;
      (sds_pos ? c.label0_sds1 : c.label0_sds0) += 1;
    }
  }
  return c;
}

}  // namespace qscreen
