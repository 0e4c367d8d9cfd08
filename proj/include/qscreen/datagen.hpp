#pragma once

#include <cstdint>
#include <vector>

#include "qscreen/rng.hpp"
#include "qscreen/session.hpp"

namespace qscreen {

// Synthetic cohort generator. Depression labels get a planted temporal video
// cue; SDS answers are drawn so the 50-point sum decision agrees with the
// label for a controlled fraction of each class.
struct GenSpec {
  int n_subjects = 200;
  double prevalence = 0.47;      // fraction of depression labels
  double sds_agreement = 0.80;   // fraction whose SDS decision matches the label
  double signal_strength = 0.2;  // planted video cue amplitude
  int frames_per_clip = 16;
  int clip_height = 32;
  int clip_width = 32;
  uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

// Deterministic under spec.seed; each subject's stream derives from
// (seed, subject index), so parallel and serial generation agree.
std::vector<Session> generate(const GenSpec& spec);

// clip + strength * s(t) * g(h,w), clamped to [0,1]. g is a fixed-block
// pattern with zero spatial mean, s(t) a sinusoid with rng-drawn phase, so a
// per-frame spatial mean carries no class information.
Tensor<float> plant_signal(const Tensor<float>& clip, double strength, Rng& rng);

struct CohortSummary {
  int n_normal = 0;
  int n_depression = 0;
  // SDS sum-threshold decision vs label, Table-style cells
  int label0_sds0 = 0;
  int label0_sds1 = 0;
  int label1_sds0 = 0;
  int label1_sds1 = 0;
};

CohortSummary summarize(const std::vector<Session>& sessions);

}  // namespace qscreen
