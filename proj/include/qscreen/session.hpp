#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qscreen/tensor.hpp"

namespace qscreen {

inline constexpr int kQuestionsPerSession = 20;
inline constexpr int kSdsThreshold = 50;  // sum >= 50 screens positive

// Face box in source-pixel coordinates: x is the left column, y the top row.
struct CropBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

struct QuestionRecord {
  int answer = 1;                  // 1..4
  double response_time_sec = 0.0;  // > 0
  Tensor<float> clip;              // [T,H,W] grayscale in [0,1], or [T,C,H,W] raw
  std::optional<CropBox> crop_box;
};

// One subject: 20 question records plus the interview diagnosis.
struct Session {
  std::string subject_id;
  int label = 0;  // 0 = normal, 1 = depression
  std::vector<QuestionRecord> questions;

  int sds_sum() const {
    int s = 0;
    for (const auto& q : questions) s += q.answer;
    return s;
  }
};

}  // namespace qscreen
