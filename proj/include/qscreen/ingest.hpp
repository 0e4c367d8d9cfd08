#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qscreen/session.hpp"
#include "qscreen/tensor.hpp"

namespace qscreen {

// Session store: one directory per subject holding manifest.json plus twenty
// clip files (q01.clip .. q20.clip). The manifest carries subject_id, label
// and per-question answer / response time / clip path / optional crop box.

void write_session(const Session& session, const std::filesystem::path& dir);
Session read_session(const std::filesystem::path& dir);

// root/<subject_id>/ per session
void write_cohort(const std::vector<Session>& sessions, const std::filesystem::path& root);
std::vector<Session> read_cohort(const std::filesystem::path& root);
std::vector<std::string> list_subjects(const std::filesystem::path& root);

// Box scaled about its center by `factor`, then clipped to the frame.
CropBox expand_crop(const CropBox& box, double factor, int frame_h, int frame_w);

// Bilinear resize with the half-pixel (corner-aligned-false) convention.
Tensor<float> resize_bilinear(const Tensor<float>& image, int out_h, int out_w);

// [3,H,W] -> [H,W] with luma weights 0.299 / 0.587 / 0.114.
Tensor<float> to_grayscale(const Tensor<float>& image);

// Frame indices floor(i*N/T); duplicates frames when N < T.
Tensor<float> uniform_sample(const Tensor<float>& clip, int frames);

Tensor<float> encode_answer(int answer);          // one-hot [4]
Tensor<float> encode_time(double seconds);        // raw seconds [1]

// Full preprocessing for one question clip: grayscale if [T,3,H,W], expand +
// apply the crop box if present, uniform-sample to `frames`, then resize each
// frame to out_h x out_w. Returns [frames, out_h, out_w].
Tensor<float> prepare_clip(const Tensor<float>& raw, const std::optional<CropBox>& crop_box,
                           double crop_factor, int frames, int out_h, int out_w);

inline constexpr double kCropExpandFactor = 1.2;

}  // namespace qscreen
