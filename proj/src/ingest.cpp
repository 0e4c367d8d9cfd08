#include "qscreen/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "qscreen/clipfile.hpp"

namespace qscreen {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string clip_filename(int question_index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "q%02d.clip", question_index + 1);
  return buf;
}

void check_keys(const ordered_json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* k) { return it.key() == k; }) == allowed.end()) {
      throw FormatError(where + ": unknown key \"" + it.key() + "\"");
    }
  }
}

}  // namespace

void write_session(const Session& session, const fs::path& dir) {
  if (session.questions.size() != kQuestionsPerSession) {
    throw FormatError("session " + session.subject_id + " has " +
                      std::to_string(session.questions.size()) + " questions, expected 20");
  }
  if (session.label != 0 && session.label != 1) {
    throw FormatError("session " + session.subject_id + " label must be 0 or 1");
  }
  fs::create_directories(dir);

  ordered_json manifest;
  manifest["subject_id"] = session.subject_id;
  manifest["label"] = session.label;
  manifest["questions"] = ordered_json::array();
  for (size_t i = 0; i < session.questions.size(); ++i) {
    const auto& q = session.questions[i];
    if (q.answer < 1 || q.answer > 4) {
      throw FormatError("question " + std::to_string(i) + " answer out of range 1..4");
    }
    if (!(q.response_time_sec > 0)) {
      throw FormatError("question " + std::to_string(i) + " response time must be positive");
    }
    ordered_json entry;
    entry["answer"] = q.answer;
    entry["response_time_sec"] = q.response_time_sec;
    entry["clip_path"] = clip_filename(int(i));
    if (q.crop_box) {
      entry["crop_box"] = {q.crop_box->x, q.crop_box->y, q.crop_box->w, q.crop_box->h};
    }
    manifest["questions"].push_back(std::move(entry));
    write_clip(dir / clip_filename(int(i)), q.clip);
  }

  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError((dir / "manifest.json").string() + ": cannot open for writing");
  out << manifest.dump(2) << '\n';
}

Session read_session(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw FormatError(manifest_path.string() + ": cannot open manifest");
  ordered_json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  check_keys(manifest, {"subject_id", "label", "questions"}, manifest_path.string());

  Session s;
  s.subject_id = manifest.at("subject_id").get<std::string>();
  s.label = manifest.at("label").get<int>();
  if (s.label != 0 && s.label != 1) {
    throw FormatError(manifest_path.string() + ": label must be 0 or 1");
  }
  const auto& questions = manifest.at("questions");
  if (!questions.is_array() || questions.size() != kQuestionsPerSession) {
    throw FormatError(manifest_path.string() + ": expected exactly 20 question entries");
  }
  for (size_t i = 0; i < questions.size(); ++i) {
    const auto& entry = questions[i];
    check_keys(entry, {"answer", "response_time_sec", "clip_path", "crop_box"},
               manifest_path.string() + " question " + std::to_string(i));
    QuestionRecord q;
    q.answer = entry.at("answer").get<int>();
    if (q.answer < 1 || q.answer > 4) {
      throw FormatError(manifest_path.string() + ": question " + std::to_string(i) +
                        " answer out of range 1..4");
    }
    q.response_time_sec = entry.at("response_time_sec").get<double>();
    if (!(q.response_time_sec > 0)) {
      throw FormatError(manifest_path.string() + ": question " + std::to_string(i) +
                        " response time must be positive");
    }
    const fs::path clip_path = dir / entry.at("clip_path").get<std::string>();
    if (!fs::exists(clip_path)) {
      throw FormatError(manifest_path.string() + ": question " + std::to_string(i) +
                        " clip file missing: " + clip_path.string());
    }
    if (entry.contains("crop_box")) {
      const auto& cb = entry.at("crop_box");
      if (!cb.is_array() || cb.size() != 4) {
        throw FormatError(manifest_path.string() + ": crop_box must be [x,y,w,h]");
      }
      q.crop_box = CropBox{cb[0].get<int>(), cb[1].get<int>(), cb[2].get<int>(), cb[3].get<int>()};
    }
    q.clip = read_clip(clip_path);
    s.questions.push_back(std::move(q));
  }
  return s;
}

void write_cohort(const std::vector<Session>& sessions, const fs::path& root) {
  fs::create_directories(root);
  for (const auto& s : sessions) write_session(s, root / s.subject_id);
}

std::vector<std::string> list_subjects(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw FormatError(root.string() + ": not a session store directory");
  }
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) {
      ids.push_back(e.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw FormatError(root.string() + ": no sessions found");
  return ids;
}

std::vector<Session> read_cohort(const fs::path& root) {
  std::vector<Session> sessions;
  for (const auto& id : list_subjects(root)) sessions.push_back(read_session(root / id));
  return sessions;
}

CropBox expand_crop(const CropBox& box, double factor, int frame_h, int frame_w) {
  if (box.w <= 0 || box.h <= 0) {
    throw ShapeError("degenerate crop box " + std::to_string(box.w) + "x" + std::to_string(box.h));
  }
  if (factor < 1.0) throw ShapeError("crop expansion factor must be >= 1");
  if (box.x < 0 || box.y < 0 || box.x + box.w > frame_w || box.y + box.h > frame_h) {
    throw ShapeError("crop box outside frame");
  }
  CropBox out;
  out.w = int(std::lround(box.w * factor));
  out.h = int(std::lround(box.h * factor));
  out.x = int(std::lround(box.x + (box.w - out.w) / 2.0));
  out.y = int(std::lround(box.y + (box.h - out.h) / 2.0));
  // clip to frame
  out.x = std::max(0, out.x);
  out.y = std::max(0, out.y);
  out.w = std::min(out.w, frame_w - out.x);
  out.h = std::min(out.h, frame_h - out.y);
  return out;
}

Tensor<float> resize_bilinear(const Tensor<float>& image, int out_h, int out_w) {
  if (image.rank() != 2) throw ShapeError("resize expects [H,W], got " + shape_str(image.dims()));
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize target dims must be positive");
  const int h = image.dim(0), w = image.dim(1);
  if (h == out_h && w == out_w) return image.detach();

  Tensor<float> out(Shape{out_h, out_w});
  const float* src = image.values().data();
  float* dst = out.values().data();
  const double sy = double(h) / out_h;
  const double sx = double(w) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, double(h - 1));
    const int y0 = int(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, double(w - 1));
      const int x0 = int(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      const double top = src[y0 * w + x0] * (1 - wx) + src[y0 * w + x1] * wx;
      const double bot = src[y1 * w + x0] * (1 - wx) + src[y1 * w + x1] * wx;
      dst[oy * out_w + ox] = float(top * (1 - wy) + bot * wy);
    }
  }
  return out;
}

Tensor<float> to_grayscale(const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("to_grayscale expects [3,H,W], got " + shape_str(image.dims()));
  }
  const int h = image.dim(1), w = image.dim(2);
  const int64_t plane = int64_t(h) * w;
  Tensor<float> out(Shape{h, w});
  const float* src = image.values().data();
  float* dst = out.values().data();
  for (int64_t i = 0; i < plane; ++i) {
    dst[i] = 0.299f * src[i] + 0.587f * src[plane + i] + 0.114f * src[2 * plane + i];
  }
  return out;
}

Tensor<float> uniform_sample(const Tensor<float>& clip, int frames) {
  if (clip.rank() != 3) throw ShapeError("uniform_sample expects [T,H,W], got " + shape_str(clip.dims()));
  if (frames <= 0) throw ShapeError("uniform_sample frame count must be positive");
  const int n = clip.dim(0);
  if (n < 1) throw ShapeError("uniform_sample on empty clip");
  const int h = clip.dim(1), w = clip.dim(2);
  const int64_t plane = int64_t(h) * w;
  Tensor<float> out(Shape{frames, h, w});
  const float* src = clip.values().data();
  float* dst = out.values().data();
  for (int i = 0; i < frames; ++i) {
    const int idx = int((int64_t(i) * n) / frames);
    std::copy(src + idx * plane, src + (idx + 1) * plane, dst + int64_t(i) * plane);
  }
  return out;
}

Tensor<float> encode_answer(int answer) {
  if (answer < 1 || answer > 4) {
    throw NumericError("answer must be in 1..4, got " + std::to_string(answer));
  }
  Tensor<float> out(Shape{4});
  out.values()[size_t(answer - 1)] = 1.0f;
  return out;
}

Tensor<float> encode_time(double seconds) {
  return Tensor<float>::scalar(float(seconds));
}

Tensor<float> prepare_clip(const Tensor<float>& raw, const std::optional<CropBox>& crop_box,
                           double crop_factor, int frames, int out_h, int out_w) {
  Tensor<float> clip;
  if (raw.rank() == 4) {
    // [T,C,H,W]: gray-process each frame first
    const int t = raw.dim(0), c = raw.dim(1), h = raw.dim(2), w = raw.dim(3);
    if (c != 3) throw ShapeError("rank-4 clip must have 3 channels, got " + shape_str(raw.dims()));
    clip = Tensor<float>(Shape{t, h, w});
    const int64_t plane = int64_t(h) * w;
    for (int i = 0; i < t; ++i) {
      Tensor<float> frame(Shape{3, h, w});
      std::copy_n(raw.values().data() + int64_t(i) * 3 * plane, 3 * plane, frame.values().begin());
      Tensor<float> gray = to_grayscale(frame);
      std::copy_n(gray.values().data(), plane, clip.values().begin() + int64_t(i) * plane);
    }
  } else if (raw.rank() == 3) {
    clip = raw;
  } else {
    throw ShapeError("clip must be [T,H,W] or [T,C,H,W], got " + shape_str(raw.dims()));
  }

  // Temporal sampling first: per-frame work then touches only kept frames.
  clip = uniform_sample(clip, frames);

  const int h = clip.dim(1), w = clip.dim(2);
  std::optional<CropBox> box;
  if (crop_box) box = expand_crop(*crop_box, crop_factor, h, w);

  Tensor<float> out(Shape{frames, out_h, out_w});
  const int64_t out_plane = int64_t(out_h) * out_w;
  for (int i = 0; i < frames; ++i) {
    Tensor<float> frame(Shape{h, w});
    std::copy_n(clip.values().data() + int64_t(i) * h * w, int64_t(h) * w, frame.values().begin());
    if (box) {
      Tensor<float> cropped(Shape{box->h, box->w});
      for (int y = 0; y < box->h; ++y) {
        std::copy_n(frame.values().data() + int64_t(box->y + y) * w + box->x, box->w,
                    cropped.values().begin() + int64_t(y) * box->w);
      }
      frame = std::move(cropped);
    }
    Tensor<float> resized = resize_bilinear(frame, out_h, out_w);
    std::copy_n(resized.values().data(), out_plane, out.values().begin() + int64_t(i) * out_plane);
  }
  return out;
}

}  // namespace qscreen
