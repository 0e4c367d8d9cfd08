#include "qscreen/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "qscreen/clipfile.hpp"
#include "qscreen/ingest.hpp"
#include "qscreen/rng.hpp"

namespace qscreen {

std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::q3dcnn: return "q3dcnn";
    case EncoderKind::bilstm: return "bilstm";
    case EncoderKind::nonlocal: return "nonlocal";
    case EncoderKind::none: return "none";
  }
  return "?";
}

std::string to_string(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

EncoderKind encoder_from_string(const std::string& s) {
  if (s == "q3dcnn") return EncoderKind::q3dcnn;
  if (s == "bilstm") return EncoderKind::bilstm;
  if (s == "nonlocal") return EncoderKind::nonlocal;
  if (s == "none") return EncoderKind::none;
  throw ConfigError("unknown encoder \"" + s + "\" (q3dcnn|bilstm|nonlocal|none)");
}

Dtype dtype_from_string(const std::string& s) {
  if (s == "f32") return Dtype::f32;
  if (s == "f64") return Dtype::f64;
  throw ConfigError("unknown dtype \"" + s + "\" (f32|f64)");
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig cfg;
  cfg.encoder = EncoderKind::q3dcnn;
  cfg.height = 110;
  cfg.width = 110;
  cfg.frames = 100;
  cfg.channel_widths = {16, 32, 64, 128, 256};
  // temporal chain 100-50-25-13-6 needs ceil only at the third pool
  cfg.pool_rounding = {
      {Rounding::floor, Rounding::floor, Rounding::floor},
      {Rounding::floor, Rounding::floor, Rounding::floor},
      {Rounding::ceil, Rounding::floor, Rounding::floor},
      {Rounding::floor, Rounding::floor, Rounding::floor},
  };
  cfg.feature_dim = 128;
  cfg.fusion_hidden = {1024, 256};
  return cfg;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.encoder = EncoderKind::q3dcnn;
  cfg.height = 32;
  cfg.width = 32;
  cfg.frames = 16;
  cfg.channel_widths = {4, 8, 16, 32, 64};
  cfg.pool_rounding = {
      {Rounding::floor, Rounding::floor, Rounding::floor},
      {Rounding::floor, Rounding::ceil, Rounding::ceil},
      {Rounding::floor, Rounding::ceil, Rounding::ceil},
      {Rounding::floor, Rounding::ceil, Rounding::ceil},
  };
  cfg.feature_dim = 128;
  cfg.fusion_hidden = {1024, 256};
  return cfg;
}

namespace {

int pool_out(int n, Rounding r) { return r == Rounding::floor ? n / 2 : (n + 1) / 2; }

void check_positive(const char* what, int v, const std::string& stage) {
  if (v <= 0) {
    throw ConfigError("infeasible model config: " + stage + " " + what + " collapses to " +
                      std::to_string(v));
  }
}

// Frame-encoder chain for bilstm/nonlocal: two stride-2 valid 3x3 convs.
struct FrameChain {
  int h1, w1, h2, w2, flat;
};

FrameChain frame_chain(const ModelConfig& cfg) {
  FrameChain fc{};
  fc.h1 = (cfg.height - 3) / 2 + 1;
  fc.w1 = (cfg.width - 3) / 2 + 1;
  if (cfg.height < 3 || cfg.width < 3) throw ConfigError("frame encoder needs at least 3x3 input");
  check_positive("height", fc.h1, "frame conv1");
  check_positive("width", fc.w1, "frame conv1");
  if (fc.h1 < 3 || fc.w1 < 3) throw ConfigError("frame conv2 needs at least 3x3 input");
  fc.h2 = (fc.h1 - 3) / 2 + 1;
  fc.w2 = (fc.w1 - 3) / 2 + 1;
  check_positive("height", fc.h2, "frame conv2");
  check_positive("width", fc.w2, "frame conv2");
  fc.flat = cfg.frame_channels[1] * fc.h2 * fc.w2;
  return fc;
}

}  // namespace

std::vector<TraceRow> q3dcnn_shape_trace(const ModelConfig& cfg) {
  if (cfg.channel_widths.size() < 2) {
    throw ConfigError("q3dcnn needs at least two channel widths");
  }
  const size_t stages = cfg.channel_widths.size();
  std::vector<PoolRounding> rounding = cfg.pool_rounding;
  if (rounding.empty()) rounding.assign(stages - 1, PoolRounding{});
  if (rounding.size() != stages - 1) {
    throw ConfigError("pool_rounding needs " + std::to_string(stages - 1) + " entries, got " +
                      std::to_string(rounding.size()));
  }

  std::vector<TraceRow> trace;
  int c = 1, t = cfg.frames, h = cfg.height, w = cfg.width;
  trace.push_back({"input", {c, t, h, w}});
  for (size_t i = 0; i + 1 < stages; ++i) {
    const std::string stage = std::to_string(i + 1);
    if (h < 3 || w < 3) {
      throw ConfigError("infeasible model config: conv" + stage + " input " +
                        shape_str({c, t, h, w}) + " smaller than 3x3 kernel");
    }
    c = cfg.channel_widths[i];
    h -= 2;
    w -= 2;  // 3x3x3 kernel, temporal pad 1 keeps t
    trace.push_back({"conv" + stage, {c, t, h, w}});
    const PoolRounding pr = rounding[i];
    t = pool_out(t, pr.t);
    h = pool_out(h, pr.h);
    w = pool_out(w, pr.w);
    check_positive("T", t, "pool" + stage);
    check_positive("H", h, "pool" + stage);
    check_positive("W", w, "pool" + stage);
    trace.push_back({"pool" + stage, {c, t, h, w}});
  }
  // final conv spans the whole remaining block
  c = cfg.channel_widths.back();
  trace.push_back({"conv" + std::to_string(stages), {c, 1, 1, 1}});
  trace.push_back({"flatten", {c}});
  trace.push_back({"fc", {cfg.feature_dim}});
  return trace;
}

void ModelConfig::validate() const {
  if (frames < 1 || height < 1 || width < 1) throw ConfigError("clip dims must be positive");
  if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
  for (int hdim : fusion_hidden) {
    if (hdim < 1) throw ConfigError("fusion hidden dims must be positive");
  }
  switch (encoder) {
    case EncoderKind::q3dcnn:
      q3dcnn_shape_trace(*this);
      break;
    case EncoderKind::bilstm:
      if (frame_channels.size() != 2) throw ConfigError("frame_channels must list two widths");
      if (frame_embed_dim < 1 || rnn_hidden < 1) {
        throw ConfigError("frame_embed_dim and rnn_hidden must be positive");
      }
      frame_chain(*this);
      break;
    case EncoderKind::nonlocal:
      if (frame_channels.size() != 2) throw ConfigError("frame_channels must list two widths");
      if (frame_embed_dim < 1) throw ConfigError("frame_embed_dim must be positive");
      frame_chain(*this);
      break;
    case EncoderKind::none:
      break;
  }
}

std::string ModelConfig::method_label() const {
  std::string mod;
  if (use_sds) mod += "sds";
  if (use_time) mod += mod.empty() ? "time" : "+time";
  if (encoder != EncoderKind::none) mod += mod.empty() ? "video" : "+video";
  if (mod.empty()) mod = "const";
  return mod + ":" + to_string(encoder);
}

template <class T>
Tensor<T>& ParamStore<T>::add(const std::string& name, Shape dims) {
  for (auto& [n, _] : items_) {
    if (n == name) throw ConfigError("duplicate parameter name " + name);
  }
  items_.emplace_back(name, Tensor<T>(std::move(dims), /*requires_grad=*/true));
  return items_.back().second;
}

template <class T>
Tensor<T>& ParamStore<T>::at(const std::string& name) {
  for (auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw ConfigError("unknown parameter " + name);
}

template <class T>
const Tensor<T>& ParamStore<T>::at(const std::string& name) const {
  return const_cast<ParamStore<T>*>(this)->at(name);
}

template <class T>
int64_t ParamStore<T>::total_size() const {
  int64_t n = 0;
  for (const auto& [_, t] : items_) n += t.size();
  return n;
}

template <class T>
void ParamStore<T>::zero_grads() {
  for (auto& [_, t] : items_) t.zero_grad();
}

namespace {

// Glorot-uniform weights, zero biases. Every parameter draws from its own
// derived stream so the layout of the store does not shift earlier draws.
template <class T>
void init_params(ParamStore<T>& store, uint64_t seed) {
  size_t index = 0;
  for (auto& [name, tensor] : store.items()) {
    (void)name;
    if (tensor.rank() >= 2) {
      int64_t fan_out = tensor.dim(0);
      int64_t fan_in = tensor.dim(1);
      for (int i = 2; i < tensor.rank(); ++i) {
        fan_in *= tensor.dim(i);
        fan_out *= tensor.dim(i);
      }
      const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
      Rng rng(derive_seed(seed, index));
      for (auto& v : tensor.values()) v = T(rng.uniform(-limit, limit));
    }
    ++index;
  }
}

template <class T>
Tensor<T> from_f32(const Tensor<float>& x);

template <>
Tensor<float> from_f32<float>(const Tensor<float>& x) {
  return x;
}

template <>
Tensor<double> from_f32<double>(const Tensor<float>& x) {
  std::vector<double> v(x.values().begin(), x.values().end());
  return Tensor<double>::from_values(x.dims(), std::move(v));
}

}  // namespace

template <class T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& h,
                                          const Tensor<T>& c, const LstmParams<T>& p) {
  const int hidden = c.dim(0);
  Tensor<T> z = add(tape, fully_connected(tape, x, p.w_x, p.b_x),
                    fully_connected(tape, h, p.w_h, p.b_h));
  Tensor<T> gi = sigmoid(tape, slice(tape, z, 0, hidden));
  Tensor<T> gf = sigmoid(tape, slice(tape, z, hidden, hidden));
  Tensor<T> gg = tanh_op(tape, slice(tape, z, 2 * hidden, hidden));
  Tensor<T> go = sigmoid(tape, slice(tape, z, 3 * hidden, hidden));
  Tensor<T> c_next = add(tape, mul(tape, gf, c), mul(tape, gi, gg));
  Tensor<T> h_next = mul(tape, go, tanh_op(tape, c_next));
  return {h_next, c_next};
}

template <class T>
Model<T>::Model(ModelConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.pool_rounding.empty() && cfg_.encoder == EncoderKind::q3dcnn) {
    cfg_.pool_rounding.assign(cfg_.channel_widths.size() - 1, PoolRounding{});
  }

  switch (cfg_.encoder) {
    case EncoderKind::q3dcnn: {
      const auto trace = q3dcnn_shape_trace(cfg_);
      const size_t stages = cfg_.channel_widths.size();
      int cin = 1;
      Shape in_dims = trace[0].dims;  // dims entering the next conv
      for (size_t i = 0; i < stages; ++i) {
        const int cout = cfg_.channel_widths[i];
        const std::string base = "enc.conv" + std::to_string(i + 1);
        const bool last = i + 1 == stages;
        if (last) {
          // collapse whatever block remains
          params_.add(base + ".kernel", {cout, cin, in_dims[1], in_dims[2], in_dims[3]});
        } else {
          params_.add(base + ".kernel", {cout, cin, 3, 3, 3});
        }
        params_.add(base + ".bias", {cout});
        cin = cout;
        if (!last) in_dims = trace[2 * (i + 1)].dims;  // pool output
      }
      params_.add("enc.fc.weight", {cfg_.feature_dim, cfg_.channel_widths.back()});
      params_.add("enc.fc.bias", {cfg_.feature_dim});
      break;
    }
    case EncoderKind::bilstm: {
      const FrameChain chain = frame_chain(cfg_);
      params_.add("enc.frame1.kernel", {cfg_.frame_channels[0], 1, 3, 3});
      params_.add("enc.frame1.bias", {cfg_.frame_channels[0]});
      params_.add("enc.frame2.kernel", {cfg_.frame_channels[1], cfg_.frame_channels[0], 3, 3});
      params_.add("enc.frame2.bias", {cfg_.frame_channels[1]});
      params_.add("enc.frame_fc.weight", {cfg_.frame_embed_dim, chain.flat});
      params_.add("enc.frame_fc.bias", {cfg_.frame_embed_dim});
      for (const char* dir : {"fwd", "bwd"}) {
        const std::string base = std::string("enc.lstm_") + dir;
        params_.add(base + ".w_x", {4 * cfg_.rnn_hidden, cfg_.frame_embed_dim});
        params_.add(base + ".w_h", {4 * cfg_.rnn_hidden, cfg_.rnn_hidden});
        params_.add(base + ".b_x", {4 * cfg_.rnn_hidden});
        params_.add(base + ".b_h", {4 * cfg_.rnn_hidden});
      }
      params_.add("enc.out.weight", {cfg_.feature_dim, 2 * cfg_.rnn_hidden});
      params_.add("enc.out.bias", {cfg_.feature_dim});
      break;
    }
    case EncoderKind::nonlocal: {
      const FrameChain chain = frame_chain(cfg_);
      params_.add("enc.frame1.kernel", {cfg_.frame_channels[0], 1, 3, 3});
      params_.add("enc.frame1.bias", {cfg_.frame_channels[0]});
      params_.add("enc.frame2.kernel", {cfg_.frame_channels[1], cfg_.frame_channels[0], 3, 3});
      params_.add("enc.frame2.bias", {cfg_.frame_channels[1]});
      params_.add("enc.frame_fc.weight", {cfg_.frame_embed_dim, chain.flat});
      params_.add("enc.frame_fc.bias", {cfg_.frame_embed_dim});
      const int att = std::max(1, cfg_.frame_embed_dim / 2);
      params_.add("enc.attn.theta", {att, cfg_.frame_embed_dim});
      params_.add("enc.attn.phi", {att, cfg_.frame_embed_dim});
      params_.add("enc.attn.g", {att, cfg_.frame_embed_dim});
      params_.add("enc.attn.out", {cfg_.frame_embed_dim, att});
      params_.add("enc.out.weight", {cfg_.feature_dim, cfg_.frame_embed_dim});
      params_.add("enc.out.bias", {cfg_.feature_dim});
      break;
    }
    case EncoderKind::none:
      break;
  }

  int in_dim = cfg_.fusion_input_dim();
  for (size_t i = 0; i < cfg_.fusion_hidden.size(); ++i) {
    const std::string base = "fusion.fc" + std::to_string(i + 1);
    params_.add(base + ".weight", {cfg_.fusion_hidden[i], in_dim});
    params_.add(base + ".bias", {cfg_.fusion_hidden[i]});
    in_dim = cfg_.fusion_hidden[i];
  }
  params_.add("fusion.out.weight", {1, in_dim});
  params_.add("fusion.out.bias", {1});

  init_params(params_, init_seed);
}

template <class T>
std::vector<TraceRow> Model<T>::shape_trace() const {
  if (cfg_.encoder != EncoderKind::q3dcnn) {
    throw ConfigError("shape_trace is defined for the q3dcnn encoder");
  }
  return q3dcnn_shape_trace(cfg_);
}

template <class T>
Tensor<T> Model<T>::encode_q3dcnn(Tape<T>* tape, const Tensor<T>& clip,
                                  std::vector<Shape>* actual) const {
  auto note = [&](const Tensor<T>& t) {
    if (actual) actual->push_back(t.dims());
  };
  Tensor<T> x = reshape(tape, clip, {1, clip.dim(0), clip.dim(1), clip.dim(2)});
  note(x);
  const size_t stages = cfg_.channel_widths.size();
  for (size_t i = 0; i < stages; ++i) {
    const std::string base = "enc.conv" + std::to_string(i + 1);
    const bool last = i + 1 == stages;
    x = relu(tape, conv3d(tape, x, params_.at(base + ".kernel"), params_.at(base + ".bias"),
                          last ? 0 : 1));
    note(x);
    if (!last) {
      x = maxpool3d(tape, x, cfg_.pool_rounding[i]);
      note(x);
    }
  }
  x = reshape(tape, x, {cfg_.channel_widths.back()});
  note(x);
  Tensor<T> out = fully_connected(tape, x, params_.at("enc.fc.weight"), params_.at("enc.fc.bias"));
  note(out);
  return out;
}

template <class T>
Tensor<T> Model<T>::frame_embedding(Tape<T>* tape, const Tensor<T>& clip, int t) const {
  Tensor<T> f = select_frame(tape, clip, t);
  f = relu(tape, conv2d(tape, f, params_.at("enc.frame1.kernel"), params_.at("enc.frame1.bias"), 2));
  f = relu(tape, conv2d(tape, f, params_.at("enc.frame2.kernel"), params_.at("enc.frame2.bias"), 2));
  f = reshape(tape, f, {int(f.size())});
  return fully_connected(tape, f, params_.at("enc.frame_fc.weight"), params_.at("enc.frame_fc.bias"));
}

template <class T>
std::vector<Tensor<T>> Model<T>::frame_embeddings(Tape<T>* tape, const Tensor<T>& clip) const {
  std::vector<Tensor<T>> e;
  e.reserve(size_t(clip.dim(0)));
  for (int t = 0; t < clip.dim(0); ++t) e.push_back(frame_embedding(tape, clip, t));
  return e;
}

template <class T>
Tensor<T> Model<T>::encode_bilstm(Tape<T>* tape, const Tensor<T>& clip) const {
  const auto embeds = frame_embeddings(tape, clip);
  const int n = int(embeds.size());
  auto run = [&](const char* dir, bool reverse) {
    LstmParams<T> p{params_.at(std::string("enc.lstm_") + dir + ".w_x"),
                    params_.at(std::string("enc.lstm_") + dir + ".w_h"),
                    params_.at(std::string("enc.lstm_") + dir + ".b_x"),
                    params_.at(std::string("enc.lstm_") + dir + ".b_h")};
    Tensor<T> h = Tensor<T>::zeros({cfg_.rnn_hidden});
    Tensor<T> c = Tensor<T>::zeros({cfg_.rnn_hidden});
    for (int i = 0; i < n; ++i) {
      const int t = reverse ? n - 1 - i : i;
      std::tie(h, c) = lstm_cell(tape, embeds[size_t(t)], h, c, p);
    }
    return h;
  };
  Tensor<T> joint = concat(tape, {run("fwd", false), run("bwd", true)});
  return fully_connected(tape, joint, params_.at("enc.out.weight"), params_.at("enc.out.bias"));
}

template <class T>
Tensor<T> Model<T>::encode_nonlocal(Tape<T>* tape, const Tensor<T>& clip) const {
  Tensor<T> x = stack_rows(tape, frame_embeddings(tape, clip));
  const int att = params_.at("enc.attn.theta").dim(0);
  Tensor<T> q = matmul(tape, x, params_.at("enc.attn.theta"), true);
  Tensor<T> k = matmul(tape, x, params_.at("enc.attn.phi"), true);
  Tensor<T> g = matmul(tape, x, params_.at("enc.attn.g"), true);
  Tensor<T> scores = scale(tape, matmul(tape, q, k, true), T(1.0 / std::sqrt(double(att))));
  Tensor<T> attn = softmax_rows(tape, scores);
  Tensor<T> y = matmul(tape, attn, g);
  Tensor<T> z = add(tape, x, matmul(tape, y, params_.at("enc.attn.out"), true));
  Tensor<T> pooled = mean_rows(tape, z);
  return fully_connected(tape, pooled, params_.at("enc.out.weight"), params_.at("enc.out.bias"));
}

template <class T>
Tensor<T> Model<T>::attention_matrix(const Tensor<T>& clip) const {
  if (cfg_.encoder != EncoderKind::nonlocal) {
    throw ConfigError("attention_matrix is defined for the nonlocal encoder");
  }
  Tensor<T> x = stack_rows<T>(nullptr, frame_embeddings(nullptr, clip));
  const int att = params_.at("enc.attn.theta").dim(0);
  Tensor<T> q = matmul<T>(nullptr, x, params_.at("enc.attn.theta"), true);
  Tensor<T> k = matmul<T>(nullptr, x, params_.at("enc.attn.phi"), true);
  Tensor<T> scores = scale<T>(nullptr, matmul<T>(nullptr, q, k, true), T(1.0 / std::sqrt(double(att))));
  return softmax_rows<T>(nullptr, scores);
}

template <class T>
Tensor<T> Model<T>::encode_clip(Tape<T>* tape, const Tensor<T>& clip) const {
  if (clip.rank() != 3 || clip.dim(0) != cfg_.frames || clip.dim(1) != cfg_.height ||
      clip.dim(2) != cfg_.width) {
    throw ShapeError("clip " + shape_str(clip.dims()) + " does not match model input [" +
                     std::to_string(cfg_.frames) + "," + std::to_string(cfg_.height) + "," +
                     std::to_string(cfg_.width) + "]");
  }
  switch (cfg_.encoder) {
    case EncoderKind::q3dcnn: return encode_q3dcnn(tape, clip, nullptr);
    case EncoderKind::bilstm: return encode_bilstm(tape, clip);
    case EncoderKind::nonlocal: return encode_nonlocal(tape, clip);
    case EncoderKind::none: break;
  }
  throw ConfigError("encode_clip called with encoder \"none\"");
}

template <class T>
Tensor<T> Model<T>::encode_clip_traced(const Tensor<T>& clip, std::vector<Shape>* actual) const {
  if (cfg_.encoder != EncoderKind::q3dcnn) {
    throw ConfigError("encode_clip_traced is defined for the q3dcnn encoder");
  }
  return encode_q3dcnn(nullptr, clip, actual);
}

template <class T>
Tensor<float> Model<T>::standardized_clip(const QuestionRecord& q) const {
  const bool match = q.clip.rank() == 3 && q.clip.dim(0) == cfg_.frames &&
                     q.clip.dim(1) == cfg_.height && q.clip.dim(2) == cfg_.width;
  if (match && !q.crop_box) return q.clip;
  return prepare_clip(q.clip, q.crop_box, kCropExpandFactor, cfg_.frames, cfg_.height, cfg_.width);
}

template <class T>
Tensor<T> Model<T>::predict(Tape<T>* tape, const Session& session) const {
  std::vector<int> order(kQuestionsPerSession);
  for (int i = 0; i < kQuestionsPerSession; ++i) order[size_t(i)] = i;
  return predict_ordered(tape, session, order);
}

template <class T>
Tensor<T> Model<T>::predict_ordered(Tape<T>* tape, const Session& session,
                                    const std::vector<int>& order) const {
  if (session.questions.size() != kQuestionsPerSession) {
    throw ShapeError("session " + session.subject_id + " has " +
                     std::to_string(session.questions.size()) + " questions, expected 20");
  }
  if (order.size() != kQuestionsPerSession) {
    throw ShapeError("question order must list all 20 questions");
  }

  std::vector<Tensor<T>> feats(kQuestionsPerSession);
  for (int qi : order) {
    if (qi < 0 || qi >= kQuestionsPerSession || feats[size_t(qi)].defined()) {
      throw ShapeError("question order must be a permutation of 0..19");
    }
    const QuestionRecord& q = session.questions[size_t(qi)];
    Tensor<T> a;
    if (cfg_.encoder == EncoderKind::none) {
      a = Tensor<T>::zeros({cfg_.feature_dim});
    } else {
      a = encode_clip(tape, from_f32<T>(standardized_clip(q)));
    }
    Tensor<T> s = cfg_.use_sds ? from_f32<T>(encode_answer(q.answer)) : Tensor<T>::zeros({4});
    Tensor<T> t =
        cfg_.use_time ? from_f32<T>(encode_time(q.response_time_sec)) : Tensor<T>::zeros({1});
    feats[size_t(qi)] = concat(tape, {a, s, t});
  }

  Tensor<T> x = concat(tape, feats);
  for (size_t i = 0; i < cfg_.fusion_hidden.size(); ++i) {
    const std::string base = "fusion.fc" + std::to_string(i + 1);
    x = relu(tape, fully_connected(tape, x, params_.at(base + ".weight"), params_.at(base + ".bias")));
  }
  Tensor<T> out =
      fully_connected(tape, x, params_.at("fusion.out.weight"), params_.at("fusion.out.bias"));
  return sigmoid(tape, out);
}

template <class T>
void Model<T>::save(const std::filesystem::path& path) const {
  write_weights(path, params_.items());
}

template <class T>
void Model<T>::load(const std::filesystem::path& path) {
  auto records = read_weights<T>(path);
  std::map<std::string, Tensor<T>> by_name;
  for (auto& [name, tensor] : records) {
    if (!by_name.emplace(name, tensor).second) {
      throw FormatError(path.string() + ": duplicate parameter " + name);
    }
  }
  for (auto& [name, tensor] : params_.items()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError(path.string() + ": missing parameter " + name);
    if (it->second.dims() != tensor.dims()) {
      throw FormatError(path.string() + ": parameter " + name + " has shape " +
                        shape_str(it->second.dims()) + ", model expects " + shape_str(tensor.dims()));
    }
    std::copy(it->second.values().begin(), it->second.values().end(), tensor.values().begin());
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    throw FormatError(path.string() + ": unexpected parameter " + by_name.begin()->first);
  }
}

int decide(double p) { return p > 0.5 ? 1 : 0; }

int sds_sum_baseline(const std::vector<int>& answers) {
  if (answers.size() != kQuestionsPerSession) {
    throw ShapeError("sds_sum_baseline expects 20 answers, got " + std::to_string(answers.size()));
  }
  int sum = 0;
  for (int a : answers) {
    if (a < 1 || a > 4) throw NumericError("answer must be in 1..4, got " + std::to_string(a));
    sum += a;
  }
  return sum >= kSdsThreshold ? 1 : 0;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Model<float>;
template class Model<double>;
template std::pair<Tensor<float>, Tensor<float>> lstm_cell<float>(Tape<float>*, const Tensor<float>&,
                                                                  const Tensor<float>&,
                                                                  const Tensor<float>&,
                                                                  const LstmParams<float>&);
template std::pair<Tensor<double>, Tensor<double>> lstm_cell<double>(
    Tape<double>*, const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
    const LstmParams<double>&);

}  // namespace qscreen
