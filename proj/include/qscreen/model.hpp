#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "qscreen/ops.hpp"
#include "qscreen/session.hpp"
#include "qscreen/tensor.hpp"

namespace qscreen {

enum class EncoderKind { q3dcnn, bilstm, nonlocal, none };
enum class Dtype { f32, f64 };

std::string to_string(EncoderKind k);
std::string to_string(Dtype d);
EncoderKind encoder_from_string(const std::string& s);
Dtype dtype_from_string(const std::string& s);

// Scale-parameterized architecture description. Layer shapes are derived and
// checked at construction; a config that cannot produce positive dims at
// every stage is rejected before any parameter is allocated.
struct ModelConfig {
  EncoderKind encoder = EncoderKind::q3dcnn;
  int height = 110;
  int width = 110;
  int frames = 100;

  // q3dcnn: widths[0..n-2] are 3x3x3 conv+pool stages, widths[n-1] is the
  // final conv whose kernel spans whatever block remains, collapsing it to
  // [C,1,1,1]. pool_rounding has one entry per pool stage.
  std::vector<int> channel_widths = {16, 32, 64, 128, 256};
  std::vector<PoolRounding> pool_rounding;  // empty = floor everywhere

  int feature_dim = 128;
  std::vector<int> fusion_hidden = {1024, 256};
  bool use_sds = true;
  bool use_time = true;
  Dtype dtype = Dtype::f32;

  // frame encoder for bilstm / nonlocal: two strided 3x3 convs + FC
  std::vector<int> frame_channels = {8, 16};
  int frame_embed_dim = 32;
  int rnn_hidden = 32;

  static ModelConfig full_scale();
  static ModelConfig tiny();

  void validate() const;
  std::string method_label() const;
  int question_feature_dim() const { return feature_dim + 5; }
  int fusion_input_dim() const { return kQuestionsPerSession * question_feature_dim(); }
};

struct TraceRow {
  std::string stage;
  Shape dims;  // [C,T,H,W] for conv stages, [n] for flatten/fc
};

// Closed-form stage-by-stage shape chain for the q3dcnn encoder.
std::vector<TraceRow> q3dcnn_shape_trace(const ModelConfig& cfg);

template <class T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Shape dims);
  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
  std::vector<std::pair<std::string, Tensor<T>>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }
  int64_t total_size() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
};

template <class T>
struct LstmParams {
  Tensor<T> w_x;  // [4H, E], gate order i,f,g,o
  Tensor<T> w_h;  // [4H, H]
  Tensor<T> b_x;  // [4H]
  Tensor<T> b_h;  // [4H]
};

// One step: i,f,o = sigmoid, g = tanh; c' = f*c + i*g; h' = o*tanh(c').
template <class T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& h,
                                          const Tensor<T>& c, const LstmParams<T>& p);

template <class T>
class Model {
 public:
  Model(ModelConfig cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // Question-wise video feature [feature_dim]. All 20 questions share these
  // parameters.
  Tensor<T> encode_clip(Tape<T>* tape, const Tensor<T>& clip) const;

  // q3dcnn only: forward pass that also reports the dims seen at every stage.
  Tensor<T> encode_clip_traced(const Tensor<T>& clip, std::vector<Shape>* actual) const;

  // Probability that the subject screens positive, in (0,1).
  Tensor<T> predict(Tape<T>* tape, const Session& session) const;

  // Same result with question features computed in a caller-chosen order;
  // each feature lands in its question's fusion slot regardless.
  Tensor<T> predict_ordered(Tape<T>* tape, const Session& session,
                            const std::vector<int>& order) const;

  // nonlocal only: row-stochastic [T,T] attention for a clip, forward-only.
  Tensor<T> attention_matrix(const Tensor<T>& clip) const;

  std::vector<TraceRow> shape_trace() const;

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  Tensor<T> frame_embedding(Tape<T>* tape, const Tensor<T>& clip, int t) const;
  std::vector<Tensor<T>> frame_embeddings(Tape<T>* tape, const Tensor<T>& clip) const;
  Tensor<T> encode_q3dcnn(Tape<T>* tape, const Tensor<T>& clip, std::vector<Shape>* actual) const;
  Tensor<T> encode_bilstm(Tape<T>* tape, const Tensor<T>& clip) const;
  Tensor<T> encode_nonlocal(Tape<T>* tape, const Tensor<T>& clip) const;
  Tensor<float> standardized_clip(const QuestionRecord& q) const;

  ModelConfig cfg_;
  ParamStore<T> params_;
};

// 1 iff p > 0.5; the tie maps to healthy.
int decide(double p);

// 1 iff the 20 answers sum to >= 50. Throws on out-of-range answers.
int sds_sum_baseline(const std::vector<int>& answers);

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Model<float>;
extern template class Model<double>;
extern template std::pair<Tensor<float>, Tensor<float>> lstm_cell<float>(
    Tape<float>*, const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
    const LstmParams<float>&);
extern template std::pair<Tensor<double>, Tensor<double>> lstm_cell<double>(
    Tape<double>*, const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
    const LstmParams<double>&);

}  // namespace qscreen
