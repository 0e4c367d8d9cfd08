#include "qscreen/gradsuite.hpp"

#include <cmath>

#include "qscreen/model.hpp"
#include "qscreen/ops.hpp"
#include "qscreen/rng.hpp"

namespace qscreen {

namespace {

using D = double;
using TensorD = Tensor<double>;
using Leaves = std::vector<std::pair<std::string, TensorD>>;

TensorD random_tensor(Rng& rng, Shape dims, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(dims));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Probe-weighted sum keeps the loss sensitive to every output coordinate.
TensorD probe_loss(Tape<D>& tape, const TensorD& out, const TensorD& probe) {
  TensorD flat = reshape(&tape, out, {int(out.size())});
  return sum_all(&tape, mul(&tape, flat, probe));
}

}  // namespace

Session synthetic_session(uint64_t seed, int frames, int height, int width) {
  Rng rng(seed);
  Session s;
  s.subject_id = "synthetic";
  s.label = 1;
  s.questions.resize(kQuestionsPerSession);
  for (auto& q : s.questions) {
    q.answer = rng.uniform_int(1, 4);
    q.response_time_sec = rng.uniform(2.0, 8.0);
    Tensor<float> clip(Shape{frames, height, width});
    for (auto& v : clip.values()) v = float(rng.uniform());
    q.clip = std::move(clip);
  }
  return s;
}

std::vector<GradCheckReport> run_gradient_suite(const GradSuiteOptions& opts) {
  std::vector<GradCheckReport> reports;
  Rng rng(opts.seed);
  const double tol = opts.tolerance;

  auto run = [&](const std::string& name,
                 const std::function<TensorD(Tape<D>&)>& build, const Leaves& leaves,
                 int coords = 0) {
    reports.push_back(check_gradients(name, build, leaves, tol, coords, opts.seed));
  };

  {  // conv3d, temporal pad 0 and 1
    TensorD in = random_tensor(rng, {2, 4, 5, 5});
    TensorD k = random_tensor(rng, {3, 2, 3, 3, 3});
    TensorD b = random_tensor(rng, {3});
    TensorD probe0 = random_tensor(rng, {3 * 2 * 3 * 3});
    TensorD probe1 = random_tensor(rng, {3 * 4 * 3 * 3});
    run("conv3d pad0",
        [=](Tape<D>& t) { return probe_loss(t, conv3d(&t, in, k, b, 0), probe0); },
        {{"input", in}, {"kernels", k}, {"bias", b}});
    run("conv3d pad1",
        [=](Tape<D>& t) { return probe_loss(t, conv3d(&t, in, k, b, 1), probe1); },
        {{"input", in}, {"kernels", k}, {"bias", b}});
  }
  {  // conv2d, stride 1 and 2
    TensorD in = random_tensor(rng, {2, 7, 7});
    TensorD k = random_tensor(rng, {3, 2, 3, 3});
    TensorD b = random_tensor(rng, {3});
    TensorD probe1 = random_tensor(rng, {3 * 5 * 5});
    TensorD probe2 = random_tensor(rng, {3 * 3 * 3});
    run("conv2d stride1",
        [=](Tape<D>& t) { return probe_loss(t, conv2d(&t, in, k, b, 1), probe1); },
        {{"input", in}, {"kernels", k}, {"bias", b}});
    run("conv2d stride2",
        [=](Tape<D>& t) { return probe_loss(t, conv2d(&t, in, k, b, 2), probe2); },
        {{"input", in}, {"kernels", k}, {"bias", b}});
  }
  {  // maxpool3d with mixed rounding over odd axes
    TensorD in = random_tensor(rng, {2, 5, 5, 7});
    const PoolRounding pr{Rounding::ceil, Rounding::floor, Rounding::ceil};
    TensorD probe = random_tensor(rng, {2 * 3 * 2 * 4});
    run("maxpool3d ceil/floor",
        [=](Tape<D>& t) { return probe_loss(t, maxpool3d(&t, in, pr), probe); },
        {{"input", in}});
  }
  {
    TensorD x = random_tensor(rng, {6});
    TensorD w = random_tensor(rng, {4, 6});
    TensorD b = random_tensor(rng, {4});
    TensorD probe = random_tensor(rng, {4});
    run("fully_connected",
        [=](Tape<D>& t) { return probe_loss(t, fully_connected(&t, x, w, b), probe); },
        {{"input", x}, {"weight", w}, {"bias", b}});
  }
  {
    TensorD a = random_tensor(rng, {3, 4});
    TensorD b = random_tensor(rng, {4, 5});
    TensorD bt = random_tensor(rng, {5, 4});
    TensorD probe = random_tensor(rng, {15});
    run("matmul nn",
        [=](Tape<D>& t) { return probe_loss(t, matmul(&t, a, b, false), probe); },
        {{"a", a}, {"b", b}});
    run("matmul nt",
        [=](Tape<D>& t) { return probe_loss(t, matmul(&t, a, bt, true), probe); },
        {{"a", a}, {"b", bt}});
  }
  {
    TensorD x = random_tensor(rng, {11});
    TensorD probe = random_tensor(rng, {11});
    run("relu", [=](Tape<D>& t) { return probe_loss(t, relu(&t, x), probe); }, {{"x", x}});
    run("sigmoid", [=](Tape<D>& t) { return probe_loss(t, sigmoid(&t, x), probe); }, {{"x", x}});
    run("tanh", [=](Tape<D>& t) { return probe_loss(t, tanh_op(&t, x), probe); }, {{"x", x}});
    run("softmax", [=](Tape<D>& t) { return probe_loss(t, softmax(&t, x), probe); }, {{"x", x}});
    run("scale", [=](Tape<D>& t) { return probe_loss(t, scale(&t, x, 0.7), probe); }, {{"x", x}});
    run("sum_all", [=](Tape<D>& t) { return sum_all(&t, x); }, {{"x", x}});
  }
  {
    TensorD x = random_tensor(rng, {4, 6});
    TensorD probe = random_tensor(rng, {24});
    TensorD probe_mean = random_tensor(rng, {6});
    run("softmax_rows",
        [=](Tape<D>& t) { return probe_loss(t, softmax_rows(&t, x), probe); }, {{"x", x}});
    run("mean_rows",
        [=](Tape<D>& t) { return probe_loss(t, mean_rows(&t, x), probe_mean); }, {{"x", x}});
    run("reshape",
        [=](Tape<D>& t) { return probe_loss(t, reshape(&t, x, {2, 12}), probe); }, {{"x", x}});
  }
  {
    TensorD a = random_tensor(rng, {5});
    TensorD b = random_tensor(rng, {5});
    TensorD probe = random_tensor(rng, {5});
    run("add", [=](Tape<D>& t) { return probe_loss(t, add(&t, a, b), probe); },
        {{"a", a}, {"b", b}});
    run("mul", [=](Tape<D>& t) { return probe_loss(t, mul(&t, a, b), probe); },
        {{"a", a}, {"b", b}});
  }
  {
    TensorD a = random_tensor(rng, {3});
    TensorD b = random_tensor(rng, {2});
    TensorD c = random_tensor(rng, {4});
    TensorD probe = random_tensor(rng, {9});
    TensorD probe_s = random_tensor(rng, {3});
    run("concat",
        [=](Tape<D>& t) {
          return probe_loss(t, concat(&t, std::vector<TensorD>{a, b, c}), probe);
        },
        {{"a", a}, {"b", b}, {"c", c}});
    run("slice",
        [=](Tape<D>& t) { return probe_loss(t, slice(&t, c, 1, 3), probe_s); }, {{"c", c}});
  }
  {
    TensorD r0 = random_tensor(rng, {4});
    TensorD r1 = random_tensor(rng, {4});
    TensorD r2 = random_tensor(rng, {4});
    TensorD probe = random_tensor(rng, {12});
    run("stack_rows",
        [=](Tape<D>& t) {
          return probe_loss(t, stack_rows(&t, std::vector<TensorD>{r0, r1, r2}), probe);
        },
        {{"r0", r0}, {"r1", r1}, {"r2", r2}});
  }
  {
    TensorD clip = random_tensor(rng, {3, 4, 4});
    TensorD probe = random_tensor(rng, {16});
    run("select_frame",
        [=](Tape<D>& t) { return probe_loss(t, select_frame(&t, clip, 1), probe); },
        {{"clip", clip}});
  }
  {  // bce through a sigmoid head, both labels
    TensorD x = random_tensor(rng, {1});
    run("bce_loss y=1",
        [=](Tape<D>& t) { return bce_loss(&t, sigmoid(&t, x), 1); }, {{"x", x}});
    run("bce_loss y=0",
        [=](Tape<D>& t) { return bce_loss(&t, sigmoid(&t, x), 0); }, {{"x", x}});
  }
  {  // composite chain
    TensorD in = random_tensor(rng, {1, 4, 6, 6}, 0.0, 1.0);
    TensorD k = random_tensor(rng, {2, 1, 3, 3, 3});
    TensorD kb = random_tensor(rng, {2});
    TensorD w = random_tensor(rng, {3, 2 * 4 * 4 * 4});
    TensorD b = random_tensor(rng, {3});
    TensorD probe = random_tensor(rng, {3});
    run("conv3d+relu+fc",
        [=](Tape<D>& t) {
          TensorD h = relu(&t, conv3d(&t, in, k, kb, 1));
          TensorD flat = reshape(&t, h, {int(h.size())});
          return probe_loss(t, fully_connected(&t, flat, w, b), probe);
        },
        {{"input", in}, {"kernels", k}, {"kbias", kb}, {"weight", w}, {"bias", b}});
  }
  {  // lstm cell
    TensorD x = random_tensor(rng, {3});
    TensorD h = random_tensor(rng, {2});
    TensorD c = random_tensor(rng, {2});
    LstmParams<D> p{random_tensor(rng, {8, 3}), random_tensor(rng, {8, 2}),
                    random_tensor(rng, {8}), random_tensor(rng, {8})};
    TensorD probe = random_tensor(rng, {4});
    run("lstm_cell",
        [=](Tape<D>& t) {
          auto [hn, cn] = lstm_cell(&t, x, h, c, p);
          return probe_loss(t, concat(&t, std::vector<TensorD>{hn, cn}), probe);
        },
        {{"x", x},
         {"h", h},
         {"c", c},
         {"w_x", p.w_x},
         {"w_h", p.w_h},
         {"b_x", p.b_x},
         {"b_h", p.b_h}});
  }

  if (opts.include_pipelines) {
    const Session session = synthetic_session(derive_seed(opts.seed, 99), 16, 32, 32);
    for (EncoderKind enc : {EncoderKind::q3dcnn, EncoderKind::bilstm, EncoderKind::nonlocal}) {
      ModelConfig cfg = ModelConfig::tiny();
      cfg.encoder = enc;
      cfg.dtype = Dtype::f64;
      auto model = std::make_shared<Model<double>>(cfg, derive_seed(opts.seed, 7));
      Leaves leaves;
      for (auto& [name, tensor] : model->params().items()) leaves.emplace_back(name, tensor);
      run("pipeline " + to_string(enc),
          [model, session](Tape<D>& t) {
            return bce_loss(&t, model->predict(&t, session), session.label);
          },
          leaves, opts.pipeline_coords_per_tensor);
    }
  }
  return reports;
}

}  // namespace qscreen
