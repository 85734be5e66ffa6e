#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "imvalign/gradcheck.hpp"
#include "imvalign/predictor.hpp"

using namespace imvalign;
using testutil::random_tensor;
using testutil::vec_tensor;

namespace {

AlignmentPredictor<double> make_predictor(std::uint64_t seed, int d,
                                          PredictorConfig cfg = {}) {
  std::mt19937_64 rng(seed);
  AlignmentPredictor<double> p;
  p.init(rng, d, cfg, "pred");
  return p;
}

void zero_tensor(Tensor<double>& t) {
  std::fill(t.data->begin(), t.data->end(), 0.0);
}

// Plain-loop re-implementation of the predictor stack for the same parameters.
oracle::Mat predictor_reference(const AlignmentPredictor<double>& p,
                                const oracle::Mat& e_s) {
  const int hidden = p.conv1_b.tensor.dim(0);
  const int k = p.cfg.kernel_size;
  oracle::Mat h = oracle::conv1d_same(e_s, *p.conv1_w.tensor.data, k, e_s.cols,
                                      hidden, *p.conv1_b.tensor.data);
  h = oracle::relu(oracle::layer_norm(h, *p.ln1.gain.tensor.data,
                                      *p.ln1.bias.tensor.data));
  h = oracle::conv1d_same(h, *p.conv2_w.tensor.data, k, hidden, hidden,
                          *p.conv2_b.tensor.data);
  h = oracle::relu(oracle::layer_norm(h, *p.ln2.gain.tensor.data,
                                      *p.ln2.bias.tensor.data));
  oracle::Mat w(hidden, 1);
  w.v = *p.proj_w.tensor.data;
  return oracle::relu(oracle::linear(h, w, *p.proj_b.tensor.data));
}

}  // namespace

TEST_SUITE("predictor") {

TEST_CASE("config validation") {
  PredictorConfig even{4, 0, 2};
  CHECK_THROWS_AS(even.validate(), ConfigError);
  PredictorConfig layers{3, 0, 3};
  CHECK_THROWS_AS(layers.validate(), ConfigError);
  PredictorConfig ok{3, 8, 2};
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("zero weights reduce to a relu'd bias per frame") {
  auto p = make_predictor(1, 4);
  zero_tensor(p.conv1_w.tensor);
  zero_tensor(p.conv2_w.tensor);
  zero_tensor(p.proj_w.tensor);
  std::mt19937_64 rng(2);
  auto e_s = random_tensor(rng, {5, 4});

  (*p.proj_b.tensor.data)[0] = 0.7;
  auto up = p.forward(nullptr, e_s);
  CHECK(testutil::max_abs_diff(up, {0.7, 0.7, 0.7, 0.7, 0.7}) < 1e-12);

  (*p.proj_b.tensor.data)[0] = -0.5;
  auto down = p.forward(nullptr, e_s);
  CHECK(testutil::max_abs_diff(down, {0, 0, 0, 0, 0}) == 0.0);
}

TEST_CASE("output is non-negative for any parameters and input") {
  std::mt19937_64 rng(3);
  for (int it = 0; it < 30; ++it) {
    auto p = make_predictor(rng(), 3 + static_cast<int>(rng() % 5));
    const int t = 1 + static_cast<int>(rng() % 12);
    auto e_s = random_tensor(rng, {t, p.conv1_w.tensor.dim(1)}, 2.0);
    auto d = p.forward(nullptr, e_s);
    CHECK(d.dim(0) == t);
    for (double v : *d.data) CHECK(v >= 0.0);
  }
}

TEST_CASE("matches the straight-line reference for fixed parameters") {
  std::mt19937_64 rng(5);
  for (int it = 0; it < 10; ++it) {
    auto p = make_predictor(rng(), 4, PredictorConfig{3, 6, 2});
    auto e_s = random_tensor(rng, {6, 4});
    auto got = p.forward(nullptr, e_s);
    auto want = predictor_reference(p, testutil::to_mat(e_s));
    CHECK(testutil::max_abs_diff(got, want.v) < 1e-12);
  }
}

TEST_CASE("predict_length follows round(sum)+1 with a floor of 1") {
  CHECK(predict_length(vec_tensor({0.5, 0.5})) == 2);
  CHECK(predict_length(vec_tensor({0, 0, 0})) == 1);
  CHECK(predict_length(vec_tensor({0, 1, 1})) == 3);
  CHECK(predict_length(vec_tensor({0.4})) == 1);
  CHECK(predict_length(vec_tensor({0.6})) == 2);

  // doubling the increments doubles the predicted span exactly
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int it = 0; it < 50; ++it) {
    const int t = 1 + static_cast<int>(rng() % 10);
    std::vector<double> v(static_cast<std::size_t>(t));
    double total = 0;
    for (auto& x : v) {
      x = u(rng);
      total += x;
    }
    auto base = vec_tensor(v);
    for (auto& x : v) x *= 2.0;
    auto doubled = vec_tensor(v);
    CHECK(predict_length(base) == static_cast<int>(std::llround(total)) + 1);
    CHECK(predict_length(doubled) == static_cast<int>(std::llround(2 * total)) + 1);
  }
}

TEST_CASE("alignment_loss values and stop-gradient contract") {
  auto a = vec_tensor({0, 0});
  auto b = vec_tensor({0, 2});
  CHECK((*alignment_loss<double>(nullptr, b, b).data)[0] == 0.0);
  CHECK((*alignment_loss<double>(nullptr, a, b).data)[0] ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(alignment_loss<double>(nullptr, a, vec_tensor({1, 2, 3})),
                  DimensionError);

  // gradient reaches the prediction side only
  Tape<double> tape;
  auto pred = vec_tensor({0.5, 1.5});
  auto target = vec_tensor({1.0, 1.0});
  pred.ensure_grad();
  target.ensure_grad();
  auto loss = alignment_loss(&tape, pred, target);
  tape.backward(loss);
  CHECK(std::abs((*pred.grad)[0]) > 0.0);
  CHECK((*target.grad)[0] == 0.0);
  CHECK((*target.grad)[1] == 0.0);
}

TEST_CASE("predictor gradients match finite differences") {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  int done = 0;
  while (done < 6) {
    auto p = make_predictor(rng(), 3, PredictorConfig{3, 4, 2});
    auto e_s = random_tensor(rng, {4, 3});
    auto w = random_tensor(rng, {4});
    std::vector<Tensor<double>*> inputs;
    std::vector<Parameter<double>*> params;
    p.collect(params);
    for (auto* prm : params) inputs.push_back(&prm->tensor);
    inputs.push_back(&e_s);
    e_s.ensure_grad();
    auto f = [&](Tape<double>* tape) {
      return testutil::project(tape, p.forward(tape, e_s), w);
    };
    auto res = finite_diff_check<double>(f, inputs, 1e-5);
    if (res.kink_margin < 1e-4) continue;
    worst = std::max(worst, res.max_rel_err);
    ++done;
  }
  CHECK(worst < 1e-4);
}

}  // TEST_SUITE
