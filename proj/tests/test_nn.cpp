#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "ptaloc/nn/fusers.hpp"

using namespace ptaloc;
using namespace ptaloc::nn;

namespace {

template <typename T>
Tensor<T> random_tensor(int b, int c, int l, std::uint64_t seed, double scale = 1.0) {
  Tensor<T> t(b, c, l);
  Rng rng(seed);
  std::normal_distribution<double> n01;
  for (auto& v : t.data) v = static_cast<T>(scale * n01(rng));
  return t;
}

CnnSpec tiny_cnn(int len) {
  CnnSpec s;
  s.input_length = len;
  s.conv = {ConvLayerSpec{3, 5, 2}, ConvLayerSpec{3, 3, 2}, ConvLayerSpec{4, 3, 1}, ConvLayerSpec{4, 3, 2},
            ConvLayerSpec{4, 3, 1}};
  s.pool_bins = 2;
  s.head = {6, 4, 2};
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("ptaloc_test_nn_" + name);
}

}  // namespace

TEST(Forward, ZeroWeightsGiveZeroOutput) {
  auto m = build_mlp<double>(MlpSpec{});
  m.load_state(std::vector<double>(m.state().size(), 0.0));
  const Tensor<double> y = m.forward(random_tensor<double>(5, 4, 1, 1));
  EXPECT_EQ(y.batch, 5);
  EXPECT_EQ(y.features(), 2);
  for (double v : y.data) EXPECT_EQ(v, 0.0);
}

TEST(Forward, DenseIsAffine) {
  Dense<double> d(2, 2);
  // weights column-major (out x in): [[2, 0], [1, 3]], bias (1, -1)
  d.params()[0]->value = {2, 1, 0, 3};
  d.params()[1]->value = {1, -1};
  Tensor<double> x(1, 2, 1);
  x.data = {4, 5};
  const Tensor<double> y = d.forward(x, false);
  EXPECT_DOUBLE_EQ(y.data[0], 2 * 4 + 0 * 5 + 1);
  EXPECT_DOUBLE_EQ(y.data[1], 1 * 4 + 3 * 5 - 1);
}

TEST(Forward, MlpParameterCount) {
  const MlpSpec s;
  auto m = build_mlp<double>(s);
  EXPECT_EQ(m.parameter_count(), s.parameter_count());
  EXPECT_EQ(s.parameter_count(), 5u * 64 + 65u * 128 + 129u * 2);
}

TEST(Forward, CnnShapesMatchSizeArithmetic) {
  const CnnSpec s;
  const auto lens = s.lengths();
  int len = s.input_length;
  for (int i = 0; i < 5; ++i) {
    len = (len + 2 * (s.conv[i].kernel / 2) - s.conv[i].kernel) / s.conv[i].stride + 1;
    EXPECT_EQ(lens[i], len);
  }
  EXPECT_EQ(lens[4], 103);
  CnnSpec small = tiny_cnn(64);
  auto m = build_cnn<double>(small);
  Tensor<double> h = random_tensor<double>(3, 4, 64, 2);
  const auto sl = small.lengths();
  int conv_seen = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    h = m.layer(i).forward(h, false);
    if (m.layer(i).name().rfind("Conv1D", 0) == 0) {
      EXPECT_EQ(h.length, sl[conv_seen]);
      EXPECT_EQ(h.channels, small.conv[conv_seen].channels);
      ++conv_seen;
    }
  }
  EXPECT_EQ(conv_seen, 5);
  EXPECT_EQ(h.batch, 3);
  EXPECT_EQ(h.features(), 2);
}

TEST(Forward, CnnRejectsShortInput) {
  CnnSpec s = tiny_cnn(8);
  s.pool_bins = 8;
  EXPECT_THROW(build_cnn<double>(s), Error);
}

TEST(Forward, BatchNormInferenceWithUnitStatsIsPassthrough) {
  BatchNorm1d<double> bn(3);
  const Tensor<double> x = random_tensor<double>(2, 3, 5, 3);
  const Tensor<double> y = bn.forward(x, false);
  for (std::size_t i = 0; i < x.data.size(); ++i) EXPECT_NEAR(y.data[i], x.data[i] / std::sqrt(1.0 + 1e-5), 1e-12);
}

TEST(Forward, TanhHeadStaysInsideLabelBox) {
  auto m = build_cnn<double>(tiny_cnn(64));
  Rng rng(4);
  m.init(rng);
  const Tensor<double> y = m.forward(random_tensor<double>(8, 4, 64, 5, 100.0));
  const ScenarioConfig cfg;
  const LabelBox box = LabelBox::from_roi(cfg.roi);
  const auto [lo, hi] = cfg.roi.bounding_box();
  for (int b = 0; b < 8; ++b) {
    const Position2D p = box.denormalize({y.data[2 * b], y.data[2 * b + 1]});
    EXPECT_GE(p.x, lo.x - 1e-9);
    EXPECT_LE(p.x, hi.x + 1e-9);
    EXPECT_GE(p.y, lo.y - 1e-9);
    EXPECT_LE(p.y, hi.y + 1e-9);
  }
}

TEST(Backprop, MlpMatchesFiniteDifferences) {
  const MlpSpec s{4, {6, 8}, 2};
  EXPECT_EQ(s.parameter_count(), 104u);
  auto m = build_mlp<double>(s);
  Rng rng(6);
  m.init(rng);
  for (Param<double>* p : m.params()) {
    for (auto& v : p->value) v += 0.1 * (uniform01(rng) - 0.5);  // nonzero biases
  }
  const auto rep = gradient_check(m, random_tensor<double>(16, 4, 1, 7), random_tensor<double>(16, 2, 1, 8));
  EXPECT_EQ(rep.checked, 104u);
  EXPECT_LT(rep.max_rel_error, 1e-4);
}

TEST(Backprop, CnnMatchesFiniteDifferences) {
  auto m = build_cnn<double>(tiny_cnn(48));
  Rng rng(9);
  m.init(rng);
  const auto rep = gradient_check(m, random_tensor<double>(4, 4, 48, 10), random_tensor<double>(4, 2, 1, 11, 0.5));
  EXPECT_EQ(rep.checked, m.parameter_count());
  EXPECT_LT(rep.max_rel_error, 1e-4);
}

TEST(Backprop, ZeroLossGivesZeroGradients) {
  auto m = build_mlp<double>(MlpSpec{4, {6, 8}, 2});
  Rng rng(12);
  m.init(rng);
  const Tensor<double> x = random_tensor<double>(8, 4, 1, 13);
  const Tensor<double> y = m.forward(x, true);
  m.zero_grad();
  Tensor<double> g;
  EXPECT_EQ(mse_loss(m.forward(x, true), y, &g), 0.0);
  m.backward(g);
  for (Param<double>* p : m.params()) {
    for (double v : p->grad) EXPECT_EQ(v, 0.0);
  }
}

TEST(Backprop, TanhGradientBounded) {
  Tanh<double> t;
  t.forward(random_tensor<double>(4, 2, 1, 14, 3.0), true);
  Tensor<double> ones(4, 2, 1);
  std::fill(ones.data.begin(), ones.data.end(), 1.0);
  for (double v : t.backward(ones).data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Training, ZeroLearningRateLeavesParameters) {
  auto m = build_mlp<double>(MlpSpec{4, {6, 8}, 2});
  Rng rng(15);
  m.init(rng);
  const auto before = m.state();
  const Tensor<double> x = random_tensor<double>(40, 4, 1, 16), y = random_tensor<double>(40, 2, 1, 17);
  std::vector<std::size_t> tr(32), va(8);
  std::iota(tr.begin(), tr.end(), 0);
  std::iota(va.begin(), va.end(), 32);
  TrainSettings s;
  s.adamw.lr = 0.0;
  s.batch_size = 8;
  s.max_epochs = 3;
  train(m, x, y, tr, va, s, 1);
  EXPECT_EQ(m.state(), before);
}

TEST(Training, DeterministicAndLearns) {
  const Tensor<double> x = random_tensor<double>(200, 4, 1, 18);
  Tensor<double> y(200, 2, 1);
  for (int b = 0; b < 200; ++b) {
    y.at(b, 0, 0) = 0.5 * x.at(b, 0, 0) - 0.2 * x.at(b, 1, 0);
    y.at(b, 1, 0) = 0.3 * x.at(b, 2, 0) * x.at(b, 3, 0);
  }
  const Split sp = split_811(200, 3);
  TrainSettings s;
  s.adamw.lr = 1e-2;
  s.batch_size = 32;
  s.max_epochs = 60;
  auto run = [&] {
    auto m = build_mlp<double>(MlpSpec{4, {16, 16}, 2});
    Rng rng(19);
    m.init(rng);
    const TrainResult r = train(m, x, y, sp.train, sp.val, s, 20);
    return std::pair{m.state(), r};
  };
  const auto [a, ra] = run();
  const auto [b, rb] = run();
  EXPECT_EQ(a, b);
  EXPECT_EQ(ra.val_loss, rb.val_loss);
  EXPECT_LT(ra.best_val_loss, 0.3 * ra.initial_loss);
}

TEST(Split, EightOneOne) {
  const Split s = split_811(1000, 4);
  EXPECT_EQ(s.train.size(), 800u);
  EXPECT_EQ(s.val.size(), 100u);
  EXPECT_EQ(s.test.size(), 100u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), 1000u);
  EXPECT_EQ(split_811(1000, 4).test, s.test);
}

TEST(Normalizer, ConstantFeatureRejected) {
  Tensor<double> x = random_tensor<double>(10, 3, 1, 21);
  for (int b = 0; b < 10; ++b) x.at(b, 1, 0) = 7.0;
  std::vector<std::size_t> rows(10);
  std::iota(rows.begin(), rows.end(), 0);
  EXPECT_THROW(Normalizer::fit(x, rows), Error);
}

TEST(Normalizer, RoundTripAndTrainMean) {
  Tensor<double> x = random_tensor<double>(100, 4, 1, 22, 30.0);
  for (auto& v : x.data) v += 500.0;
  const Split sp = split_811(100, 5);
  const Normalizer n = Normalizer::fit(x, sp.train);
  Tensor<double> z = x;
  n.apply(z);
  for (int c = 0; c < 4; ++c) {
    double mean = 0;
    for (std::size_t r : sp.train) mean += z.at(static_cast<int>(r), c, 0);
    EXPECT_NEAR(mean / sp.train.size(), 0.0, 1e-12);
  }
  n.invert(z);
  for (std::size_t i = 0; i < x.data.size(); ++i) EXPECT_NEAR(z.data[i], x.data[i], 1e-10);
}

TEST(Features, RelativeAnglesAndDistances) {
  const ScenarioConfig cfg;
  LinkEstimates e;
  e[0].theta_hat = cfg.rx_boresight(1) + 0.2;
  e[0].d_hat = 250;
  e[1].theta_hat = cfg.rx_boresight(2) - 0.3;
  e[1].d_hat = 260;
  const auto f = mlp_features(e, cfg);
  EXPECT_NEAR(f[0], 0.2, 1e-12);
  EXPECT_EQ(f[1], 250);
  EXPECT_NEAR(f[2], -0.3, 1e-12);
  EXPECT_EQ(f[3], 260);
}

TEST(Features, CnnInputCommonRmsScaling) {
  CVector y1(16), y2(16);
  for (int m = 0; m < 16; ++m) y1[m] = cplx(m, 1), y2[m] = cplx(0.1 * m, -2);
  std::vector<double> out(64);
  cnn_input(y1, y2, CnnEncoding::real_imag, out.data());
  double s2 = 0;
  for (double v : out) s2 += v * v;
  EXPECT_NEAR(s2 / 32.0, 1.0, 1e-12);
  // Ratio between receivers is kept.
  EXPECT_NEAR(out[32 + 5] / out[5], 0.1, 1e-12);
}

TEST(Checkpoint, MlpRoundTrip) {
  const ScenarioConfig cfg;
  PfMlp m(MlpSpec{}, LabelBox::from_roi(cfg.roi));
  Rng rng(23);
  m.net.init(rng);
  m.norm.shift = {0.1, 300, -0.1, 310};
  m.norm.scale = {0.5, 40, 0.5, 45};
  const auto path = temp_file("mlp.ckpt");
  m.save(path.string());
  PfMlp l = PfMlp::load(path.string());
  std::filesystem::remove(path);
  LinkEstimates e;
  e[0].theta_hat = 4.0, e[0].d_hat = 300, e[1].theta_hat = 2.0, e[1].d_hat = 280;
  EXPECT_EQ(m.predict(e, cfg), l.predict(e, cfg));
  EXPECT_EQ(l.net.state(), m.net.state());
}

TEST(Checkpoint, CnnRoundTripKeepsBatchNormStats) {
  const ScenarioConfig cfg;
  SfCnn m(tiny_cnn(64), CnnEncoding::mag_phase, LabelBox::from_roi(cfg.roi));
  Rng rng(24);
  m.net.init(rng);
  m.net.forward(random_tensor<float>(4, 4, 64, 25), true);  // moves running stats
  m.norm.shift = {0, 0, 0, 0};
  m.norm.scale = {1, 2, 1, 2};
  const auto path = temp_file("cnn.ckpt");
  m.save(path.string());
  SfCnn l = SfCnn::load(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(l.encoding, CnnEncoding::mag_phase);
  EXPECT_EQ(l.net.state(), m.net.state());
  CVector y1(64), y2(64);
  for (int k = 0; k < 64; ++k) y1[k] = std::polar(1.0, 0.1 * k), y2[k] = std::polar(0.5, -0.2 * k);
  EXPECT_EQ(m.predict(y1, y2), l.predict(y1, y2));
}

TEST(Checkpoint, RejectsGarbage) {
  const auto path = temp_file("garbage.ckpt");
  {
    std::ofstream f(path);
    f << "not a checkpoint";
  }
  EXPECT_THROW(PfMlp::load(path.string()), Error);
  std::filesystem::remove(path);
  EXPECT_THROW(PfMlp::load(path.string()), Error);
}
