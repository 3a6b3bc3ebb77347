#include <gtest/gtest.h>

#include <numeric>

#include "rfadv/net.hpp"
#include "support.hpp"

using namespace rfadv;
using net::Precision;

namespace {

CVec random_frame(std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  CVec x(p);
  for (auto &z : x) z = rng.complex_normal();
  return x;
}

// p=2, one 1x1 conv1 filter (w=2, b=0.5), one conv2 filter weighting I by
// +1 and Q by -1, dense 2->2, output 2 classes, identity activations.
net::Model linear_rig() {
  net::ModelArch a;
  a.p = 2;
  a.conv1_filters = 1;
  a.conv1_kernel = 1;
  a.conv2_filters = 1;
  a.conv2_kernel = 1;
  a.dense = 2;
  a.classes = 2;
  a.activation = net::Activation::Identity;
  net::Model m;
  m.arch = a;
  m.theta = {2.0f, 0.5f,                  // conv1 w, b
             1.0f, -1.0f, 0.0f,           // conv2 w[I], w[Q], b
             1.0f, 2.0f, 3.0f, -1.0f,     // dense1 [in][out]
             0.1f, -0.2f,                 // dense1 b
             0.5f, -1.0f, 2.0f, 0.25f,    // dense2 [in][out]
             0.0f, 1.0f};                 // dense2 b
  EXPECT_EQ(m.theta.size(), net::parameter_count(a));
  return m;
}

// Identity-activation rig whose first two layers compute Re(conj(w_g) x[t])
// for two complex filter taps w_g, then a random dense head.
net::Model rotation_rig(double phi) {
  net::ModelArch a;
  a.p = 8;
  a.conv1_filters = 1;
  a.conv1_kernel = 1;
  a.conv2_filters = 2;
  a.conv2_kernel = 1;
  a.dense = 3;
  a.classes = 2;
  a.activation = net::Activation::Identity;
  auto m = net::init_model(a, 31);
  const net::Layout L(a);
  m.theta[L.c1w] = 1.0f;
  const cplx w[2] = {{0.7, -0.4}, {-0.2, 1.1}};
  for (std::size_t g = 0; g < 2; ++g) {
    const cplx r = w[g] * std::polar(1.0, phi);
    m.theta[L.c2w + (g * 2 + 0)] = static_cast<float>(r.real());
    m.theta[L.c2w + (g * 2 + 1)] = static_cast<float>(r.imag());
  }
  return m;
}

} // namespace

// Oracle: layer tally in tests/oracle/derive.py gives
// 128 + 3088 + 131136 + 520 = 134872.
TEST(Model, DefaultParameterCount) { EXPECT_EQ(net::parameter_count(net::ModelArch{}), 134872u); }

TEST(Model, InitDeterministicWithZeroBiases) {
  const net::ModelArch a;
  const auto m1 = net::init_model(a, 4), m2 = net::init_model(a, 4);
  EXPECT_EQ(m1.theta, m2.theta);
  EXPECT_NE(m1.theta, net::init_model(a, 5).theta);
  const net::Layout L(a);
  for (std::size_t i = L.c1b; i < L.c2w; ++i) EXPECT_EQ(m1.theta[i], 0.0f);
  for (std::size_t i = L.c2b; i < L.d1w; ++i) EXPECT_EQ(m1.theta[i], 0.0f);
  for (std::size_t i = L.d1b; i < L.d2w; ++i) EXPECT_EQ(m1.theta[i], 0.0f);
  for (std::size_t i = L.d2b; i < L.total; ++i) EXPECT_EQ(m1.theta[i], 0.0f);
  const float lim = static_cast<float>(std::sqrt(6.0 / 3));
  for (std::size_t i = L.c1w; i < L.c1b; ++i) EXPECT_LE(std::abs(m1.theta[i]), lim);
}

TEST(Model, RejectsZeroDimensions) {
  net::ModelArch a;
  a.dense = 0;
  EXPECT_THROW(net::init_model(a, 1), ConfigError);
}

TEST(Forward, ProbabilitiesSumToOne) {
  const auto m = net::init_model(net::ModelArch{}, 2);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto o = net::forward(m, random_frame(128, s));
    EXPECT_NEAR(std::accumulate(o.probs.begin(), o.probs.end(), 0.0), 1.0, 1e-6);  // float rounding
    const auto o64 = net::forward(m, random_frame(128, s), Precision::F64);
    EXPECT_NEAR(std::accumulate(o64.probs.begin(), o64.probs.end(), 0.0), 1.0, 1e-12);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(o.logits[c], o64.logits[c], 1e-4);
  }
}

TEST(Forward, ZeroParametersGiveUniform) {
  auto m = net::init_model(net::ModelArch{}, 2);
  std::fill(m.theta.begin(), m.theta.end(), 0.0f);
  for (double p : net::forward(m, random_frame(128, 1)).probs) EXPECT_DOUBLE_EQ(p, 1.0 / 8);
}

// Oracle: logits [-8.6, 6.725] from the matrix product in tests/oracle/derive.py.
TEST(Forward, LinearRigMatchesHandComputation) {
  const auto m = linear_rig();
  const CVec x{{1, 2}, {-0.5, 0.25}};
  for (auto prec : {Precision::F32, Precision::F64}) {
    const auto o = net::forward(m, x, prec);
    EXPECT_NEAR(o.logits[0], -8.6, 1e-5);
    EXPECT_NEAR(o.logits[1], 6.725, 1e-5);
    EXPECT_EQ(o.label(), 1u);
  }
}

TEST(Forward, RejectsWrongLength) {
  EXPECT_THROW(net::forward(linear_rig(), CVec(3)), ContractError);
}

TEST(Gradient, LossVanishesAtCertainty) {
  const auto m = linear_rig();
  const CVec x{{1, 2}, {-0.5, 0.25}};
  EXPECT_LT(net::loss(m, x, 1, Precision::F64), 1e-6);
  EXPECT_GT(net::loss(m, x, 0, Precision::F64), 15.0);
  EXPECT_NEAR(net::loss_and_input_gradient(m, x, 1, Precision::F64).loss, net::loss(m, x, 1, Precision::F64), 1e-12);
}

TEST(Gradient, CentralDifferencesF64) {
  const auto &fx = fixture::trained_fixture();
  Rng pick(8);
  double worst = 0;
  for (int trial = 0; trial < 16; ++trial) {
    const auto &f = fx.data.test.frames[static_cast<std::size_t>(trial)];
    const std::size_t target = pick.next() % 8;
    const auto g = net::loss_and_input_gradient(fx.model, f.iq, target, Precision::F64).grad;
    double gmax = 0;
    for (auto z : g) gmax = std::max({gmax, std::abs(z.real()), std::abs(z.imag())});
    const std::size_t t = pick.next() % 128;
    const bool imag = pick.bit();
    const double h = 1e-4;
    CVec up = f.iq, dn = f.iq;
    const cplx step = imag ? cplx(0, h) : cplx(h, 0);
    up[t] += step;
    dn[t] -= step;
    const double fd =
        (net::loss(fx.model, up, target, Precision::F64) - net::loss(fx.model, dn, target, Precision::F64)) / (2 * h);
    const double an = imag ? g[t].imag() : g[t].real();
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3 * gmax});
    worst = std::max(worst, rel);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Gradient, F32AgreesWithF64) {
  const auto &fx = fixture::trained_fixture();
  const auto &f = fx.data.test.frames[3];
  const auto g32 = net::loss_and_input_gradient(fx.model, f.iq, 2, Precision::F32).grad;
  const auto g64 = net::loss_and_input_gradient(fx.model, f.iq, 2, Precision::F64).grad;
  CVec diff(g32.size());
  for (std::size_t t = 0; t < diff.size(); ++t) diff[t] = g32[t] - g64[t];
  EXPECT_LT(norm2(diff), 1e-4 * norm2(g64));
}

TEST(Gradient, PhaseRotationEquivariance) {
  const double phi = std::numbers::pi / 3;
  const auto m0 = rotation_rig(0.0), m1 = rotation_rig(phi);
  const auto x = random_frame(8, 44);
  CVec xr(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) xr[t] = x[t] * std::polar(1.0, phi);
  const auto a = net::loss_and_input_gradient(m0, x, 1, Precision::F64);
  const auto b = net::loss_and_input_gradient(m1, xr, 1, Precision::F64);
  // float storage of the rotated taps limits agreement to ~1e-7
  EXPECT_NEAR(a.loss, b.loss, 1e-6);
  for (std::size_t t = 0; t < x.size(); ++t)
    EXPECT_NEAR(std::abs(b.grad[t] - a.grad[t] * std::polar(1.0, phi)), 0.0, 1e-6 * norm2(a.grad));
}

TEST(Train, ZeroLearningRateIsNoOp) {
  sig::DatasetConfig dc;
  dc.frames_per_class = 4;
  const auto ds = sig::build_dataset(dc);
  const auto m = net::init_model(fixture::small_arch(), 3);
  net::TrainConfig tc;
  tc.epochs = 1;
  tc.lr = 0;
  EXPECT_EQ(net::train(m, ds.train, tc).model.theta, m.theta);
}

TEST(Train, OneEpochDoesNotIncreaseLoss) {
  sig::DatasetConfig dc;
  dc.frames_per_class = 1;
  auto ds = sig::build_dataset(dc);
  for (auto &f : ds.train.frames) f.snr_db = sig::kNoiseless;
  ASSERT_EQ(ds.train.frames.size(), 8u);
  const auto m = net::init_model(fixture::small_arch(), 3);
  auto mean_loss = [&](const net::Model &mm) {
    double s = 0;
    for (const auto &f : ds.train.frames) s += net::loss(mm, f.iq, f.label, Precision::F64);
    return s / 8;
  };
  net::TrainConfig tc;
  tc.epochs = 1;
  tc.batch = 8;
  tc.lr = 0.01;
  const auto rep = net::train(m, ds.train, tc);
  EXPECT_LE(mean_loss(rep.model), mean_loss(m));
  EXPECT_EQ(rep.model.epochs, 1u);
  ASSERT_EQ(rep.epoch_loss.size(), 1u);
}

TEST(Train, Deterministic) {
  sig::DatasetConfig dc;
  dc.frames_per_class = 6;
  const auto ds = sig::build_dataset(dc);
  const auto m = net::init_model(fixture::small_arch(), 3);
  net::TrainConfig tc;
  tc.epochs = 2;
  tc.batch = 5;
  EXPECT_EQ(net::train(m, ds.train, tc).model, net::train(m, ds.train, tc).model);
}

TEST(Train, RejectsBadInputs) {
  sig::DatasetConfig dc;
  dc.frames_per_class = 4;
  const auto ds = sig::build_dataset(dc);
  const auto m = net::init_model(fixture::small_arch(), 3);
  EXPECT_THROW(net::train(m, sig::Dataset{}, {}), ConfigError);
  EXPECT_THROW(net::train(m, ds.test, {}), ConfigError);
  auto a = fixture::small_arch();
  a.classes = 5;
  EXPECT_THROW(net::train(net::init_model(a, 1), ds.train, {}), ConfigError);
}

TEST(Accuracy, Extremes) {
  const auto &fx = fixture::trained_fixture();
  std::vector<sig::Frame> frames(fx.data.test.frames.begin(), fx.data.test.frames.begin() + 40);
  for (auto &f : frames) f.label = static_cast<std::uint16_t>(net::classify(fx.model, f.iq));
  EXPECT_EQ(net::evaluate_accuracy(fx.model, frames), 1.0);

  auto biased = fx.model;
  biased.theta[net::Layout(biased.arch).d2b] = 1e6f; // always class 0
  for (auto &f : frames) f.label = 1;
  EXPECT_EQ(net::evaluate_accuracy(biased, frames), 0.0);
  EXPECT_THROW(net::evaluate_accuracy(biased, std::span<const sig::Frame>{}), ConfigError);
}

TEST(Accuracy, MatchesPerFrameTally) {
  const auto &fx = fixture::trained_fixture();
  const auto noisy = sig::with_receiver_noise(fx.data.test.frames, 3);
  std::size_t hits = 0;
  for (const auto &f : noisy) {
    const auto probs = net::forward(fx.model, f.iq).probs;
    hits += static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin()) == f.label;
  }
  EXPECT_DOUBLE_EQ(net::evaluate_accuracy(fx.model, noisy), static_cast<double>(hits) / noisy.size());
  EXPECT_GT(static_cast<double>(hits) / noisy.size(), 0.6); // the shared fixture is competent
}

TEST(ModelFile, RoundTrip) {
  const auto &fx = fixture::trained_fixture();
  const auto bytes = net::encode_model(fx.model);
  const auto back = net::decode_model(bytes);
  EXPECT_EQ(back, fx.model);
  EXPECT_EQ(back.theta, fx.model.theta);
  auto rig = linear_rig();
  EXPECT_EQ(net::decode_model(net::encode_model(rig)).arch.activation, net::Activation::Identity);

  fixture::TempDir dir("model");
  net::save_model(fx.model, dir / "m.rfmc");
  const auto loaded = net::load_model(dir / "m.rfmc");
  EXPECT_EQ(net::evaluate_accuracy(loaded, fx.data.test.frames), net::evaluate_accuracy(fx.model, fx.data.test.frames));
}

TEST(ModelFile, HeaderFieldsMatchArch) {
  const auto m = linear_rig();
  const auto b = net::encode_model(m);
  auto u32 = [&](std::size_t o) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = v << 8 | std::uint8_t(b[o + static_cast<std::size_t>(i)]);
    return v;
  };
  EXPECT_EQ(b.substr(0, 4), "RFMC");
  EXPECT_EQ(u32(8), 2u);   // p
  EXPECT_EQ(u32(32), 2u);  // classes
  EXPECT_EQ(u32(36), 1u);  // identity activation
  EXPECT_EQ(u32(48), 17u); // parameter count
  EXPECT_EQ(b.size(), 52 + 4 * 17u);
}

TEST(ModelFile, RejectsDamage) {
  const auto b = net::encode_model(linear_rig());
  EXPECT_THROW(net::decode_model(b.substr(0, b.size() - 1)), FormatError);
  EXPECT_THROW(net::decode_model(b.substr(0, 20)), FormatError);
  auto bad = b;
  bad[48] = 16; // count no longer matches arch
  EXPECT_THROW(net::decode_model(bad), FormatError);
  bad = b;
  bad[36] = 7;
  EXPECT_THROW(net::decode_model(bad), FormatError);
  fixture::TempDir dir("model-missing");
  EXPECT_THROW(net::load_model(dir / "absent.rfmc"), binio::IoError);
}
