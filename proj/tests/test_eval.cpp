#include <gtest/gtest.h>

#include "rfadv/eval.hpp"
#include "support.hpp"

using namespace rfadv;
using attack::Kind;

namespace {

eval::ExperimentConfig small_config() {
  eval::ExperimentConfig c;
  c.attacks = {Kind::EMCG};
  c.antennas = {2};
  c.pnr_db = {-10, 0};
  c.trials = 40;
  c.seed = 3;
  return c;
}

} // namespace

// Oracle: 128 * 0.1 / 10^-5.4 = 12.8 * 10^5.4 = 3215214.632332265 (tests/oracle/derive.py).
TEST(Pnr, FormulaInversion) {
  chan::ChannelParams p;
  p.shadow_sigma_db = 0;
  EXPECT_NEAR(eval::pnr_to_pmax(0.0, 10.0, p), 3215214.632332265, 1e-6);
  EXPECT_NEAR(eval::pnr_to_pmax(10.0, 10.0, p) / eval::pnr_to_pmax(0.0, 10.0, p), 10.0, 1e-12);
  EXPECT_EQ(eval::pnr_to_pmax(eval::kAttackOff, 10.0, p), 0.0);
}

TEST(Pnr, MonteCarloCalibration) {
  const chan::ChannelParams p;
  for (double pnr : {-10.0, 0.0}) {
    const double pm = eval::pnr_to_pmax(pnr, 10.0, p);
    double rx = 0, noise = 0;
    Rng rng(91);
    for (std::uint64_t trial = 0; trial < 10000; ++trial) {
      const auto h = chan::sample_channels(p, derive_seed(92, trial)).h[0];
      CVec d(p.p);
      for (auto &z : d) z = rng.complex_normal();
      const double s = std::sqrt(pm / energy(d));
      for (std::size_t t = 0; t < p.p; ++t) rx += std::norm(h[t] * d[t] * s);
      noise += static_cast<double>(p.p) * sig::noise_variance(10.0);
    }
    EXPECT_NEAR(rx / noise / db_to_linear(pnr), 1.0, 0.10) << pnr;
  }
}

TEST(Trial, NullAttackIsCleanClassification) {
  const auto &fx = fixture::trained_fixture();
  for (std::size_t i = 0; i < 30; ++i) {
    const auto &f = fx.data.test.frames[i];
    const auto ts = eval::trial_seed(5, i);
    eval::TrialSpec spec;
    spec.p_max = 0.0;
    const auto o = eval::run_trial(fx.model, f, chan::ChannelParams{}, spec, ts);
    Rng n(eval::noise_seed(ts));
    const auto noisy = sig::add_awgn(f.iq, f.snr_db, n);
    EXPECT_EQ(o.predicted, net::classify(fx.model, noisy));
    EXPECT_EQ(o.fooled, o.predicted != f.label);
  }
}

TEST(Trial, Deterministic) {
  const auto &fx = fixture::trained_fixture();
  eval::TrialSpec spec;
  spec.kind = Kind::PCG_IND;
  spec.m = 3;
  spec.p_max = eval::pnr_to_pmax(-8, 10, {});
  const auto a = eval::run_trial(fx.model, fx.data.test.frames[1], {}, spec, 77);
  const auto b = eval::run_trial(fx.model, fx.data.test.frames[1], {}, spec, 77);
  EXPECT_EQ(a.fooled, b.fooled);
  EXPECT_EQ(a.predicted, b.predicted);
}

TEST(Experiment, CellCounting) {
  const auto &fx = fixture::trained_fixture();
  auto c = small_config();
  c.attacks = {Kind::MRPP1};
  c.antennas = {1};
  c.pnr_db = {-20, -10, 0};
  c.trials = 100;
  const auto rows = eval::run_experiment(c, fx.model, fx.data.test.frames);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto &r : rows) EXPECT_EQ(r.trials, 100u);
  EXPECT_EQ(rows[2].pnr_db, 0.0);
}

TEST(Experiment, AttackOffEqualsEvaluateAccuracy) {
  const auto &fx = fixture::trained_fixture();
  auto c = small_config();
  c.pnr_db = {eval::kAttackOff};
  c.trials = 250;
  const auto rows = eval::run_experiment(c, fx.model, fx.data.test.frames);
  std::vector<sig::Frame> noisy;
  for (std::size_t t = 0; t < c.trials; ++t) {
    auto f = fx.data.test.frames[t % fx.data.test.frames.size()];
    Rng n(eval::noise_seed(eval::trial_seed(c.seed, t)));
    f.iq = sig::add_awgn(f.iq, c.snr_db, n);
    noisy.push_back(f);
  }
  EXPECT_DOUBLE_EQ(rows[0].accuracy, net::evaluate_accuracy(fx.model, noisy));
}

TEST(Experiment, ScheduleIndependent) {
  const auto &fx = fixture::trained_fixture();
  auto c = small_config();
  c.attacks = {Kind::EMCG, Kind::SAGA, Kind::MULTI_ADV};
  c.rho = {0.0, 0.5};
  const auto serial = eval::run_experiment(c, fx.model, fx.data.test.frames);
  c.jobs = 4;
  const auto parallel = eval::run_experiment(c, fx.model, fx.data.test.frames);
  EXPECT_EQ(eval::rows_to_csv(serial), eval::rows_to_csv(parallel));
}

TEST(Experiment, AttacksLowerAccuracy) {
  const auto &fx = fixture::trained_fixture();
  auto c = small_config();
  c.pnr_db = {eval::kAttackOff, 0.0};
  c.trials = 100;
  const auto rows = eval::run_experiment(c, fx.model, fx.data.test.frames);
  EXPECT_LT(rows[1].accuracy, rows[0].accuracy);
}

TEST(Experiment, GaussianWeakerThanEmcg) {
  const auto &fx = fixture::trained_fixture();
  auto c = small_config();
  c.attacks = {Kind::GAUSS_EMCG, Kind::EMCG};
  c.pnr_db = {0.0};
  c.trials = 500;
  const auto rows = eval::run_experiment(c, fx.model, fx.data.test.frames);
  EXPECT_GT(rows[1].fooled, rows[0].fooled);
  EXPECT_GE(rows[0].accuracy, rows[1].accuracy);
}

TEST(Experiment, RejectsBadConfig) {
  const auto &fx = fixture::trained_fixture();
  auto c = small_config();
  c.rho = {1.0};
  EXPECT_THROW(eval::run_experiment(c, fx.model, fx.data.test.frames), ConfigError);
  c = small_config();
  c.trials = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.pnr_db.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  EXPECT_THROW(eval::run_experiment(c, fx.model, std::span<const sig::Frame>{}), ConfigError);
}

TEST(Experiment, Ci95) {
  EXPECT_DOUBLE_EQ(eval::ci95_half_width(0.5, 100), 1.96 * 0.05);
  EXPECT_EQ(eval::ci95_half_width(1.0, 10), 0.0);
}

TEST(ResultsCsv, RoundTrip) {
  std::vector<eval::ResultRow> rows(2);
  rows[0].kind = Kind::PCG_COMMON;
  rows[0].m = 4;
  rows[0].pnr_db = -7.5;
  rows[0].rho = 0.2;
  rows[0].rayleigh_var = 0.5;
  rows[0].trials = 500;
  rows[0].accuracy = 0.412;
  rows[0].ci95 = eval::ci95_half_width(0.412, 500);
  rows[1].kind = Kind::GAUSS_EMCG;
  rows[1].pnr_db = eval::kAttackOff;
  rows[1].trials = 1;
  const auto csv = eval::rows_to_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), eval::kCsvHeader);
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  EXPECT_NE(csv.find("pcg_common,4,-7.5,0.2,0.5,500,0.412000,"), std::string::npos);
  EXPECT_NE(csv.find("gauss_emcg,1,-inf,"), std::string::npos);
  const auto back = eval::rows_from_csv(csv);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].kind, Kind::PCG_COMMON);
  EXPECT_EQ(back[0].m, 4u);
  EXPECT_EQ(back[0].pnr_db, -7.5);
  EXPECT_EQ(back[1].pnr_db, eval::kAttackOff);
  EXPECT_EQ(eval::rows_to_csv(back), csv);
}

TEST(ResultsCsv, RejectsMalformed) {
  EXPECT_THROW(eval::rows_from_csv(""), FormatError);
  EXPECT_THROW(eval::rows_from_csv("a,b\n"), FormatError);
  const std::string h = std::string(eval::kCsvHeader) + "\n";
  EXPECT_TRUE(eval::rows_from_csv(h).empty());
  EXPECT_THROW(eval::rows_from_csv(h + "emcg,2,0\n"), FormatError);
  EXPECT_THROW(eval::rows_from_csv(h + "laser,2,0,0,1,10,0.5,0.1\n"), FormatError);
  EXPECT_THROW(eval::rows_from_csv(h + "emcg,2,zero,0,1,10,0.5,0.1\n"), FormatError);
}
