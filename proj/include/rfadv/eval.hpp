#pragma once

// Monte Carlo evaluation: PNR -> power budget calibration, single seeded
// attack trials, and grid sweeps aggregated into accuracy rows.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rfadv/attack.hpp"
#include "rfadv/chan.hpp"
#include "rfadv/common.hpp"
#include "rfadv/net.hpp"
#include "rfadv/sig.hpp"

namespace rfadv::eval {

/// What the adversary differentiates and bisects against.
enum class Anchor {
  Clean,    // the noiseless transmitted frame; receiver noise is drawn afterwards
  Received, // the actual receiver input, noise realization included
};

inline std::string_view anchor_name(Anchor a) { return a == Anchor::Clean ? "clean" : "received"; }

inline Anchor parse_anchor(std::string_view s) {
  if (s == "clean") return Anchor::Clean;
  if (s == "received") return Anchor::Received;
  throw ConfigError("anchor must be 'clean' or 'received'");
}

inline constexpr double kAttackOff = -std::numeric_limits<double>::infinity();

/// Budget whose expected received per-sample power over the noise power is
/// 10^(pnr_db/10): P_max = p sigma_n^2 10^(pnr/10) / G. pnr_db = -inf gives 0.
inline double pnr_to_pmax(double pnr_db, double snr_db, const chan::ChannelParams &params) {
  const double g = chan::mean_received_power_gain(params);
  if (!(g > 0.0)) throw ConfigError("channel has zero mean received power gain");
  if (std::isinf(pnr_db) && pnr_db < 0) return 0.0;
  return static_cast<double>(params.p) * sig::noise_variance(snr_db) * db_to_linear(pnr_db) / g;
}

struct TrialOutcome {
  bool fooled = false;
  std::size_t predicted = 0;
  bool craft_failed = false;
};

struct TrialSpec {
  attack::Kind kind = attack::Kind::MRPP1;
  std::size_t m = 1; // antennas, or adversaries for MULTI_ADV
  double p_max = 0.0;
  double eps_acc_rel = 1e-3;
  Anchor anchor = Anchor::Received;
  bool tx_fading = false;
};

inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) { return derive_seed(seed, 0x7121a1, trial); }

// Sub-streams of one trial.
inline std::uint64_t channel_seed(std::uint64_t ts) { return derive_seed(ts, 1); }
inline std::uint64_t noise_seed(std::uint64_t ts) { return derive_seed(ts, 2); }
inline std::uint64_t gauss_seed(std::uint64_t ts) { return derive_seed(ts, 3); }
inline std::uint64_t tx_seed(std::uint64_t ts) { return derive_seed(ts, 4); }

/// Transmitter link output: identity, or unit-power per-tap Rayleigh fading.
inline CVec tx_link(const CVec &x, bool fading, std::uint64_t seed) {
  if (!fading) return x;
  Rng rng(seed);
  CVec out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) out[t] = rng.complex_normal() * x[t];
  return out;
}

/// One attack trial: sample channels, craft, add receiver noise, classify.
/// A pure function of its arguments; `ts` is the trial seed.
inline TrialOutcome run_trial(const net::Model &model, const sig::Frame &frame, chan::ChannelParams params,
                              const TrialSpec &spec, std::uint64_t ts) {
  const CVec x = tx_link(frame.iq, spec.tx_fading, tx_seed(ts));
  Rng noise_rng(noise_seed(ts));
  const CVec noisy = sig::add_awgn(x, frame.snr_db, noise_rng);
  const CVec &anchor = spec.anchor == Anchor::Clean ? x : noisy;

  TrialOutcome out;
  if (spec.p_max <= 0.0) {
    out.predicted = net::classify(model, noisy);
    out.fooled = out.predicted != frame.label;
    return out;
  }

  const auto cfg = attack::AttackConfig::relative(spec.p_max, spec.eps_acc_rel, spec.kind);
  std::vector<CVec> channels;
  std::vector<CVec> deltas;
  try {
    if (spec.kind == attack::Kind::MULTI_ADV) {
      // separate devices: no cross-adversary correlation
      params.m = spec.m;
      params.rho = 0.0;
      const auto all = chan::sample_channels(params, channel_seed(ts));
      std::vector<chan::ChannelSet> advs;
      for (const auto &h : all.h) {
        chan::ChannelSet one;
        one.h = {h};
        one.params = all.params;
        one.params.m = 1;
        advs.push_back(std::move(one));
      }
      for (const auto &s : attack::multi_adversary(model, anchor, frame.label, advs, cfg)) deltas.push_back(s.deltas[0]);
      channels = all.h;
    } else {
      params.m = spec.m;
      const auto set = chan::sample_channels(params, channel_seed(ts));
      Rng gauss(gauss_seed(ts));
      deltas = attack::craft(model, anchor, frame.label, set, cfg, gauss).deltas;
      channels = set.h;
    }
  } catch (const attack::DegenerateGradient &) {
    out.craft_failed = true;
  } catch (const ContractError &) {
    out.craft_failed = true;
  }

  CVec ra = noisy;
  if (!out.craft_failed) {
    for (std::size_t i = 0; i < deltas.size(); ++i)
      for (std::size_t t = 0; t < ra.size(); ++t) ra[t] += channels[i][t] * deltas[i][t];
  }
  out.predicted = net::classify(model, ra);
  out.fooled = out.predicted != frame.label;
  return out;
}

struct ExperimentConfig {
  std::string model_path;
  std::string dataset_path;
  std::vector<attack::Kind> attacks{attack::Kind::MRPP1};
  std::vector<std::size_t> antennas{1};
  std::vector<double> pnr_db{0.0};
  std::vector<double> rho{0.0};
  std::vector<double> rayleigh_var{1.0};
  std::size_t trials = 500;
  std::uint64_t seed = 1;
  double snr_db = 10.0;
  /// Base channel. P_max is calibrated on this block; the rho and
  /// rayleigh_var grids change only the sampled channels.
  chan::ChannelParams channel;
  double eps_acc_rel = 1e-3;
  Anchor anchor = Anchor::Received;
  bool tx_fading = false;
  unsigned jobs = 1;

  void validate() const {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (attacks.empty() || antennas.empty() || pnr_db.empty() || rho.empty() || rayleigh_var.empty())
      throw ConfigError("every sweep grid needs at least one value");
    for (auto m : antennas)
      if (m < 1) throw ConfigError("antenna counts must be >= 1");
    if (!(eps_acc_rel > 0.0 && eps_acc_rel < 1.0)) throw ConfigError("eps_acc_rel must lie in (0, 1)");
    for (double r : rho) {
      auto c = channel;
      c.rho = r;
      c.validate();
    }
    for (double v : rayleigh_var) {
      auto c = channel;
      c.rayleigh_var = v;
      c.validate();
    }
  }
};

struct ResultRow {
  attack::Kind kind = attack::Kind::MRPP1;
  std::size_t m = 1;
  double pnr_db = 0.0;
  double rho = 0.0;
  double rayleigh_var = 1.0;
  std::size_t trials = 0;
  std::size_t fooled = 0;
  std::size_t craft_failures = 0;
  double accuracy = 0.0;
  double ci95 = 0.0;
};

inline double ci95_half_width(double acc, std::size_t trials) {
  return 1.96 * std::sqrt(acc * (1.0 - acc) / static_cast<double>(trials));
}

struct Cell {
  attack::Kind kind;
  std::size_t m;
  double pnr_db, rho, var;
};

/// Cross product in the order attack, m, pnr, rho, variance (last fastest).
inline std::vector<Cell> enumerate_cells(const ExperimentConfig &cfg) {
  std::vector<Cell> cells;
  for (auto k : cfg.attacks)
    for (auto m : cfg.antennas)
      for (double pnr : cfg.pnr_db)
        for (double rho : cfg.rho)
          for (double var : cfg.rayleigh_var) cells.push_back({k, m, pnr, rho, var});
  return cells;
}

/// Runs every cell. Trial t of every cell uses test frame t mod N and the
/// trial seed derived from (seed, t), so cells share frames, channels and
/// noise (common random numbers) and rows do not depend on cfg.jobs.
inline std::vector<ResultRow> run_experiment(const ExperimentConfig &cfg, const net::Model &model,
                                             std::span<const sig::Frame> test_frames) {
  cfg.validate();
  if (test_frames.empty()) throw ConfigError("experiment needs a nonempty test split");
  const auto cells = enumerate_cells(cfg);
  const std::size_t n = cells.size() * cfg.trials;
  std::vector<TrialOutcome> outcomes(n);

  parallel_for(n, cfg.jobs, [&](std::size_t idx) {
    const auto &cell = cells[idx / cfg.trials];
    const std::size_t trial = idx % cfg.trials;
    auto params = cfg.channel;
    params.rho = cell.rho;
    params.rayleigh_var = cell.var;
    params.p = model.arch.p;
    auto calib = cfg.channel;
    calib.p = model.arch.p;
    TrialSpec spec;
    spec.kind = cell.kind;
    spec.m = cell.m;
    spec.p_max = pnr_to_pmax(cell.pnr_db, cfg.snr_db, calib);
    spec.eps_acc_rel = cfg.eps_acc_rel;
    spec.anchor = cfg.anchor;
    spec.tx_fading = cfg.tx_fading;
    sig::Frame frame = test_frames[trial % test_frames.size()];
    frame.snr_db = cfg.snr_db;
    outcomes[idx] = run_trial(model, frame, params, spec, trial_seed(cfg.seed, trial));
  });

  std::vector<ResultRow> rows;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    ResultRow row;
    row.kind = cells[c].kind;
    row.m = cells[c].m;
    row.pnr_db = cells[c].pnr_db;
    row.rho = cells[c].rho;
    row.rayleigh_var = cells[c].var;
    row.trials = cfg.trials;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      const auto &o = outcomes[c * cfg.trials + t];
      row.fooled += o.fooled;
      row.craft_failures += o.craft_failed;
    }
    row.accuracy = 1.0 - static_cast<double>(row.fooled) / static_cast<double>(row.trials);
    row.ci95 = ci95_half_width(row.accuracy, row.trials);
    rows.push_back(row);
  }
  return rows;
}

// ---- results CSV ---------------------------------------------------------

inline constexpr std::string_view kCsvHeader = "attack,m,pnr_db,rho,rayleigh_var,trials,accuracy,ci95";

inline std::string format_number(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string rows_to_csv(std::span<const ResultRow> rows) {
  std::string out(kCsvHeader);
  out += '\n';
  char buf[64];
  for (const auto &r : rows) {
    out += kind_name(r.kind);
    out += ',' + std::to_string(r.m);
    out += ',' + format_number(r.pnr_db);
    out += ',' + format_number(r.rho);
    out += ',' + format_number(r.rayleigh_var);
    out += ',' + std::to_string(r.trials);
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", r.accuracy, r.ci95);
    out += buf;
  }
  return out;
}

inline double parse_double(const std::string &s) {
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception &) {
    throw FormatError("not a number: '" + s + "'");
  }
  if (pos != s.size()) throw FormatError("not a number: '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<ResultRow> rows_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(std::string(kCsvHeader)))
    throw FormatError("results CSV header mismatch");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw FormatError("results CSV row has " + std::to_string(f.size()) + " fields");
    ResultRow r;
    try {
      r.kind = attack::parse_kind(f[0]);
    } catch (const ConfigError &e) {
      throw FormatError(e.what());
    }
    r.m = static_cast<std::size_t>(parse_double(f[1]));
    r.pnr_db = parse_double(f[2]);
    r.rho = parse_double(f[3]);
    r.rayleigh_var = parse_double(f[4]);
    r.trials = static_cast<std::size_t>(parse_double(f[5]));
    r.accuracy = parse_double(f[6]);
    r.ci95 = parse_double(f[7]);
    rows.push_back(r);
  }
  return rows;
}

} // namespace rfadv::eval
