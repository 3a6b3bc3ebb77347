#pragma once

// rfadvsim subcommands: gen-data, train, attack-eval, plot.
//
// Exit codes: 0 ok, 2 usage/config, 3 I/O or malformed input. Every output
// artifact gets a sibling <artifact>.manifest.json holding the resolved
// config, which --config accepts back for a rerun.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rfadv/binio.hpp"
#include "rfadv/eval.hpp"
#include "rfadv/net.hpp"
#include "rfadv/plot.hpp"
#include "rfadv/sig.hpp"

namespace rfadv::cli {

using json = nlohmann::json;

inline constexpr const char *kToolVersion = "0.1.0";
inline constexpr int kExitOk = 0, kExitUsage = 2, kExitIo = 3;

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// RFADVSIM_SEED, when set, beats both --seed and any config file.
inline std::optional<std::uint64_t> env_seed() {
  const char *v = std::getenv("RFADVSIM_SEED");
  if (!v || !*v) return std::nullopt;
  char *end = nullptr;
  errno = 0;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (errno || *end || *v == '-') throw ConfigError(std::string("RFADVSIM_SEED is not an unsigned integer: ") + v);
  return s;
}

inline std::string manifest_path(const std::string &artifact) { return artifact + ".manifest.json"; }

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config;
  std::uint64_t seed = 0;
  std::string started;
  std::vector<std::string> outputs;
};

inline json manifest_json(const Manifest &m) {
  return json{{"tool", "rfadvsim"},
              {"tool_version", kToolVersion},
              {"command", m.command},
              {"argv", m.argv},
              {"config", m.config},
              {"config_hash", "fnv1a64:" + hex64(fnv1a64(m.config.dump()))},
              {"seed", m.seed},
              {"artifact_versions",
               {{"rfds", sig::kDatasetVersion}, {"rfmc", net::kModelVersion}, {"results_csv", 1}}},
              {"started_utc", m.started},
              {"finished_utc", utc_now()},
              {"outputs", m.outputs}};
}

inline void write_manifest(const std::string &artifact, const Manifest &m) {
  binio::write_file_atomic(manifest_path(artifact), manifest_json(m).dump(2) + "\n");
}

/// Config documents may be bare or a manifest with a "config" member.
inline json load_config(const std::string &path) {
  if (path.empty()) return json::object();
  json j;
  try {
    j = json::parse(binio::read_file(path));
  } catch (const json::parse_error &e) {
    throw FormatError("config " + path + ": " + e.what());
  }
  if (j.is_object() && j.contains("config") && j.contains("tool")) j = j["config"];
  if (!j.is_object()) throw ConfigError("config " + path + " must be a JSON object");
  return j;
}

/// "a:b:step" inclusive grid, or a comma list, or one number.
inline std::vector<double> parse_grid(const std::string &spec, const std::string &flag) {
  auto num = [&](const std::string &s) {
    try {
      return eval::parse_double(s);
    } catch (const FormatError &) {
      throw ConfigError(flag + ": bad number '" + s + "'");
    }
  };
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::size_t a = 0;
    for (std::size_t b; (b = spec.find(':', a)) != std::string::npos; a = b + 1) parts.push_back(spec.substr(a, b - a));
    parts.push_back(spec.substr(a));
    if (parts.size() != 3) throw ConfigError(flag + " expects start:stop:step, got '" + spec + "'");
    const double lo = num(parts[0]), hi = num(parts[1]), step = num(parts[2]);
    if (!(step > 0) || hi < lo) throw ConfigError(flag + " needs step > 0 and stop >= start");
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
  }
  std::size_t a = 0;
  for (std::size_t b;; a = b + 1) {
    b = spec.find(',', a);
    out.push_back(num(spec.substr(a, b == std::string::npos ? std::string::npos : b - a)));
    if (b == std::string::npos) break;
  }
  return out;
}

inline std::vector<std::string> split_list(const std::string &s) {
  std::vector<std::string> out;
  std::size_t a = 0;
  for (std::size_t b;; a = b + 1) {
    b = s.find(',', a);
    auto item = s.substr(a, b == std::string::npos ? std::string::npos : b - a);
    if (!item.empty()) out.push_back(item);
    if (b == std::string::npos) break;
  }
  return out;
}

// ---- gen-data --------------------------------------------------------------

struct GenDataArgs {
  std::string out, config;
  std::string classes = "8";
  int frames_per_class = 2000;
  double snr_db = 10.0;
  std::string extra_snr;
  int sps = 8;
  std::size_t p = 128;
  std::string pulse = "rect";
  std::uint64_t seed = 1;
  std::string format = "rfds";
};

inline std::vector<sig::ModScheme> parse_classes(const std::string &s) {
  const bool count = !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
  if (count) {
    const auto n = std::stoul(s);
    if (n < 1 || n > sig::kAllSchemes.size())
      throw ConfigError("--classes must be 1.." + std::to_string(sig::kAllSchemes.size()) + " or a list of names");
    return {sig::kAllSchemes.begin(), sig::kAllSchemes.begin() + static_cast<long>(n)};
  }
  std::vector<sig::ModScheme> out;
  for (const auto &name : split_list(s)) out.push_back(sig::parse_scheme(name));
  if (out.empty()) throw ConfigError("--classes is empty");
  return out;
}

inline int cmd_gen_data(GenDataArgs a, const CLI::App &sub, const std::vector<std::string> &argv, std::ostream &out) {
  Manifest man{"gen-data", argv, {}, 0, utc_now(), {}};
  const json c = load_config(a.config);
  auto take = [&](const char *key, const char *flag, auto &var) {
    if (!sub.count(flag) && c.contains(key)) c.at(key).get_to(var);
  };
  std::vector<std::string> class_names;
  if (!sub.count("--classes") && c.contains("classes")) {
    class_names = c.at("classes").get<std::vector<std::string>>();
    a.classes.clear();
    for (const auto &n : class_names) a.classes += (a.classes.empty() ? "" : ",") + n;
  }
  take("frames_per_class", "--frames-per-class", a.frames_per_class);
  take("snr_db", "--snr-db", a.snr_db);
  take("sps", "--sps", a.sps);
  take("p", "--p", a.p);
  take("pulse", "--pulse", a.pulse);
  take("seed", "--seed", a.seed);
  take("format", "--format", a.format);
  std::vector<double> extra;
  if (!sub.count("--extra-snr-db") && c.contains("extra_snr_db"))
    extra = c.at("extra_snr_db").get<std::vector<double>>();
  else if (!a.extra_snr.empty())
    extra = parse_grid(a.extra_snr, "--extra-snr-db");
  if (auto s = env_seed()) a.seed = *s;

  if (a.frames_per_class < 1) throw ConfigError("--frames-per-class must be >= 1");
  if (a.sps < 1) throw ConfigError("--sps must be >= 1");
  if (a.p < 1 || a.p > 65535) throw ConfigError("--p must be in 1..65535");
  if (a.format != "rfds" && a.format != "csv") throw ConfigError("--format must be rfds or csv");
  if (a.pulse != "rect" && a.pulse != "rrc") throw ConfigError("--pulse must be rect or rrc");
  if (a.out.empty()) throw ConfigError("--out is required");

  sig::DatasetConfig cfg;
  cfg.schemes = parse_classes(a.classes);
  cfg.frames_per_class = a.frames_per_class;
  cfg.snr_db = a.snr_db;
  cfg.extra_snr_db = extra;
  cfg.sps = a.sps;
  cfg.p = a.p;
  cfg.pulse = a.pulse == "rrc" ? sig::Pulse::RootRaisedCosine : sig::Pulse::Rect;
  cfg.seed = a.seed;

  const auto ds = sig::build_dataset(cfg);
  binio::write_file_atomic(a.out, a.format == "csv" ? sig::dataset_to_csv(ds) : sig::encode_dataset(ds));

  std::vector<std::string> names;
  for (auto s : cfg.schemes) names.emplace_back(sig::scheme_name(s));
  man.config = {{"classes", names}, {"frames_per_class", a.frames_per_class}, {"snr_db", a.snr_db},
                {"extra_snr_db", extra}, {"sps", a.sps},         {"p", a.p},
                {"pulse", a.pulse},      {"seed", a.seed},       {"format", a.format}};
  man.seed = a.seed;
  man.outputs = {a.out};
  write_manifest(a.out, man);
  out << "wrote " << a.out << " (" << ds.train.frames.size() << " train + " << ds.test.frames.size()
      << " test frames)\n";
  return kExitOk;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, metrics, config;
  std::size_t epochs = 20;
  double lr = 0.02;
  std::size_t batch = 64;
  std::uint64_t seed = 1;
};

/// Clean (unattacked) accuracy on the test split with receiver noise drawn
/// from a seed-derived stream.
inline double clean_test_accuracy(const net::Model &m, const sig::Dataset &test, std::uint64_t seed) {
  const auto noisy = sig::with_receiver_noise(test.frames, derive_seed(seed, 0x7e57));
  return net::evaluate_accuracy(m, noisy);
}

inline int cmd_train(TrainArgs a, const CLI::App &sub, const std::vector<std::string> &argv, std::ostream &out) {
  Manifest man{"train", argv, {}, 0, utc_now(), {}};
  const json c = load_config(a.config);
  auto take = [&](const char *key, const char *flag, auto &var) {
    if (!sub.count(flag) && c.contains(key)) c.at(key).get_to(var);
  };
  take("data", "--data", a.data);
  take("epochs", "--epochs", a.epochs);
  take("lr", "--lr", a.lr);
  take("batch", "--batch", a.batch);
  take("seed", "--seed", a.seed);
  if (auto s = env_seed()) a.seed = *s;
  if (a.data.empty()) throw ConfigError("--data is required");
  if (a.out.empty()) throw ConfigError("--out is required");
  if (a.batch < 1) throw ConfigError("--batch must be >= 1");
  if (!(a.lr >= 0.0)) throw ConfigError("--lr must be >= 0");
  if (a.metrics.empty()) a.metrics = a.out + ".metrics.json";

  const auto ds = sig::load_dataset(a.data);
  net::ModelArch arch;
  arch.p = ds.train.frame_length();
  arch.classes = ds.train.num_classes();
  net::TrainConfig tc{a.epochs, a.batch, a.lr, a.seed};
  const auto rep = net::train(net::init_model(arch, a.seed), ds.train, tc);
  net::save_model(rep.model, a.out);

  const double acc = clean_test_accuracy(rep.model, ds.test, a.seed);
  const double final_loss = rep.epoch_loss.empty() ? 0.0 : rep.epoch_loss.back();
  const json metrics = {{"final_train_loss", final_loss},
                        {"epoch_loss", rep.epoch_loss},
                        {"clean_test_accuracy", acc},
                        {"test_frames", ds.test.frames.size()},
                        {"train_frames", ds.train.frames.size()}};
  binio::write_file_atomic(a.metrics, metrics.dump(2) + "\n");

  man.config = {{"data", a.data}, {"epochs", a.epochs}, {"lr", a.lr}, {"batch", a.batch}, {"seed", a.seed}};
  man.seed = a.seed;
  man.outputs = {a.out, a.metrics};
  write_manifest(a.out, man);
  out << "wrote " << a.out << " final_train_loss=" << final_loss << " clean_test_accuracy=" << acc << "\n";
  return kExitOk;
}

// ---- attack-eval -------------------------------------------------------------

inline json experiment_to_json(const eval::ExperimentConfig &e) {
  std::vector<std::string> kinds;
  for (auto k : e.attacks) kinds.emplace_back(attack::kind_name(k));
  const auto &ch = e.channel;
  return {{"model_path", e.model_path},
          {"dataset_path", e.dataset_path},
          {"attacks", kinds},
          {"antennas", e.antennas},
          {"pnr_db", e.pnr_db},
          {"rho", e.rho},
          {"rayleigh_var", e.rayleigh_var},
          {"trials", e.trials},
          {"seed", e.seed},
          {"snr_db", e.snr_db},
          {"eps_acc_rel", e.eps_acc_rel},
          {"anchor", eval::anchor_name(e.anchor)},
          {"tx_fading", e.tx_fading},
          {"channel",
           {{"K", ch.K}, {"d0", ch.d0}, {"d", ch.d}, {"gamma", ch.gamma}, {"shadow_sigma_db", ch.shadow_sigma_db}}}};
}

/// Fills fields present in j; absent fields keep their current values.
inline void experiment_from_json(const json &j, eval::ExperimentConfig &e) {
  auto take = [&](const char *key, auto &var) {
    if (j.contains(key)) j.at(key).get_to(var);
  };
  take("model_path", e.model_path);
  take("dataset_path", e.dataset_path);
  if (j.contains("attacks")) {
    e.attacks.clear();
    for (const auto &s : j.at("attacks").get<std::vector<std::string>>()) e.attacks.push_back(attack::parse_kind(s));
  }
  take("antennas", e.antennas);
  take("pnr_db", e.pnr_db);
  take("rho", e.rho);
  take("rayleigh_var", e.rayleigh_var);
  take("trials", e.trials);
  take("seed", e.seed);
  take("snr_db", e.snr_db);
  take("eps_acc_rel", e.eps_acc_rel);
  if (j.contains("anchor")) e.anchor = eval::parse_anchor(j.at("anchor").get<std::string>());
  take("tx_fading", e.tx_fading);
  take("jobs", e.jobs);
  if (j.contains("channel")) {
    const auto &c = j.at("channel");
    auto ctake = [&](const char *key, double &var) {
      if (c.contains(key)) c.at(key).get_to(var);
    };
    ctake("K", e.channel.K);
    ctake("d0", e.channel.d0);
    ctake("d", e.channel.d);
    ctake("gamma", e.channel.gamma);
    ctake("shadow_sigma_db", e.channel.shadow_sigma_db);
  }
}

struct AttackEvalArgs {
  std::string model, data, out, config, attacks, antennas, pnr, rho, var, anchor;
  std::size_t trials = 500;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  double snr_db = 10.0;
  double eps_acc = 1e-3;
  bool tx_fading = false;
};

/// Resolves config file + flags + environment into one ExperimentConfig.
inline eval::ExperimentConfig resolve_experiment(const AttackEvalArgs &a, const CLI::App &sub) {
  eval::ExperimentConfig e;
  experiment_from_json(load_config(a.config), e);
  if (sub.count("--model")) e.model_path = a.model;
  if (sub.count("--data")) e.dataset_path = a.data;
  if (sub.count("--attacks")) {
    e.attacks.clear();
    for (const auto &s : split_list(a.attacks)) e.attacks.push_back(attack::parse_kind(s));
  }
  if (sub.count("--antennas")) {
    e.antennas.clear();
    for (double v : parse_grid(a.antennas, "--antennas")) {
      if (!(v >= 1) || v != std::floor(v)) throw ConfigError("--antennas needs positive integers");
      e.antennas.push_back(static_cast<std::size_t>(v));
    }
  }
  if (sub.count("--pnr")) e.pnr_db = parse_grid(a.pnr, "--pnr");
  if (sub.count("--rho")) e.rho = parse_grid(a.rho, "--rho");
  if (sub.count("--var")) e.rayleigh_var = parse_grid(a.var, "--var");
  if (sub.count("--trials")) e.trials = a.trials;
  if (sub.count("--seed")) e.seed = a.seed;
  if (sub.count("--snr-db")) e.snr_db = a.snr_db;
  if (sub.count("--eps-acc")) e.eps_acc_rel = a.eps_acc;
  if (sub.count("--anchor")) e.anchor = eval::parse_anchor(a.anchor);
  if (sub.count("--tx-fading")) e.tx_fading = a.tx_fading;
  if (sub.count("--jobs")) e.jobs = a.jobs;
  if (auto s = env_seed()) e.seed = *s;
  if (e.model_path.empty()) throw ConfigError("--model is required");
  if (e.dataset_path.empty()) throw ConfigError("--data is required");
  if (e.jobs < 1) throw ConfigError("--jobs must be >= 1");
  e.validate();
  return e;
}

inline int cmd_attack_eval(const AttackEvalArgs &a, const CLI::App &sub, const std::vector<std::string> &argv,
                           std::ostream &out) {
  Manifest man{"attack-eval", argv, {}, 0, utc_now(), {}};
  if (a.out.empty()) throw ConfigError("--out is required");
  const auto e = resolve_experiment(a, sub);
  const auto model = net::load_model(e.model_path);
  const auto ds = sig::load_dataset(e.dataset_path);
  if (ds.test.frames.empty()) throw FormatError(e.dataset_path + " has no test frames");
  if (ds.test.num_classes() != model.arch.classes || ds.test.frame_length() != model.arch.p)
    throw ConfigError("model and dataset shapes disagree");
  const auto rows = eval::run_experiment(e, model, ds.test.frames);
  binio::write_file_atomic(a.out, eval::rows_to_csv(rows));

  man.config = experiment_to_json(e);
  man.seed = e.seed;
  man.outputs = {a.out};
  write_manifest(a.out, man);
  out << "wrote " << a.out << " (" << rows.size() << " rows)\n";
  return kExitOk;
}

// ---- plot ----------------------------------------------------------------

struct PlotArgs {
  std::string in, out, x = "pnr_db", y = "accuracy", series = "attack", title;
};

inline int cmd_plot(const PlotArgs &a, const std::vector<std::string> &argv, std::ostream &out) {
  Manifest man{"plot", argv, {}, 0, utc_now(), {}};
  if (a.in.empty() || a.out.empty()) throw ConfigError("--in and --out are required");
  plot::Options opt{a.x, a.y, split_list(a.series), a.title};
  if (opt.series.empty()) throw ConfigError("--series is empty");
  const auto rows = eval::rows_from_csv(binio::read_file(a.in));
  if (rows.empty()) throw FormatError(a.in + ": results CSV has no rows");
  binio::write_file_atomic(a.out, plot::render_svg(rows, opt));
  man.config = {{"in", a.in}, {"x", a.x}, {"y", a.y}, {"series", opt.series}, {"title", a.title}};
  man.outputs = {a.out};
  write_manifest(a.out, man);
  out << "wrote " << a.out << "\n";
  return kExitOk;
}

// ---- entry -----------------------------------------------------------------

inline int run(int argc, const char *const *argv, std::ostream &out = std::cout, std::ostream &err = std::cerr) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"RF adversarial perturbation simulator", "rfadvsim"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenDataArgs g;
  auto *gen = app.add_subcommand("gen-data", "Synthesize a labeled I/Q dataset");
  gen->add_option("--out", g.out, "Output dataset path");
  gen->add_option("--classes", g.classes, "Class count (first N schemes) or comma list of scheme names");
  gen->add_option("--frames-per-class", g.frames_per_class, "Frames per class, split between train and test");
  gen->add_option("--snr-db", g.snr_db, "Receiver SNR stored with each frame");
  gen->add_option("--extra-snr-db", g.extra_snr, "Additional SNRs to draw frames at (list or grid)");
  gen->add_option("--sps", g.sps, "Samples per symbol");
  gen->add_option("--p", g.p, "Samples per frame");
  gen->add_option("--pulse", g.pulse, "rect or rrc");
  gen->add_option("--seed", g.seed, "Base seed");
  gen->add_option("--format", g.format, "rfds (binary) or csv");
  gen->add_option("--config", g.config, "JSON config or manifest");

  TrainArgs t;
  auto *tr = app.add_subcommand("train", "Train the victim classifier");
  tr->add_option("--data", t.data, "Dataset file");
  tr->add_option("--out", t.out, "Output model path");
  tr->add_option("--epochs", t.epochs, "Training epochs");
  tr->add_option("--lr", t.lr, "SGD learning rate");
  tr->add_option("--batch", t.batch, "Minibatch size");
  tr->add_option("--seed", t.seed, "Base seed");
  tr->add_option("--metrics", t.metrics, "Metrics JSON path (default <out>.metrics.json)");
  tr->add_option("--config", t.config, "JSON config or manifest");

  AttackEvalArgs e;
  auto *ae = app.add_subcommand("attack-eval", "Run an attack sweep and write a results CSV");
  ae->add_option("--model", e.model, "Model file");
  ae->add_option("--data", e.data, "Dataset file (test split is used)");
  ae->add_option("--attacks", e.attacks, "Comma list of attack kinds");
  ae->add_option("--antennas", e.antennas, "Antenna counts (list or grid)");
  ae->add_option("--pnr", e.pnr, "PNR grid in dB, start:stop:step or list");
  ae->add_option("--rho", e.rho, "Cross-antenna correlations");
  ae->add_option("--var", e.var, "Rayleigh variances");
  ae->add_option("--trials", e.trials, "Trials per cell");
  ae->add_option("--seed", e.seed, "Base seed");
  ae->add_option("--snr-db", e.snr_db, "Receiver SNR");
  ae->add_option("--eps-acc", e.eps_acc, "Bisection accuracy relative to sqrt(P_max)");
  ae->add_option("--anchor", e.anchor, "Gradient anchor: received or clean");
  ae->add_flag("--tx-fading", e.tx_fading, "Rayleigh-fade the transmitter link");
  ae->add_option("--jobs", e.jobs, "Worker threads");
  ae->add_option("--out", e.out, "Output CSV path");
  ae->add_option("--config", e.config, "JSON config or manifest");

  PlotArgs pa;
  auto *pl = app.add_subcommand("plot", "Render a results CSV as SVG");
  pl->add_option("--in", pa.in, "Results CSV");
  pl->add_option("--out", pa.out, "Output SVG");
  pl->add_option("--x", pa.x, "x column");
  pl->add_option("--y", pa.y, "y column");
  pl->add_option("--series", pa.series, "Series key column(s), comma separated");
  pl->add_option("--title", pa.title, "Chart title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &ex) {
    if (ex.get_exit_code() == 0) {
      app.exit(ex, out, err);
      return kExitOk;
    }
    err << "rfadvsim: " << ex.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(g, *gen, args, out);
    if (tr->parsed()) return cmd_train(t, *tr, args, out);
    if (ae->parsed()) return cmd_attack_eval(e, *ae, args, out);
    if (pl->parsed()) return cmd_plot(pa, args, out);
  } catch (const ConfigError &ex) {
    err << "rfadvsim: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const json::parse_error &ex) {
    err << "rfadvsim: " << ex.what() << "\n";
    return kExitIo;
  } catch (const json::exception &ex) {
    err << "rfadvsim: config: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const FormatError &ex) {
    err << "rfadvsim: " << ex.what() << "\n";
    return kExitIo;
  } catch (const binio::IoError &ex) {
    err << "rfadvsim: " << ex.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error &ex) {
    err << "rfadvsim: " << ex.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

} // namespace rfadv::cli
