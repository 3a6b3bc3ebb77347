#pragma once

// Baseband frame synthesis: digital modulators, receiver noise, and the
// labeled dataset used to train and attack the classifier.

#include <array>
#include <cmath>
#include <cstdint>
#include <cctype>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rfadv/binio.hpp"
#include "rfadv/common.hpp"

namespace rfadv::sig {

enum class ModScheme : std::uint8_t { BPSK, QPSK, PSK8, QAM16, QAM64, PAM4, CPFSK, GFSK };

inline constexpr std::array kAllSchemes{ModScheme::BPSK,  ModScheme::QPSK, ModScheme::PSK8,  ModScheme::QAM16,
                                        ModScheme::QAM64, ModScheme::PAM4, ModScheme::CPFSK, ModScheme::GFSK};

enum class Pulse : std::uint8_t { Rect, RootRaisedCosine };

inline constexpr double kRrcRolloff = 0.35;
inline constexpr int kRrcSpanSymbols = 8;
inline constexpr double kFskIndex = 0.5;
inline constexpr double kGfskBT = 0.3;
inline constexpr int kGfskSpanSymbols = 4;

inline std::string_view scheme_name(ModScheme s) {
  switch (s) {
  case ModScheme::BPSK: return "BPSK";
  case ModScheme::QPSK: return "QPSK";
  case ModScheme::PSK8: return "8PSK";
  case ModScheme::QAM16: return "QAM16";
  case ModScheme::QAM64: return "QAM64";
  case ModScheme::PAM4: return "PAM4";
  case ModScheme::CPFSK: return "CPFSK";
  case ModScheme::GFSK: return "GFSK";
  }
  throw ConfigError("unsupported modulation scheme tag " + std::to_string(static_cast<int>(s)));
}

inline ModScheme parse_scheme(std::string_view name) {
  for (auto s : kAllSchemes) {
    auto n = scheme_name(s);
    if (n.size() == name.size() &&
        std::equal(n.begin(), n.end(), name.begin(), [](char a, char b) { return std::toupper(a) == std::toupper(b); }))
      return s;
  }
  throw ConfigError("unknown modulation scheme '" + std::string(name) + "'");
}

inline bool is_linear(ModScheme s) { return s != ModScheme::CPFSK && s != ModScheme::GFSK; }

inline int bits_per_symbol(ModScheme s) {
  switch (s) {
  case ModScheme::BPSK: return 1;
  case ModScheme::QPSK: return 2;
  case ModScheme::PSK8: return 3;
  case ModScheme::QAM16: return 4;
  case ModScheme::QAM64: return 6;
  case ModScheme::PAM4: return 2;
  case ModScheme::CPFSK: return 1;
  case ModScheme::GFSK: return 1;
  }
  throw ConfigError("unsupported modulation scheme tag " + std::to_string(static_cast<int>(s)));
}

namespace detail {

inline unsigned take_bits(std::span<const std::uint8_t> bits, std::size_t &pos, int n) {
  unsigned v = 0;
  for (int i = 0; i < n; ++i) v = (v << 1) | (bits[pos++] & 1u);
  return v;
}

inline unsigned gray_to_binary(unsigned g) {
  unsigned b = g;
  while (g >>= 1) b ^= g;
  return b;
}

// Gray-coded PAM level in {-(L-1), ..., L-1} for an nbits-wide field.
inline double gray_pam(unsigned g, int nbits) {
  const unsigned b = gray_to_binary(g);
  const int levels = 1 << nbits;
  return 2.0 * static_cast<double>(b) - (levels - 1);
}

inline int pad_symbols(ModScheme s, Pulse pulse) {
  if (s == ModScheme::GFSK) return kGfskSpanSymbols / 2;
  if (is_linear(s) && pulse == Pulse::RootRaisedCosine) return kRrcSpanSymbols / 2;
  return 0;
}

inline std::vector<double> rrc_taps(int sps) {
  const int half = kRrcSpanSymbols * sps / 2;
  const double beta = kRrcRolloff;
  std::vector<double> taps(2 * half + 1);
  double e = 0.0;
  for (int n = -half; n <= half; ++n) {
    const double t = static_cast<double>(n) / sps;
    double v;
    if (n == 0) {
      v = 1.0 - beta + 4.0 * beta / std::numbers::pi;
    } else if (std::abs(std::abs(4.0 * beta * t) - 1.0) < 1e-12) {
      v = beta / std::sqrt(2.0) *
          ((1 + 2 / std::numbers::pi) * std::sin(std::numbers::pi / (4 * beta)) +
           (1 - 2 / std::numbers::pi) * std::cos(std::numbers::pi / (4 * beta)));
    } else {
      const double pt = std::numbers::pi * t;
      v = (std::sin(pt * (1 - beta)) + 4 * beta * t * std::cos(pt * (1 + beta))) /
          (pt * (1 - (4 * beta * t) * (4 * beta * t)));
    }
    taps[n + half] = v;
    e += v * v;
  }
  // Unit-energy symbols through this filter give unit mean sample power.
  const double k = std::sqrt(sps / e);
  for (auto &v : taps) v *= k;
  return taps;
}

inline std::vector<double> gaussian_taps(int sps) {
  const int half = kGfskSpanSymbols * sps / 2;
  const double sigma = std::sqrt(std::log(2.0)) / (2.0 * std::numbers::pi * kGfskBT) * sps;
  std::vector<double> taps(2 * half + 1);
  double sum = 0.0;
  for (int n = -half; n <= half; ++n) {
    taps[n + half] = std::exp(-0.5 * (n / sigma) * (n / sigma));
    sum += taps[n + half];
  }
  for (auto &v : taps) v /= sum;
  return taps;
}

inline cplx map_symbol(ModScheme s, unsigned v) {
  using std::numbers::sqrt2;
  switch (s) {
  case ModScheme::BPSK: return {v ? -1.0 : 1.0, 0.0};
  case ModScheme::QPSK: return cplx((v & 2) ? -1.0 : 1.0, (v & 1) ? -1.0 : 1.0) / sqrt2;
  case ModScheme::PSK8: {
    const double ang = 2.0 * std::numbers::pi * gray_to_binary(v) / 8.0;
    return std::polar(1.0, ang);
  }
  case ModScheme::QAM16: return cplx(gray_pam(v >> 2, 2), gray_pam(v & 3, 2)) / std::sqrt(10.0);
  case ModScheme::QAM64: return cplx(gray_pam(v >> 3, 3), gray_pam(v & 7, 3)) / std::sqrt(42.0);
  case ModScheme::PAM4: return {gray_pam(v, 2) / std::sqrt(5.0), 0.0};
  default: break;
  }
  throw ConfigError("scheme has no symbol constellation");
}

} // namespace detail

/// Number of symbols modulate() consumes for a p-sample frame, including
/// filter run-in and run-out.
inline std::size_t symbols_needed(ModScheme s, int sps, std::size_t p, Pulse pulse = Pulse::Rect) {
  const std::size_t body = (p + static_cast<std::size_t>(sps) - 1) / static_cast<std::size_t>(sps);
  return body + 2 * static_cast<std::size_t>(detail::pad_symbols(s, pulse));
}

inline std::size_t bits_needed(ModScheme s, int sps, std::size_t p, Pulse pulse = Pulse::Rect) {
  return symbols_needed(s, sps, p, pulse) * static_cast<std::size_t>(bits_per_symbol(s));
}

/// Full constellation for the linear schemes, indexed by symbol value.
inline std::vector<cplx> constellation(ModScheme s) {
  if (!is_linear(s)) throw ConfigError("scheme has no symbol constellation");
  std::vector<cplx> pts(std::size_t{1} << bits_per_symbol(s));
  for (unsigned v = 0; v < pts.size(); ++v) pts[v] = detail::map_symbol(s, v);
  return pts;
}

/// Maps bits to p baseband samples at sps samples per symbol. Pure: the same
/// bits always give the same frame. Bits past bits_needed() are ignored.
inline CVec modulate(std::span<const std::uint8_t> bits, ModScheme scheme, int sps, std::size_t p,
                     Pulse pulse = Pulse::Rect) {
  (void)scheme_name(scheme); // rejects out-of-range tags
  if (sps < 1) throw ConfigError("samples per symbol must be >= 1");
  const std::size_t nsym = symbols_needed(scheme, sps, p, pulse);
  if (bits.size() < nsym * static_cast<std::size_t>(bits_per_symbol(scheme)))
    throw ContractError("not enough bits to fill the frame");

  const int pad = detail::pad_symbols(scheme, pulse);
  const std::size_t offset = static_cast<std::size_t>(pad) * static_cast<std::size_t>(sps);
  CVec out(p);
  std::size_t pos = 0;

  if (is_linear(scheme)) {
    std::vector<cplx> syms(nsym);
    for (auto &z : syms) z = detail::map_symbol(scheme, detail::take_bits(bits, pos, bits_per_symbol(scheme)));
    if (pulse == Pulse::Rect) {
      for (std::size_t t = 0; t < p; ++t) out[t] = syms[t / static_cast<std::size_t>(sps)];
      return out;
    }
    const auto taps = detail::rrc_taps(sps);
    const long half = static_cast<long>(taps.size() / 2);
    for (std::size_t t = 0; t < p; ++t) {
      const long n = static_cast<long>(t + offset);
      cplx acc{};
      for (std::size_t k = 0; k < nsym; ++k) {
        const long j = n - static_cast<long>(k) * sps + half;
        if (j >= 0 && j < static_cast<long>(taps.size())) acc += syms[k] * taps[static_cast<std::size_t>(j)];
      }
      out[t] = acc;
    }
    return out;
  }

  // Binary continuous-phase FSK; GFSK smooths the NRZ frequency pulse first.
  const std::size_t total = nsym * static_cast<std::size_t>(sps);
  std::vector<double> freq(total);
  for (std::size_t k = 0; k < nsym; ++k) {
    const double a = detail::take_bits(bits, pos, 1) ? -1.0 : 1.0;
    for (int i = 0; i < sps; ++i) freq[k * static_cast<std::size_t>(sps) + static_cast<std::size_t>(i)] = a;
  }
  if (scheme == ModScheme::GFSK) {
    const auto taps = detail::gaussian_taps(sps);
    const long half = static_cast<long>(taps.size() / 2);
    std::vector<double> smooth(total, 0.0);
    for (long n = 0; n < static_cast<long>(total); ++n) {
      double acc = 0.0;
      for (long j = -half; j <= half; ++j) {
        const long m = std::clamp(n - j, 0L, static_cast<long>(total) - 1);
        acc += taps[static_cast<std::size_t>(j + half)] * freq[static_cast<std::size_t>(m)];
      }
      smooth[static_cast<std::size_t>(n)] = acc;
    }
    freq.swap(smooth);
  }
  double phase = 0.0;
  const double step = std::numbers::pi * kFskIndex / sps;
  for (std::size_t n = 0; n < offset + p; ++n) {
    phase += step * freq[n];
    if (n >= offset) out[n - offset] = std::polar(1.0, phase);
  }
  return out;
}

inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

/// Per-sample complex noise power for a unit-power signal at snr_db.
inline double noise_variance(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::pow(10.0, -snr_db / 10.0);
}

/// x + n with n circular complex Gaussian, E|n|^2 = 10^(-snr_db/10).
/// snr_db = +inf returns x unchanged without consuming the stream.
inline CVec add_awgn(const CVec &x, double snr_db, Rng &rng) {
  const double var = noise_variance(snr_db);
  CVec out = x;
  if (var == 0.0) return out;
  for (auto &z : out) z += rng.complex_normal(var);
  return out;
}

struct Frame {
  CVec iq;
  std::uint16_t label = 0;
  double snr_db = 10.0;
};

enum class Split : std::uint8_t { Train, Test };

struct Dataset {
  std::vector<Frame> frames;
  std::vector<std::string> class_names;
  Split split = Split::Train;

  std::size_t num_classes() const { return class_names.size(); }
  std::size_t frame_length() const { return frames.empty() ? 0 : frames.front().iq.size(); }
  bool empty() const { return frames.empty(); }
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

struct DatasetConfig {
  std::vector<ModScheme> schemes{kAllSchemes.begin(), kAllSchemes.end()};
  int frames_per_class = 2000;
  double snr_db = 10.0;
  /// Extra SNRs to draw frames at uniformly; empty = single-SNR dataset.
  std::vector<double> extra_snr_db;
  int sps = 8;
  std::size_t p = 128;
  Pulse pulse = Pulse::Rect;
  std::uint64_t seed = 1;
};

/// One frame drawn from its own (seed, class, index) stream. Stored frames
/// are the clean transmitted waveform; receiver noise at frame.snr_db is
/// added by whoever consumes the frame.
inline Frame make_frame(const DatasetConfig &cfg, std::size_t cls, std::size_t idx) {
  Rng rng(derive_seed(cfg.seed, 0x5167, cls, idx));
  const auto scheme = cfg.schemes[cls];
  std::vector<std::uint8_t> bits(bits_needed(scheme, cfg.sps, cfg.p, cfg.pulse));
  for (auto &b : bits) b = static_cast<std::uint8_t>(rng.bit());
  Frame f;
  f.iq = modulate(bits, scheme, cfg.sps, cfg.p, cfg.pulse);
  f.label = static_cast<std::uint16_t>(cls);
  f.snr_db = cfg.snr_db;
  if (!cfg.extra_snr_db.empty()) {
    const auto pick = rng.next() % (cfg.extra_snr_db.size() + 1);
    if (pick > 0) f.snr_db = cfg.extra_snr_db[pick - 1];
  }
  return f;
}

/// Number of frames per class that land in the training split.
inline std::size_t train_share(std::size_t frames_per_class) { return frames_per_class - frames_per_class / 2; }

inline DatasetPair build_dataset(const DatasetConfig &cfg) {
  if (cfg.frames_per_class < 1) throw ConfigError("frames-per-class must be >= 1");
  if (cfg.schemes.empty()) throw ConfigError("dataset needs at least one scheme");
  if (cfg.sps < 1) throw ConfigError("sps must be >= 1");
  if (cfg.p < 1) throw ConfigError("frame length must be >= 1");

  DatasetPair out;
  out.train.split = Split::Train;
  out.test.split = Split::Test;
  for (auto s : cfg.schemes) {
    out.train.class_names.emplace_back(scheme_name(s));
    out.test.class_names.emplace_back(scheme_name(s));
  }
  const auto n = static_cast<std::size_t>(cfg.frames_per_class);
  const auto ntrain = train_share(n);
  for (std::size_t c = 0; c < cfg.schemes.size(); ++c)
    for (std::size_t i = 0; i < n; ++i) (i < ntrain ? out.train : out.test).frames.push_back(make_frame(cfg, c, i));

  Rng shuffle_train(derive_seed(cfg.seed, 0x5348, 0));
  Rng shuffle_test(derive_seed(cfg.seed, 0x5348, 1));
  std::shuffle(out.train.frames.begin(), out.train.frames.end(), shuffle_train.engine());
  std::shuffle(out.test.frames.begin(), out.test.frames.end(), shuffle_test.engine());
  return out;
}

/// A copy of the frames with receiver noise drawn from per-frame streams
/// derive_seed(seed, index).
inline std::vector<Frame> with_receiver_noise(std::span<const Frame> frames, std::uint64_t seed) {
  std::vector<Frame> out(frames.begin(), frames.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    out[i].iq = add_awgn(out[i].iq, out[i].snr_db, rng);
  }
  return out;
}

// ---- dataset container ---------------------------------------------------
//
// 16-byte header: "RFDS", version u16, p u16, C u16, frame count u32,
// reserved u16 (zero). Then per frame: label u16, snr_db f32, p interleaved
// f32 I/Q pairs. All little-endian. The training split is written first;
// with n = count / C frames per class the first C * train_share(n) frames are
// the training split.

inline constexpr std::uint16_t kDatasetVersion = 1;

inline std::string encode_dataset(const DatasetPair &ds) {
  const std::size_t c = ds.train.num_classes();
  const std::size_t p = ds.train.empty() ? ds.test.frame_length() : ds.train.frame_length();
  const std::size_t count = ds.train.frames.size() + ds.test.frames.size();
  if (c == 0 || c > 0xFFFF || p > 0xFFFF || count > 0xFFFFFFFFu) throw ConfigError("dataset too large for container");

  binio::Writer w;
  w.bytes("RFDS");
  w.u16(kDatasetVersion);
  w.u16(static_cast<std::uint16_t>(p));
  w.u16(static_cast<std::uint16_t>(c));
  w.u32(static_cast<std::uint32_t>(count));
  w.u16(0);
  for (const auto *split : {&ds.train, &ds.test}) {
    for (const auto &f : split->frames) {
      require(f.iq.size() == p, "frame length differs from dataset p");
      w.u16(f.label);
      w.f32(static_cast<float>(f.snr_db));
      for (const auto &z : f.iq) {
        w.f32(static_cast<float>(z.real()));
        w.f32(static_cast<float>(z.imag()));
      }
    }
  }
  return w.data();
}

inline std::vector<std::string> default_class_names(std::size_t c) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < c; ++i)
    names.push_back(i < kAllSchemes.size() ? std::string(scheme_name(kAllSchemes[i])) : "class" + std::to_string(i));
  return names;
}

inline DatasetPair decode_dataset(std::string_view data) {
  binio::Reader r(data);
  if (r.bytes(4) != "RFDS") throw FormatError("not a dataset file (bad magic)");
  if (r.u16() != kDatasetVersion) throw FormatError("unsupported dataset version");
  const std::size_t p = r.u16();
  const std::size_t c = r.u16();
  const std::size_t count = r.u32();
  r.u16();
  if (c == 0) throw FormatError("dataset declares zero classes");
  if (count % c != 0) throw FormatError("frame count is not a multiple of the class count");
  if (r.remaining() != count * (6 + 8 * p)) throw FormatError("dataset body size does not match header");

  DatasetPair ds;
  ds.train.split = Split::Train;
  ds.test.split = Split::Test;
  ds.train.class_names = ds.test.class_names = default_class_names(c);
  const std::size_t ntrain = c * train_share(count / c);
  for (std::size_t i = 0; i < count; ++i) {
    Frame f;
    f.label = r.u16();
    if (f.label >= c) throw FormatError("frame label out of range");
    f.snr_db = r.f32();
    f.iq.resize(p);
    for (auto &z : f.iq) {
      const double re = r.f32();
      const double im = r.f32();
      z = {re, im};
    }
    (i < ntrain ? ds.train : ds.test).frames.push_back(std::move(f));
  }
  return ds;
}

inline void save_dataset(const DatasetPair &ds, const std::filesystem::path &path) {
  binio::write_file_atomic(path, encode_dataset(ds));
}

inline DatasetPair load_dataset(const std::filesystem::path &path) { return decode_dataset(binio::read_file(path)); }

/// One frame per row: split,label,snr_db,i0,q0,i1,q1,...
inline std::string dataset_to_csv(const DatasetPair &ds) {
  std::ostringstream os;
  os.precision(9);
  const std::size_t p = ds.train.empty() ? ds.test.frame_length() : ds.train.frame_length();
  os << "split,label,snr_db";
  for (std::size_t t = 0; t < p; ++t) os << ",i" << t << ",q" << t;
  os << '\n';
  for (const auto *split : {&ds.train, &ds.test}) {
    const char *name = split->split == Split::Train ? "train" : "test";
    for (const auto &f : split->frames) {
      os << name << ',' << f.label << ',' << static_cast<float>(f.snr_db);
      for (const auto &z : f.iq) os << ',' << static_cast<float>(z.real()) << ',' << static_cast<float>(z.imag());
      os << '\n';
    }
  }
  return os.str();
}

} // namespace rfadv::sig
