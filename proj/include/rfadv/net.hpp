#pragma once

// Convolutional modulation classifier: two conv layers and two dense layers
// over a 2 x p (I row, Q row) input, with exact backprop to both the
// parameters and the complex input frame.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rfadv/binio.hpp"
#include "rfadv/common.hpp"
#include "rfadv/sig.hpp"

namespace rfadv::net {

enum class Activation : std::uint32_t { ReLU = 0, Identity = 1 };

/// Compute precision. Parameters are always stored as f32; F64 evaluates the
/// same parameters in double for gradient verification.
enum class Precision { F32, F64 };

struct ModelArch {
  std::size_t p = 128;
  std::size_t conv1_filters = 32;
  std::size_t conv1_kernel = 3; // 1 x k over each of the I and Q rows
  std::size_t conv2_filters = 16;
  std::size_t conv2_kernel = 3; // 2 x k, collapses the I/Q rows
  std::size_t dense = 64;
  std::size_t classes = 8;
  Activation activation = Activation::ReLU;

  /// The original VT-CNN2 widths (256/80 filters, 256 dense units).
  static ModelArch vtcnn2(std::size_t classes = 8) {
    ModelArch a;
    a.conv1_filters = 256;
    a.conv2_filters = 80;
    a.dense = 256;
    a.classes = classes;
    return a;
  }

  void validate() const {
    if (p == 0 || conv1_filters == 0 || conv1_kernel == 0 || conv2_filters == 0 || conv2_kernel == 0 || dense == 0 ||
        classes == 0)
      throw ConfigError("model dimensions must all be >= 1");
  }

  bool operator==(const ModelArch &) const = default;
};

/// Offsets of each parameter block inside the flat parameter vector. Dense
/// weights are stored input-major ([in][out]).
struct Layout {
  std::size_t c1w, c1b, c2w, c2b, d1w, d1b, d2w, d2b, total;

  explicit Layout(const ModelArch &a) {
    std::size_t o = 0;
    c1w = o, o += a.conv1_filters * a.conv1_kernel;
    c1b = o, o += a.conv1_filters;
    c2w = o, o += a.conv2_filters * a.conv1_filters * 2 * a.conv2_kernel;
    c2b = o, o += a.conv2_filters;
    d1w = o, o += a.conv2_filters * a.p * a.dense;
    d1b = o, o += a.dense;
    d2w = o, o += a.dense * a.classes;
    d2b = o, o += a.classes;
    total = o;
  }
};

inline std::size_t parameter_count(const ModelArch &a) { return Layout(a).total; }

struct Model {
  ModelArch arch;
  std::vector<float> theta;
  std::uint32_t epochs = 0;
  float final_loss = 0.0f;

  bool operator==(const Model &) const = default;
};

/// Fan-in scaled uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
inline Model init_model(const ModelArch &arch, std::uint64_t seed) {
  arch.validate();
  Model m;
  m.arch = arch;
  const Layout L(arch);
  m.theta.assign(L.total, 0.0f);
  Rng rng(seed);
  auto fill = [&](std::size_t off, std::size_t n, std::size_t fan_in) {
    const double lim = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < n; ++i) m.theta[off + i] = static_cast<float>(rng.uniform(-lim, lim));
  };
  fill(L.c1w, L.c1b - L.c1w, arch.conv1_kernel);
  fill(L.c2w, L.c2b - L.c2w, arch.conv1_filters * 2 * arch.conv2_kernel);
  fill(L.d1w, L.d1b - L.d1w, arch.conv2_filters * arch.p);
  fill(L.d2w, L.d2b - L.d2w, arch.dense);
  return m;
}

namespace detail {

// Activations for one forward pass; kept for backprop.
template <typename Real> struct Trace {
  std::vector<Real> x;  // [2][p]
  std::vector<Real> a1; // [F1][2][p]
  std::vector<Real> a2; // [F2][p]
  std::vector<Real> a3; // [D]
  std::vector<Real> logits;
};

template <typename Real> inline Real act(Real v, Activation a) {
  return a == Activation::ReLU ? std::max(v, Real(0)) : v;
}

template <typename Real> inline Real act_grad(Real out, Activation a) {
  return a == Activation::ReLU ? (out > Real(0) ? Real(1) : Real(0)) : Real(1);
}

template <typename Real> class Engine {
public:
  Engine(const ModelArch &arch, const Real *theta) : a_(arch), L_(arch), w_(theta) {}

  void forward(const CVec &iq, Trace<Real> &tr) const {
    require(iq.size() == a_.p, "frame length does not match model input");
    const std::size_t p = a_.p, F1 = a_.conv1_filters, k1 = a_.conv1_kernel, F2 = a_.conv2_filters,
                      k2 = a_.conv2_kernel, D = a_.dense, C = a_.classes;
    tr.x.resize(2 * p);
    for (std::size_t t = 0; t < p; ++t) {
      tr.x[t] = static_cast<Real>(iq[t].real());
      tr.x[p + t] = static_cast<Real>(iq[t].imag());
    }

    tr.a1.assign(F1 * 2 * p, Real(0));
    const long pad1 = static_cast<long>((k1 - 1) / 2);
    for (std::size_t f = 0; f < F1; ++f) {
      for (std::size_t row = 0; row < 2; ++row) {
        Real *out = &tr.a1[(f * 2 + row) * p];
        const Real *in = &tr.x[row * p];
        std::fill(out, out + p, w_[L_.c1b + f]);
        for (std::size_t k = 0; k < k1; ++k) {
          const Real w = w_[L_.c1w + f * k1 + k];
          const long sh = static_cast<long>(k) - pad1;
          const auto [lo, hi] = valid_range(sh, p);
          for (std::size_t t = lo; t < hi; ++t) out[t] += w * in[static_cast<long>(t) + sh];
        }
        for (std::size_t t = 0; t < p; ++t) out[t] = act(out[t], a_.activation);
      }
    }

    tr.a2.assign(F2 * p, Real(0));
    const long pad2 = static_cast<long>((k2 - 1) / 2);
    for (std::size_t g = 0; g < F2; ++g) {
      Real *out = &tr.a2[g * p];
      std::fill(out, out + p, w_[L_.c2b + g]);
      for (std::size_t f = 0; f < F1; ++f) {
        for (std::size_t row = 0; row < 2; ++row) {
          const Real *in = &tr.a1[(f * 2 + row) * p];
          for (std::size_t k = 0; k < k2; ++k) {
            const Real w = w_[L_.c2w + ((g * F1 + f) * 2 + row) * k2 + k];
            const long sh = static_cast<long>(k) - pad2;
            const auto [lo, hi] = valid_range(sh, p);
            for (std::size_t t = lo; t < hi; ++t) out[t] += w * in[static_cast<long>(t) + sh];
          }
        }
      }
      for (std::size_t t = 0; t < p; ++t) out[t] = act(out[t], a_.activation);
    }

    tr.a3.assign(w_ + L_.d1b, w_ + L_.d1b + D);
    const std::size_t n_in = F2 * p;
    for (std::size_t j = 0; j < n_in; ++j) {
      const Real v = tr.a2[j];
      if (v == Real(0)) continue;
      const Real *row = w_ + L_.d1w + j * D;
      for (std::size_t d = 0; d < D; ++d) tr.a3[d] += v * row[d];
    }
    for (auto &v : tr.a3) v = act(v, a_.activation);

    tr.logits.assign(w_ + L_.d2b, w_ + L_.d2b + C);
    for (std::size_t d = 0; d < D; ++d) {
      const Real v = tr.a3[d];
      const Real *row = w_ + L_.d2w + d * C;
      for (std::size_t c = 0; c < C; ++c) tr.logits[c] += v * row[c];
    }
  }

  /// Backprop dL/dlogits. Accumulates parameter gradients into grad (if
  /// non-null) and writes the input gradient [2][p] into dx (if non-null).
  void backward(const Trace<Real> &tr, std::span<const Real> dlogits, Real *grad, std::vector<Real> *dx) const {
    const std::size_t p = a_.p, F1 = a_.conv1_filters, k1 = a_.conv1_kernel, F2 = a_.conv2_filters,
                      k2 = a_.conv2_kernel, D = a_.dense, C = a_.classes;

    std::vector<Real> dz3(D, Real(0));
    for (std::size_t d = 0; d < D; ++d) {
      const Real *row = w_ + L_.d2w + d * C;
      Real s = 0;
      for (std::size_t c = 0; c < C; ++c) s += row[c] * dlogits[c];
      dz3[d] = s * act_grad(tr.a3[d], a_.activation);
    }
    if (grad) {
      for (std::size_t d = 0; d < D; ++d)
        for (std::size_t c = 0; c < C; ++c) grad[L_.d2w + d * C + c] += tr.a3[d] * dlogits[c];
      for (std::size_t c = 0; c < C; ++c) grad[L_.d2b + c] += dlogits[c];
      for (std::size_t d = 0; d < D; ++d) grad[L_.d1b + d] += dz3[d];
    }

    const std::size_t n_in = F2 * p;
    std::vector<Real> dz2(n_in, Real(0));
    for (std::size_t j = 0; j < n_in; ++j) {
      const Real a = tr.a2[j];
      if (grad && a != Real(0)) {
        Real *g = grad + L_.d1w + j * D;
        for (std::size_t d = 0; d < D; ++d) g[d] += a * dz3[d];
      }
      const Real gate = act_grad(a, a_.activation);
      if (gate == Real(0)) continue;
      const Real *row = w_ + L_.d1w + j * D;
      Real s = 0;
      for (std::size_t d = 0; d < D; ++d) s += row[d] * dz3[d];
      dz2[j] = s * gate;
    }

    std::vector<Real> da1(F1 * 2 * p, Real(0));
    const long pad2 = static_cast<long>((k2 - 1) / 2);
    for (std::size_t g = 0; g < F2; ++g) {
      const Real *dout = &dz2[g * p];
      if (grad) {
        Real s = 0;
        for (std::size_t t = 0; t < p; ++t) s += dout[t];
        grad[L_.c2b + g] += s;
      }
      for (std::size_t f = 0; f < F1; ++f) {
        for (std::size_t row = 0; row < 2; ++row) {
          const Real *in = &tr.a1[(f * 2 + row) * p];
          Real *din = &da1[(f * 2 + row) * p];
          for (std::size_t k = 0; k < k2; ++k) {
            const std::size_t wi = L_.c2w + ((g * F1 + f) * 2 + row) * k2 + k;
            const Real w = w_[wi];
            const long sh = static_cast<long>(k) - pad2;
            const auto [lo, hi] = valid_range(sh, p);
            Real s = 0;
            for (std::size_t t = lo; t < hi; ++t) {
              s += dout[t] * in[static_cast<long>(t) + sh];
              din[static_cast<long>(t) + sh] += w * dout[t];
            }
            if (grad) grad[wi] += s;
          }
        }
      }
    }

    if (dx) dx->assign(2 * p, Real(0));
    const long pad1 = static_cast<long>((k1 - 1) / 2);
    std::vector<Real> dz1(p);
    for (std::size_t f = 0; f < F1; ++f) {
      for (std::size_t row = 0; row < 2; ++row) {
        const Real *out = &tr.a1[(f * 2 + row) * p];
        const Real *dout = &da1[(f * 2 + row) * p];
        const Real *in = &tr.x[row * p];
        Real bsum = 0;
        for (std::size_t t = 0; t < p; ++t) {
          dz1[t] = dout[t] * act_grad(out[t], a_.activation);
          bsum += dz1[t];
        }
        if (grad) grad[L_.c1b + f] += bsum;
        for (std::size_t k = 0; k < k1; ++k) {
          const std::size_t wi = L_.c1w + f * k1 + k;
          const long sh = static_cast<long>(k) - pad1;
          const auto [lo, hi] = valid_range(sh, p);
          if (grad) {
            Real s = 0;
            for (std::size_t t = lo; t < hi; ++t) s += dz1[t] * in[static_cast<long>(t) + sh];
            grad[wi] += s;
          }
          if (dx) {
            Real *dxr = dx->data() + row * p;
            const Real w = w_[wi];
            for (std::size_t t = lo; t < hi; ++t) dxr[static_cast<long>(t) + sh] += w * dz1[t];
          }
        }
      }
    }
  }

private:
  // Output positions t for which t + shift lies inside [0, p).
  static std::pair<std::size_t, std::size_t> valid_range(long shift, std::size_t p) {
    const long lo = std::max(0L, -shift);
    const long hi = std::min(static_cast<long>(p), static_cast<long>(p) - shift);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
  }

  ModelArch a_;
  Layout L_;
  const Real *w_;
};

template <typename Real> inline std::vector<Real> softmax(std::span<const Real> logits) {
  const Real mx = *std::max_element(logits.begin(), logits.end());
  std::vector<Real> out(logits.size());
  Real sum = 0;
  for (std::size_t c = 0; c < logits.size(); ++c) sum += (out[c] = std::exp(logits[c] - mx));
  for (auto &v : out) v /= sum;
  return out;
}

inline std::vector<double> theta_f64(const Model &m) { return {m.theta.begin(), m.theta.end()}; }

} // namespace detail

struct Output {
  std::vector<double> logits;
  std::vector<double> probs;

  /// Predicted class; ties go to the lowest index.
  std::size_t label() const {
    return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
};

inline Output forward(const Model &model, const CVec &iq, Precision prec = Precision::F32) {
  Output o;
  auto run = [&](auto &engine, auto &trace) {
    engine.forward(iq, trace);
    using Real = typename std::decay_t<decltype(trace.logits)>::value_type;
    const auto probs = detail::softmax<Real>(trace.logits);
    o.logits.assign(trace.logits.begin(), trace.logits.end());
    o.probs.assign(probs.begin(), probs.end());
  };
  if (prec == Precision::F32) {
    detail::Engine<float> e(model.arch, model.theta.data());
    detail::Trace<float> tr;
    run(e, tr);
  } else {
    const auto th = detail::theta_f64(model);
    detail::Engine<double> e(model.arch, th.data());
    detail::Trace<double> tr;
    run(e, tr);
  }
  return o;
}

/// argmax of the f32 logits, the classifier decision used by every attack.
inline std::size_t classify(const Model &model, const CVec &iq) { return forward(model, iq).label(); }

struct LossGrad {
  double loss = 0.0;
  CVec grad; // dL/dI_t + j dL/dQ_t
};

/// Cross-entropy against the one-hot `target` and its exact gradient with
/// respect to the complex input.
inline LossGrad loss_and_input_gradient(const Model &model, const CVec &iq, std::size_t target,
                                        Precision prec = Precision::F32) {
  require(target < model.arch.classes, "target class out of range");
  LossGrad out;
  auto run = [&]<typename Real>(const Real *theta) {
    detail::Engine<Real> e(model.arch, theta);
    detail::Trace<Real> tr;
    e.forward(iq, tr);
    const Real mx = *std::max_element(tr.logits.begin(), tr.logits.end());
    Real sum = 0;
    for (auto v : tr.logits) sum += std::exp(v - mx);
    out.loss = static_cast<double>(mx + std::log(sum) - tr.logits[target]);
    auto dl = detail::softmax<Real>(tr.logits);
    dl[target] -= Real(1);
    std::vector<Real> dx;
    e.backward(tr, dl, nullptr, &dx);
    const std::size_t p = model.arch.p;
    out.grad.resize(p);
    for (std::size_t t = 0; t < p; ++t) out.grad[t] = {static_cast<double>(dx[t]), static_cast<double>(dx[p + t])};
  };
  if (prec == Precision::F32) {
    run(model.theta.data());
  } else {
    const auto th = detail::theta_f64(model);
    run(th.data());
  }
  return out;
}

/// Plain cross-entropy loss (no gradient); used by finite-difference checks.
inline double loss(const Model &model, const CVec &iq, std::size_t target, Precision prec = Precision::F32) {
  const auto o = forward(model, iq, prec);
  const double mx = *std::max_element(o.logits.begin(), o.logits.end());
  double s = 0;
  for (auto v : o.logits) s += std::exp(v - mx);
  return mx + std::log(s) - o.logits[target];
}

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch = 64;
  double lr = 0.02;
  std::uint64_t seed = 1;
};

struct TrainReport {
  Model model;
  std::vector<double> epoch_loss; // mean minibatch loss per epoch
};

/// Minibatch SGD on cross-entropy. Every epoch reshuffles and draws fresh
/// receiver noise at each frame's snr_db, both from streams derived from
/// the seed, so the result is a pure function of (model, dataset, cfg).
inline TrainReport train(const Model &start, const sig::Dataset &data, const TrainConfig &cfg) {
  if (data.empty()) throw ConfigError("cannot train on an empty dataset");
  if (cfg.batch == 0) throw ConfigError("batch size must be >= 1");
  if (data.split != sig::Split::Train) throw ConfigError("training requires the train split");
  if (data.num_classes() != start.arch.classes) throw ConfigError("dataset class count does not match model output");
  require(data.frame_length() == start.arch.p, "dataset frame length does not match model input");

  TrainReport rep;
  rep.model = start;
  Model &m = rep.model;
  const Layout L(m.arch);
  std::vector<float> grad(L.total);
  std::vector<std::size_t> order(data.frames.size());
  detail::Trace<float> tr;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle(derive_seed(cfg.seed, 0x7e, epoch));
    std::shuffle(order.begin(), order.end(), shuffle.engine());

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start_i = 0; start_i < order.size(); start_i += cfg.batch) {
      const std::size_t end_i = std::min(order.size(), start_i + cfg.batch);
      std::fill(grad.begin(), grad.end(), 0.0f);
      detail::Engine<float> e(m.arch, m.theta.data());
      double batch_loss = 0.0;
      for (std::size_t b = start_i; b < end_i; ++b) {
        const auto &f = data.frames[order[b]];
        Rng noise(derive_seed(cfg.seed, 0x4e, epoch, order[b]));
        const CVec x = sig::add_awgn(f.iq, f.snr_db, noise);
        e.forward(x, tr);
        auto dl = detail::softmax<float>(tr.logits);
        batch_loss += -std::log(std::max(static_cast<double>(dl[f.label]), 1e-30));
        dl[f.label] -= 1.0f;
        e.backward(tr, dl, grad.data(), nullptr);
      }
      const auto n = static_cast<float>(end_i - start_i);
      const auto step = static_cast<float>(cfg.lr) / n;
      for (std::size_t i = 0; i < L.total; ++i) m.theta[i] -= step * grad[i];
      loss_sum += batch_loss / n;
      ++batches;
    }
    rep.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  m.epochs = start.epochs + static_cast<std::uint32_t>(cfg.epochs);
  if (!rep.epoch_loss.empty()) m.final_loss = static_cast<float>(rep.epoch_loss.back());
  return rep;
}

/// Fraction of frames whose predicted class equals the label. Frames are
/// classified exactly as given (no noise is added here).
inline double evaluate_accuracy(const Model &model, std::span<const sig::Frame> frames) {
  if (frames.empty()) throw ConfigError("cannot evaluate on an empty frame set");
  std::size_t hits = 0;
  for (const auto &f : frames) hits += classify(model, f.iq) == f.label;
  return static_cast<double>(hits) / static_cast<double>(frames.size());
}

// ---- model container -----------------------------------------------------
//
// "RFMC", version u16, reserved u16, then u32 fields p, conv1_filters,
// conv1_kernel, conv2_filters, conv2_kernel, dense, classes, activation,
// epochs, f32 final_loss, u32 parameter count, then theta as f32. All
// little-endian.

inline constexpr std::uint16_t kModelVersion = 1;

inline std::string encode_model(const Model &m) {
  binio::Writer w;
  w.bytes("RFMC");
  w.u16(kModelVersion);
  w.u16(0);
  const auto &a = m.arch;
  for (std::size_t v : {a.p, a.conv1_filters, a.conv1_kernel, a.conv2_filters, a.conv2_kernel, a.dense, a.classes})
    w.u32(static_cast<std::uint32_t>(v));
  w.u32(static_cast<std::uint32_t>(a.activation));
  w.u32(m.epochs);
  w.f32(m.final_loss);
  w.u32(static_cast<std::uint32_t>(m.theta.size()));
  for (float v : m.theta) w.f32(v);
  return w.data();
}

inline Model decode_model(std::string_view data) {
  binio::Reader r(data);
  if (r.bytes(4) != "RFMC") throw FormatError("not a model file (bad magic)");
  if (r.u16() != kModelVersion) throw FormatError("unsupported model version");
  r.u16();
  Model m;
  auto &a = m.arch;
  a.p = r.u32();
  a.conv1_filters = r.u32();
  a.conv1_kernel = r.u32();
  a.conv2_filters = r.u32();
  a.conv2_kernel = r.u32();
  a.dense = r.u32();
  a.classes = r.u32();
  const auto act = r.u32();
  if (act > 1) throw FormatError("unknown activation tag");
  a.activation = static_cast<Activation>(act);
  try {
    a.validate();
  } catch (const ConfigError &e) {
    throw FormatError(std::string("bad model header: ") + e.what());
  }
  m.epochs = r.u32();
  m.final_loss = r.f32();
  const std::size_t n = r.u32();
  if (n != parameter_count(a)) throw FormatError("parameter count does not match architecture");
  if (r.remaining() != 4 * n) throw FormatError("model body size does not match header");
  m.theta.resize(n);
  for (auto &v : m.theta) v = r.f32();
  return m;
}

inline void save_model(const Model &m, const std::filesystem::path &path) {
  binio::write_file_atomic(path, encode_model(m));
}

inline Model load_model(const std::filesystem::path &path) { return decode_model(binio::read_file(path)); }

} // namespace rfadv::net
