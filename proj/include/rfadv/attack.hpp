#pragma once

// Channel-aware white-box perturbation crafting for an m-antenna adversary.
//
// Every strategy is built from the same two pieces: a channel-matched FGM
// direction conj(h) . grad / ||conj(h) . grad|| per candidate target class,
// and a bisection for the smallest amplitude eps at which
// r - eps * (received perturbation direction) is misclassified. Strategies
// differ only in how antennas are weighted, selected, or combined.
//
// Stored perturbations are the transmitted signals: the receiver sees
// r + sum_i h_i . delta_i, so a search that moves the input to
// r - eps * h . d transmits delta = -eps * d.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rfadv/chan.hpp"
#include "rfadv/common.hpp"
#include "rfadv/net.hpp"

namespace rfadv::attack {

enum class Kind : std::uint8_t {
  MRPP1,
  SAGA,
  PCG_COMMON,
  PCG_IND,
  IPCG_COMMON,
  IPCG_IND,
  EMCG,
  GAUSS_EMCG,
  MULTI_ADV,
};

inline constexpr std::array kAllKinds{Kind::MRPP1,   Kind::SAGA,       Kind::PCG_COMMON,
                                      Kind::PCG_IND, Kind::IPCG_COMMON, Kind::IPCG_IND,
                                      Kind::EMCG,    Kind::GAUSS_EMCG, Kind::MULTI_ADV};

inline std::string_view kind_name(Kind k) {
  switch (k) {
  case Kind::MRPP1: return "mrpp1";
  case Kind::SAGA: return "saga";
  case Kind::PCG_COMMON: return "pcg_common";
  case Kind::PCG_IND: return "pcg_ind";
  case Kind::IPCG_COMMON: return "ipcg_common";
  case Kind::IPCG_IND: return "ipcg_ind";
  case Kind::EMCG: return "emcg";
  case Kind::GAUSS_EMCG: return "gauss_emcg";
  case Kind::MULTI_ADV: return "multi_adv";
  }
  return "?";
}

inline std::string valid_kind_list() {
  std::string s;
  for (auto k : kAllKinds) {
    if (!s.empty()) s += ", ";
    s += kind_name(k);
  }
  return s;
}

inline Kind parse_kind(std::string_view name) {
  std::string lower(name);
  for (auto &c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (auto k : kAllKinds)
    if (kind_name(k) == lower) return k;
  throw ConfigError("unknown attack '" + std::string(name) + "'; valid kinds: " + valid_kind_list());
}

struct AttackConfig {
  double p_max = 1.0;
  double eps_acc = 1e-3;
  Kind kind = Kind::MRPP1;

  /// eps_acc given relative to sqrt(p_max).
  static AttackConfig relative(double p_max, double eps_acc_rel, Kind kind) {
    return {p_max, eps_acc_rel * std::sqrt(p_max), kind};
  }

  void validate() const {
    if (!(p_max > 0.0)) throw ConfigError("attack power budget must be > 0");
    if (!(eps_acc > 0.0 && eps_acc < std::sqrt(p_max))) throw ConfigError("eps_acc must lie in (0, sqrt(P_max))");
  }
};

struct PerturbationSet {
  std::vector<CVec> deltas;         // transmitted signal per antenna
  std::vector<std::size_t> targets; // target class per antenna (common attacks repeat it)
  std::vector<double> eps_used;     // amplitude per antenna before weighting
  bool fooled_in_craft = false;

  double total_power() const {
    double s = 0.0;
    for (const auto &d : deltas) s += energy(d);
    return s;
  }
};

/// Antenna power weights, nonnegative and summing to one.
struct WeightVector {
  std::vector<double> w;
};

struct BisectionResult {
  double eps = 0.0;
  bool success = false;
  std::size_t probes = 0;
};

/// conj(h) . grad has zero norm, so no direction exists for this target.
struct DegenerateGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- building blocks -----------------------------------------------------

/// conj(h) . g normalized to unit norm.
inline CVec matched_direction(const CVec &g, const CVec &h) {
  require(g.size() == h.size(), "gradient and channel lengths differ");
  CVec d(g.size());
  for (std::size_t t = 0; t < g.size(); ++t) d[t] = std::conj(h[t]) * g[t];
  const double n = norm2(d);
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateGradient("channel-matched gradient has zero norm");
  for (auto &z : d) z /= n;
  return d;
}

/// Unit-norm FGM direction toward `target` through channel h.
inline CVec fgm_direction(const net::Model &model, const CVec &r, std::size_t target, const CVec &h) {
  require(r.size() == model.arch.p && h.size() == model.arch.p, "fgm_direction: length mismatch");
  return matched_direction(net::loss_and_input_gradient(model, r, target).grad, h);
}

/// Smallest eps in [0, sqrt(p_max)] (to within eps_acc) at which fooled(eps)
/// holds. One probe at sqrt(p_max) decides success; on failure eps is
/// sqrt(p_max). On success the returned eps is the final upper bracket.
inline BisectionResult min_eps_bisection(const std::function<bool(double)> &fooled, double p_max, double eps_acc) {
  BisectionResult res;
  double hi = std::sqrt(p_max);
  double lo = 0.0;
  res.eps = hi;
  res.probes = 1;
  if (!fooled(hi)) return res;
  res.success = true;
  while (hi - lo > eps_acc) {
    const double mid = (hi + lo) / 2.0;
    ++res.probes;
    if (fooled(mid))
      hi = mid;
    else
      lo = mid;
  }
  res.eps = hi;
  return res;
}

/// r - eps * u
inline CVec step_back(const CVec &r, double eps, const CVec &u) {
  CVec out(r.size());
  for (std::size_t t = 0; t < r.size(); ++t) out[t] = r[t] - eps * u[t];
  return out;
}

/// Bisection over the classifier with apply(eps) = r - eps * u.
inline BisectionResult min_eps_bisection(const net::Model &model, const CVec &r, const CVec &u, double p_max,
                                         double eps_acc, std::size_t true_label) {
  return min_eps_bisection([&](double eps) { return net::classify(model, step_back(r, eps, u)) != true_label; },
                           p_max, eps_acc);
}

inline WeightVector pcg_weights(std::span<const CVec> channels) {
  WeightVector wv;
  double sum = 0.0;
  for (const auto &h : channels) sum += chan::channel_gain(h);
  for (const auto &h : channels) wv.w.push_back(chan::channel_gain(h) / sum);
  return wv;
}

/// Normalized inverse gains: w_i = (1/||h_i||) / sum_j (1/||h_j||).
inline WeightVector ipcg_weights(std::span<const CVec> channels) {
  WeightVector wv;
  double sum = 0.0;
  for (const auto &h : channels) sum += 1.0 / chan::channel_gain(h);
  for (const auto &h : channels) wv.w.push_back((1.0 / chan::channel_gain(h)) / sum);
  return wv;
}

/// Receiver input r + sum_i h_i . delta_i.
inline CVec received(const CVec &r, std::span<const CVec> channels, std::span<const CVec> deltas) {
  require(channels.size() == deltas.size(), "one channel per perturbation required");
  CVec out = r;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    require(channels[i].size() == r.size() && deltas[i].size() == r.size(), "received: length mismatch");
    for (std::size_t t = 0; t < r.size(); ++t) out[t] += channels[i][t] * deltas[i][t];
  }
  return out;
}

namespace detail {

/// Input gradients toward every class except the true one, computed once
/// per frame and shared by all antennas and strategies.
struct ClassGradients {
  std::vector<std::optional<CVec>> g; // empty at the true label

  ClassGradients(const net::Model &model, const CVec &r, std::size_t true_label) : g(model.arch.classes) {
    for (std::size_t c = 0; c < g.size(); ++c)
      if (c != true_label) g[c] = net::loss_and_input_gradient(model, r, c).grad;
  }
};

inline std::optional<CVec> try_direction(const CVec &g, const CVec &h) {
  try {
    return matched_direction(g, h);
  } catch (const DegenerateGradient &) {
    return std::nullopt;
  }
}

/// Outcome of searching all candidate targets for one received-direction
/// family. `u[c]` is the received perturbation direction for class c.
struct TargetChoice {
  std::optional<std::size_t> target; // nullopt: every class degenerate
  double eps = 0.0;
  bool success = false;
};

/// Index of the successful candidate with the smallest eps; ties go to the
/// lowest index. Empty slots are skipped.
inline std::optional<std::size_t> cheapest(std::span<const std::optional<BisectionResult>> cands) {
  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < cands.size(); ++c)
    if (cands[c] && cands[c]->success && (!best || cands[c]->eps < cands[*best]->eps)) best = c;
  return best;
}

/// Cheapest target: minimum eps over successful classes, ties to the lowest
/// class. With no success, the lowest non-degenerate class at full budget.
inline TargetChoice choose_target(const net::Model &model, const CVec &r, std::size_t true_label,
                                  std::span<const std::optional<CVec>> u, const AttackConfig &cfg) {
  std::vector<std::optional<BisectionResult>> res(u.size());
  for (std::size_t c = 0; c < u.size(); ++c)
    if (u[c]) res[c] = min_eps_bisection(model, r, *u[c], cfg.p_max, cfg.eps_acc, true_label);
  TargetChoice best;
  if (const auto c = cheapest(res)) {
    best.target = c;
    best.eps = res[*c]->eps;
    best.success = true;
    return best;
  }
  for (std::size_t c = 0; c < res.size(); ++c)
    if (res[c]) {
      best.target = c;
      best.eps = std::sqrt(cfg.p_max);
      break;
    }
  return best;
}

inline CVec scaled(const CVec &d, double s) {
  CVec out(d.size());
  for (std::size_t t = 0; t < d.size(); ++t) out[t] = s * d[t];
  return out;
}

inline CVec hadamard(const CVec &a, const CVec &b) {
  CVec out(a.size());
  for (std::size_t t = 0; t < a.size(); ++t) out[t] = a[t] * b[t];
  return out;
}

/// Rescales to the budget if it is exceeded and replays the set on r.
inline void finalize(PerturbationSet &set, const net::Model &model, const CVec &r, std::span<const CVec> channels,
                     std::size_t true_label, double p_max) {
  const double total = set.total_power();
  if (total > p_max) {
    const double k = std::sqrt(p_max / total);
    for (auto &d : set.deltas)
      for (auto &z : d) z *= k;
  }
  set.fooled_in_craft = net::classify(model, received(r, channels, set.deltas)) != true_label;
}

/// Single-antenna MRPP from precomputed class gradients.
inline PerturbationSet mrpp_from_gradients(const net::Model &model, const CVec &r, std::size_t true_label,
                                           const CVec &h, const ClassGradients &grads, const AttackConfig &cfg) {
  const std::size_t C = grads.g.size();
  std::vector<std::optional<CVec>> dir(C), u(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (!grads.g[c]) continue;
    dir[c] = try_direction(*grads.g[c], h);
    if (dir[c]) u[c] = hadamard(h, *dir[c]);
  }
  const auto choice = choose_target(model, r, true_label, u, cfg);

  PerturbationSet set;
  if (!choice.target) {
    set.deltas.assign(1, CVec(r.size()));
    set.targets.assign(1, true_label);
    set.eps_used.assign(1, 0.0);
    return set;
  }
  set.deltas.push_back(scaled(*dir[*choice.target], -choice.eps));
  set.targets.push_back(*choice.target);
  set.eps_used.push_back(choice.eps);
  const CVec hs[] = {h};
  finalize(set, model, r, hs, true_label, cfg.p_max);
  return set;
}

} // namespace detail

// ---- strategies ----------------------------------------------------------

/// Single-antenna maximum-received-perturbation-power attack: per target
/// class, the minimal eps along the channel-matched FGM direction; the
/// cheapest class wins.
inline PerturbationSet mrpp_single(const net::Model &model, const CVec &r, std::size_t true_label, const CVec &h,
                                   const AttackConfig &cfg) {
  cfg.validate();
  const detail::ClassGradients grads(model, r, true_label);
  return detail::mrpp_from_gradients(model, r, true_label, h, grads, cfg);
}

enum class Weighting { PCG, IPCG };
enum class Targeting { Common, Independent };

/// PCG / IPCG power split with a common target or per-antenna targets.
inline PerturbationSet weighted_attack(const net::Model &model, const CVec &r, std::size_t true_label,
                                       const chan::ChannelSet &channels, Weighting weighting, Targeting targeting,
                                       const AttackConfig &cfg) {
  cfg.validate();
  const auto &H = channels.h;
  const std::size_t m = H.size();
  require(m >= 1, "weighted_attack needs at least one antenna");
  const auto w = (weighting == Weighting::PCG ? pcg_weights(H) : ipcg_weights(H)).w;
  const detail::ClassGradients grads(model, r, true_label);
  const std::size_t C = grads.g.size();

  // dir[c][i]: antenna i's unit direction toward class c
  std::vector<std::vector<std::optional<CVec>>> dir(C, std::vector<std::optional<CVec>>(m));
  for (std::size_t c = 0; c < C; ++c)
    if (grads.g[c])
      for (std::size_t i = 0; i < m; ++i) dir[c][i] = detail::try_direction(*grads.g[c], H[i]);

  PerturbationSet set;
  set.deltas.assign(m, CVec(r.size()));
  set.targets.assign(m, true_label);
  set.eps_used.assign(m, 0.0);

  if (targeting == Targeting::Common) {
    std::vector<std::optional<CVec>> u(C);
    for (std::size_t c = 0; c < C; ++c) {
      bool ok = grads.g[c].has_value();
      for (std::size_t i = 0; ok && i < m; ++i) ok = dir[c][i].has_value();
      if (!ok) continue;
      CVec sum(r.size());
      for (std::size_t i = 0; i < m; ++i) {
        const CVec term = detail::scaled(detail::hadamard(H[i], *dir[c][i]), w[i]);
        for (std::size_t t = 0; t < sum.size(); ++t) sum[t] += term[t];
      }
      u[c] = std::move(sum);
    }
    const auto choice = detail::choose_target(model, r, true_label, u, cfg);
    if (!choice.target) return set;
    for (std::size_t i = 0; i < m; ++i) {
      set.deltas[i] = detail::scaled(*dir[*choice.target][i], -(choice.eps * w[i]));
      set.targets[i] = *choice.target;
      set.eps_used[i] = choice.eps;
    }
  } else {
    bool any = false;
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<std::optional<CVec>> u(C);
      for (std::size_t c = 0; c < C; ++c)
        if (dir[c][i]) u[c] = detail::scaled(detail::hadamard(H[i], *dir[c][i]), w[i]);
      const auto choice = detail::choose_target(model, r, true_label, u, cfg);
      if (!choice.target) continue;
      any = true;
      set.deltas[i] = detail::scaled(*dir[*choice.target][i], -(choice.eps * w[i]));
      set.targets[i] = *choice.target;
      set.eps_used[i] = choice.eps;
    }
    if (!any) return set;
  }
  detail::finalize(set, model, r, H, true_label, cfg.p_max);
  return set;
}

/// Genie-aided single-antenna attack: MRPP against every antenna with the
/// full budget; only the antenna needing the smallest eps transmits.
inline PerturbationSet saga(const net::Model &model, const CVec &r, std::size_t true_label,
                            const chan::ChannelSet &channels, const AttackConfig &cfg, std::size_t *chosen = nullptr) {
  cfg.validate();
  const auto &H = channels.h;
  const std::size_t m = H.size();
  require(m >= 1, "saga needs at least one antenna");
  const detail::ClassGradients grads(model, r, true_label);

  std::vector<PerturbationSet> per(m);
  std::vector<std::optional<BisectionResult>> cand(m);
  for (std::size_t i = 0; i < m; ++i) {
    per[i] = detail::mrpp_from_gradients(model, r, true_label, H[i], grads, cfg);
    cand[i] = BisectionResult{per[i].eps_used[0], per[i].fooled_in_craft, 0};
  }
  const std::size_t pick = detail::cheapest(cand).value_or(0);
  const PerturbationSet &src = per[pick];

  PerturbationSet set;
  set.deltas.assign(m, CVec(r.size()));
  set.targets.assign(m, src.targets[0]);
  set.eps_used.assign(m, 0.0);
  set.deltas[pick] = src.deltas[0];
  set.eps_used[pick] = src.eps_used[0];
  set.fooled_in_craft = src.fooled_in_craft;
  if (chosen) *chosen = pick;
  return set;
}

/// Per-tap strongest antenna; ties go to the lowest antenna index.
inline std::vector<std::size_t> strongest_antenna_per_tap(std::span<const CVec> channels) {
  require(!channels.empty(), "need at least one antenna");
  const std::size_t p = channels[0].size();
  std::vector<std::size_t> k(p, 0);
  for (std::size_t t = 0; t < p; ++t) {
    double best = std::norm(channels[0][t]);
    for (std::size_t j = 1; j < channels.size(); ++j) {
      const double v = std::norm(channels[j][t]);
      if (v > best) {
        best = v;
        k[t] = j;
      }
    }
  }
  return k;
}

/// The virtual channel: at each tap, the winning antenna's complex tap.
inline CVec virtual_channel(std::span<const CVec> channels, std::span<const std::size_t> k) {
  CVec hv(k.size());
  for (std::size_t t = 0; t < k.size(); ++t) hv[t] = channels[k[t]][t];
  return hv;
}

inline PerturbationSet scatter(const CVec &delta_vir, std::span<const std::size_t> k, std::size_t m) {
  PerturbationSet set;
  set.deltas.assign(m, CVec(delta_vir.size()));
  for (std::size_t t = 0; t < k.size(); ++t) set.deltas[k[t]][t] = delta_vir[t];
  return set;
}

/// Elementwise maximum channel gain attack: MRPP against the virtual
/// channel, each sample then sent from the antenna that won that tap.
inline PerturbationSet emcg(const net::Model &model, const CVec &r, std::size_t true_label,
                            const chan::ChannelSet &channels, const AttackConfig &cfg) {
  cfg.validate();
  const auto k = strongest_antenna_per_tap(channels.h);
  const CVec hv = virtual_channel(channels.h, k);
  const auto vir = mrpp_single(model, r, true_label, hv, cfg);
  auto set = scatter(vir.deltas[0], k, channels.h.size());
  set.targets.assign(channels.h.size(), vir.targets[0]);
  set.eps_used.assign(channels.h.size(), vir.eps_used[0]);
  set.fooled_in_craft = vir.fooled_in_craft;
  return set;
}

/// EMCG antenna selection carrying white complex Gaussian noise with total
/// power exactly p_max instead of a crafted perturbation.
inline PerturbationSet gaussian_emcg(const chan::ChannelSet &channels, double p_max, Rng &rng) {
  const auto k = strongest_antenna_per_tap(channels.h);
  CVec noise(k.size());
  for (auto &z : noise) z = rng.complex_normal();
  const double e = energy(noise);
  const double s = e > 0.0 ? std::sqrt(p_max / e) : 0.0;
  for (auto &z : noise) z *= s;
  auto set = scatter(noise, k, channels.h.size());
  set.targets.assign(channels.h.size(), 0);
  set.eps_used.assign(channels.h.size(), std::sqrt(p_max));
  return set;
}

/// k uncoordinated single-antenna adversaries, each running MRPP against its
/// own channel with an equal share p_max / k of the budget.
inline std::vector<PerturbationSet> multi_adversary(const net::Model &model, const CVec &r, std::size_t true_label,
                                                    std::span<const chan::ChannelSet> adversaries,
                                                    const AttackConfig &cfg) {
  cfg.validate();
  require(!adversaries.empty(), "multi_adversary needs at least one adversary");
  AttackConfig share = cfg;
  share.p_max = cfg.p_max / static_cast<double>(adversaries.size());
  share.eps_acc = cfg.eps_acc / std::sqrt(static_cast<double>(adversaries.size()));
  const detail::ClassGradients grads(model, r, true_label);
  std::vector<PerturbationSet> out;
  for (const auto &a : adversaries) {
    require(a.h.size() == 1, "each adversary must have exactly one antenna");
    out.push_back(detail::mrpp_from_gradients(model, r, true_label, a.h[0], grads, share));
  }
  return out;
}

/// Dispatches a single-adversary strategy over an m-antenna channel set.
/// MRPP1 uses antenna 0 only and reports zero perturbations elsewhere.
inline PerturbationSet craft(const net::Model &model, const CVec &r, std::size_t true_label,
                             const chan::ChannelSet &channels, const AttackConfig &cfg, Rng &rng) {
  switch (cfg.kind) {
  case Kind::MRPP1: {
    auto s = mrpp_single(model, r, true_label, channels.h.at(0), cfg);
    s.deltas.resize(channels.h.size(), CVec(r.size()));
    s.targets.resize(channels.h.size(), s.targets[0]);
    s.eps_used.resize(channels.h.size(), 0.0);
    return s;
  }
  case Kind::SAGA: return saga(model, r, true_label, channels, cfg);
  case Kind::PCG_COMMON: return weighted_attack(model, r, true_label, channels, Weighting::PCG, Targeting::Common, cfg);
  case Kind::PCG_IND:
    return weighted_attack(model, r, true_label, channels, Weighting::PCG, Targeting::Independent, cfg);
  case Kind::IPCG_COMMON:
    return weighted_attack(model, r, true_label, channels, Weighting::IPCG, Targeting::Common, cfg);
  case Kind::IPCG_IND:
    return weighted_attack(model, r, true_label, channels, Weighting::IPCG, Targeting::Independent, cfg);
  case Kind::EMCG: return emcg(model, r, true_label, channels, cfg);
  case Kind::GAUSS_EMCG: cfg.validate(); return gaussian_emcg(channels, cfg.p_max, rng);
  case Kind::MULTI_ADV: break;
  }
  throw ConfigError("craft(): multi_adv needs one channel set per adversary; use multi_adversary()");
}

} // namespace rfadv::attack
