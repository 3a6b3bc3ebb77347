#pragma once

// Adversary -> receiver channels: path loss x log-normal shadowing x per-tap
// Rayleigh fading, optionally correlated across antennas.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "rfadv/common.hpp"

namespace rfadv::chan {

struct ChannelParams {
  double K = 1.0;
  double d0 = 1.0;
  double d = 10.0;
  double gamma = 2.7;
  double shadow_sigma_db = 8.0;
  double rayleigh_var = 1.0;
  double rho = 0.0;
  std::size_t m = 1;
  std::size_t p = 128;

  void validate() const {
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("channel rho must lie in [0, 1)");
    if (!(rayleigh_var > 0.0)) throw ConfigError("channel rayleigh_var must be > 0");
    if (!(d0 > 0.0 && d >= d0)) throw ConfigError("channel distances need d >= d0 > 0");
    if (!(shadow_sigma_db >= 0.0)) throw ConfigError("shadow_sigma_db must be >= 0");
    if (m < 1 || p < 1) throw ConfigError("channel needs m >= 1 and p >= 1");
  }

  /// Deterministic amplitude factor K (d0/d)^gamma.
  double path_loss_amplitude() const { return K * std::pow(d0 / d, gamma); }
};

struct ChannelSet {
  std::vector<CVec> h; // one length-p tap vector per antenna
  ChannelParams params;
  std::uint64_t seed = 0;

  std::size_t antennas() const { return h.size(); }
};

/// Samples m tap vectors. Shadowing psi_i = 10^(X_i/20), X_i ~ N(0, sigma_dB^2)
/// is drawn once per antenna; fading taps are circular Gaussian with
/// E|g|^2 = rayleigh_var and pairwise cross-antenna correlation rho at each tap.
///
/// Antenna i draws from its own stream derive_seed(seed, i) and the shared
/// correlation component from a separate stream, so the first m antennas of
/// a larger draw equal a draw with m antennas, and rho/rayleigh_var sweeps
/// at one seed reuse the same underlying Gaussians.
inline ChannelSet sample_channels(const ChannelParams &params, std::uint64_t seed) {
  params.validate();
  ChannelSet out;
  out.params = params;
  out.seed = seed;
  out.h.assign(params.m, CVec(params.p));

  const double amp = params.path_loss_amplitude();
  const double shared = std::sqrt(params.rho);
  const double own = std::sqrt(1.0 - params.rho);

  CVec common(params.p);
  Rng common_rng(derive_seed(seed, 0xC0117));
  for (auto &z : common) z = common_rng.complex_normal(params.rayleigh_var);

  for (std::size_t i = 0; i < params.m; ++i) {
    Rng rng(derive_seed(seed, i));
    const double psi = std::pow(10.0, params.shadow_sigma_db * rng.normal() / 20.0);
    for (std::size_t t = 0; t < params.p; ++t) {
      const cplx g = shared * common[t] + own * rng.complex_normal(params.rayleigh_var);
      out.h[i][t] = amp * psi * g;
    }
  }
  return out;
}

/// Elementwise h[t] * x[t] (a diagonal channel matrix applied to x).
inline CVec apply_channel(const CVec &h, const CVec &x) {
  require(h.size() == x.size(), "apply_channel: length mismatch");
  CVec out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) out[t] = h[t] * x[t];
  return out;
}

inline double channel_gain(const CVec &h) { return norm2(h); }

/// Expected per-tap received power gain (K (d0/d)^gamma)^2 E[psi^2] rayleigh_var,
/// with E[psi^2] = exp(2 (ln10/20)^2 sigma_dB^2) for log-normal psi.
inline double mean_received_power_gain(const ChannelParams &params) {
  params.validate();
  const double a = params.path_loss_amplitude();
  const double s = std::numbers::ln10 / 20.0 * params.shadow_sigma_db;
  return a * a * std::exp(2.0 * s * s) * params.rayleigh_var;
}

} // namespace rfadv::chan
