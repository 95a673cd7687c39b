#pragma once

// Generative transports between consecutive frames.
//
// Every schedule is written as
//   X_tau = A(tau) X0 + B(tau) X1 + gamma_m(tau) Z,   gamma_m = sigma_m g(tau)
// with Z a unit normal cloud and sigma_m the per-modality noise scale
// (sqrt of the NoiseScales variances; m = features or positions). X0 is the
// current frame for the two-sided bridge and absent (zero) for the
// prior-based kinds, whose source sample is gamma_m(0) Z.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensorjump/equinet.hpp"
#include "tensorjump/tensorcloud.hpp"
#include "tensorjump/trajectory.hpp"

namespace tensorjump::transport {

enum class Kind { two_sided, one_sided, flow_matching, ddpm };

Kind parse_kind(const std::string& name);
std::string to_string(Kind kind);

struct Coefficients {
  double a = 0.0, da = 0.0;  // A, dA/dtau
  double b = 0.0, db = 0.0;  // B, dB/dtau
  double g = 0.0, dg = 0.0;  // g, dg/dtau (multiply by sigma_m for gamma_m)
};

/// Per-coordinate RMS sizes of the data: the frame-to-frame position change
/// and the (centred) positions themselves.
struct DataScales {
  double delta_rms = 0.0;
  double pos_rms = 0.0;
  bool empty() const { return delta_rms == 0.0 && pos_rms == 0.0; }
};

class Schedule {
 public:
  Schedule() = default;
  Schedule(Kind kind, NoiseScales scales);

  Kind kind() const { return kind_; }
  const NoiseScales& scales() const { return scales_; }
  double sigma_v() const { return sigma_v_; }
  double sigma_p() const { return sigma_p_; }
  /// Source is the data frame X_t (two-sided) rather than a Gaussian draw.
  bool data_source() const { return kind_ == Kind::two_sided; }
  bool uses_drift() const { return kind_ != Kind::ddpm; }
  bool uses_noise() const { return kind_ != Kind::flow_matching; }
  /// Throws std::domain_error for tau outside [0, 1].
  Coefficients at(double tau) const;

  void set_data_scales(DataScales scales);
  const DataScales& data_scales() const { return data_; }
  /// Factor applied to P_tau - P_t at the header input: one over its RMS
  /// under the interpolant, sqrt(sigma_p^2 g^2 + B^2 d^2 + (A + B - 1)^2 p^2),
  /// so the network sees an O(1) displacement at every tau. 1 without data scales.
  double disp_scale(double tau) const;

 private:
  Kind kind_ = Kind::two_sided;
  NoiseScales scales_;
  double sigma_v_ = 1.0;
  double sigma_p_ = 1.0;
  DataScales data_;
};

Schedule make_schedule(Kind kind, NoiseScales scales = {});

/// gamma_m(tau) * Z, i.e. Z with features scaled by sigma_v g and positions by sigma_p g.
TensorCloud scaled_noise(const Schedule& s, double g, const TensorCloud& z);

/// X_tau. For prior-based kinds x0 is ignored.
TensorCloud interpolate(const TensorCloud& x0, const TensorCloud& x1, const TensorCloud& z, double tau,
                        const Schedule& s);
/// dX_tau/dtau at fixed (x0, x1, z): the drift regression target.
TensorCloud target_velocity(const TensorCloud& x0, const TensorCloud& x1, const TensorCloud& z, double tau,
                            const Schedule& s);

// ---------------------------------------------------------------------------
// Training

/// One consecutive-frame pair with its node labels.
struct Pair {
  const std::vector<int>* labels = nullptr;
  const TensorCloud* x_t = nullptr;
  const TensorCloud* x_next = nullptr;
};

/// RMS displacement and position sizes over the pairs (positions centred per frame).
DataScales estimate_data_scales(std::span<const Pair> pairs);

struct TrainConfig {
  int batch_size = 8;
  long steps = 2000;
  double lr_start = 1e-2;
  double lr_end = 1e-3;
  long lr_steps = 150000;  // linear decay horizon; lr_end afterwards
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  void validate() const;
  double learning_rate(long step) const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

/// Thrown when a step produces non-finite parameters; carries the batch so
/// the caller can dump it.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, long step, std::vector<equinet::LossSample> batch)
      : std::runtime_error(what), step_(step), batch_(std::move(batch)) {}
  long step() const { return step_; }
  const std::vector<equinet::LossSample>& batch() const { return batch_; }

 private:
  long step_;
  std::vector<equinet::LossSample> batch_;
};

/// Draws tau ~ U[0,1) and Z ~ N(0, I) for one pair and builds the regression
/// sample (targets only for the heads the schedule uses).
equinet::LossSample make_loss_sample(const Pair& pair, const Schedule& s, std::mt19937_64& rng);

struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
};

/// One Adam update on the given pairs. Deterministic given rng state.
StepResult train_step(equinet::EquiNetParams& params, std::span<const Pair> batch, const Schedule& s,
                      const TrainConfig& config, AdamState& adam, std::mt19937_64& rng);

/// Mean of the offset objective 1/2|b - target|^2 + 1/2|eta - Z|^2 over
/// `draws` fixed (tau, Z) draws per pair. Zero exactly at the optimum of a
/// noiseless problem and equal to 1/2|target|^2 + 1/2|Z|^2 at zero-init heads.
double validation_loss(const equinet::EquiNetParams& params, std::span<const Pair> pairs, const Schedule& s,
                       std::uint64_t seed, int draws = 4);

// ---------------------------------------------------------------------------
// Sampling

enum class EpsProfile {
  constant,  // eps(tau) = eps
  bridge,    // eps(tau) = eps * 4 tau (1 - tau): vanishes at both ends
};

struct SampleConfig {
  int steps = 100;
  double eps = 1.0;
  EpsProfile profile = EpsProfile::constant;
  /// gamma is clamped below at gamma(floor * dtau) (and its mirror near 1).
  double gamma_floor = 0.5;
  /// Drop the sqrt(dtau) factor on the stochastic kick.
  bool literal_kick = false;
  bool final_noiseless = true;
  void validate() const;
  double eps_at(double tau) const;
};

/// Produces the unit normal Z used by one SDE step; the default draws from rng.
using NoiseSource = std::function<TensorCloud(const TensorCloud& like)>;
NoiseSource rng_noise(std::mt19937_64& rng);

/// Conditioner context for one generate_next call.
struct Context {
  const equinet::EquiNetParams* params = nullptr;
  TensorCloud x_tilde;  // f_cond(R, X_t), positions of X_t
  TensorCloud x0;       // source frame for two-sided, zeros otherwise
};

Context make_context(std::span<const int> labels, const TensorCloud& x_t, const equinet::EquiNetParams& params,
                     const Schedule& s);

/// Drift and noise estimates at (x_tau, tau), completing the head the
/// schedule does not learn from the other one.
struct Estimates {
  TensorCloud drift;
  TensorCloud noise;
};
Estimates estimate(const Context& ctx, const TensorCloud& x_tau, double tau, const Schedule& s, double gamma_floor_tau);

/// Euler step of dX = b dtau.
TensorCloud sample_step_ode(const Context& ctx, const TensorCloud& x_tau, double tau, double dtau, const Schedule& s);
/// Euler-Maruyama step of dX = (b - eps/gamma eta) dtau + sqrt(2 eps) dW.
/// `kick` = false omits the stochastic term.
TensorCloud sample_step_sde(const Context& ctx, const TensorCloud& x_tau, double tau, double dtau, const Schedule& s,
                            const SampleConfig& config, const NoiseSource& noise, bool kick = true);

/// X_{t+1} from X_t: integrates tau over [0, 1] in config.steps steps.
TensorCloud generate_next(std::span<const int> labels, const TensorCloud& x_t, const equinet::EquiNetParams& params,
                          const Schedule& s, const SampleConfig& config, const NoiseSource& noise);
TensorCloud generate_next(std::span<const int> labels, const TensorCloud& x_t, const equinet::EquiNetParams& params,
                          const Schedule& s, const SampleConfig& config, std::mt19937_64& rng);

/// n_steps iterations of generate_next; frame 0 is x_0. Stops early with a
/// status message if a frame turns non-finite.
Trajectory rollout(std::span<const int> labels, const TensorCloud& x_0, long n_steps,
                   const equinet::EquiNetParams& params, const Schedule& s, const SampleConfig& config,
                   std::mt19937_64& rng);

}  // namespace tensorjump::transport
