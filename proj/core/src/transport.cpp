#include "tensorjump/transport.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

namespace tensorjump::transport {

namespace eq = equinet;

Kind parse_kind(const std::string& name) {
  if (name == "two_sided") return Kind::two_sided;
  if (name == "one_sided") return Kind::one_sided;
  if (name == "flow_matching") return Kind::flow_matching;
  if (name == "ddpm") return Kind::ddpm;
  throw std::invalid_argument("unknown transport kind '" + name + "'");
}

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::two_sided: return "two_sided";
    case Kind::one_sided: return "one_sided";
    case Kind::flow_matching: return "flow_matching";
    case Kind::ddpm: return "ddpm";
  }
  return "?";
}

Schedule::Schedule(Kind kind, NoiseScales scales) : kind_(kind), scales_(scales) {
  scales_.validate();
  sigma_v_ = std::sqrt(scales_.sigma2_v);
  sigma_p_ = std::sqrt(scales_.sigma2_p);
}

void Schedule::set_data_scales(DataScales scales) {
  if (!(scales.delta_rms >= 0.0) || !(scales.pos_rms >= 0.0) || !std::isfinite(scales.delta_rms) ||
      !std::isfinite(scales.pos_rms)) {
    throw std::invalid_argument("schedule: data scales must be finite and >= 0");
  }
  data_ = scales;
}

double Schedule::disp_scale(double tau) const {
  if (data_.empty()) return 1.0;
  const auto c = at(tau);
  const double shift = c.a + c.b - 1.0;
  double var = sigma_p_ * sigma_p_ * c.g * c.g + c.b * c.b * data_.delta_rms * data_.delta_rms +
               shift * shift * data_.pos_rms * data_.pos_rms;
  // Keeps the factor finite where the displacement itself vanishes (two-sided tau = 0).
  var += 1e-4 * (sigma_p_ * sigma_p_ + data_.delta_rms * data_.delta_rms);
  return 1.0 / std::sqrt(var);
}

Coefficients Schedule::at(double tau) const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::domain_error("schedule: tau=" + std::to_string(tau) + " outside [0, 1]");
  Coefficients c;
  switch (kind_) {
    case Kind::two_sided:
      c.a = 1.0 - tau;
      c.da = -1.0;
      c.b = tau;
      c.db = 1.0;
      c.g = tau * (1.0 - tau);
      c.dg = 1.0 - 2.0 * tau;
      break;
    case Kind::one_sided:
    case Kind::flow_matching:
      c.b = tau;
      c.db = 1.0;
      c.g = 1.0 - tau;
      c.dg = -1.0;
      break;
    case Kind::ddpm: {
      // Variance preserving: B^2 + g^2 = 1.
      const double h = 0.5 * std::numbers::pi;
      c.b = tau == 1.0 ? 1.0 : std::sin(h * tau);
      c.db = h * std::cos(h * tau);
      c.g = tau == 1.0 ? 0.0 : std::cos(h * tau);
      c.dg = -h * std::sin(h * tau);
      break;
    }
  }
  return c;
}

Schedule make_schedule(Kind kind, NoiseScales scales) { return Schedule(kind, scales); }

namespace {

struct Term {
  double feature_coef;
  double position_coef;
  const TensorCloud* cloud;
};

// sum_k coef_k x_k per modality. Terms with both coefficients exactly zero
// are skipped and the first kept term is copied rather than added to zero,
// so that e.g. 1 * X0 + 0 * X1 is X0 bitwise (signed zeros included).
TensorCloud combine(std::initializer_list<Term> terms, const TensorCloud& shape) {
  TensorCloud out;
  bool started = false;
  for (const auto& t : terms) {
    if (t.feature_coef == 0.0 && t.position_coef == 0.0) continue;
    require_same_shape(*t.cloud, shape, "transport");
    const auto& v = t.cloud->features();
    const auto& p = t.cloud->positions();
    if (!started) {
      out = TensorCloud(shape.spec(), shape.size());
      for (std::size_t k = 0; k < v.size(); ++k) out.features()[k] = t.feature_coef * v[k];
      for (std::size_t k = 0; k < p.size(); ++k) out.positions()[k] = t.position_coef * p[k];
      started = true;
      continue;
    }
    for (std::size_t k = 0; k < v.size(); ++k) out.features()[k] += t.feature_coef * v[k];
    for (std::size_t k = 0; k < p.size(); ++k) out.positions()[k] += t.position_coef * p[k];
  }
  if (!started) out = TensorCloud(shape.spec(), shape.size());
  if (shape.has_mask()) out.set_mask(shape.mask());
  return out;
}

TensorCloud zeros_like(const TensorCloud& x) {
  TensorCloud z(x.spec(), x.size());
  if (x.has_mask()) z.set_mask(x.mask());
  return z;
}

}  // namespace

TensorCloud scaled_noise(const Schedule& s, double g, const TensorCloud& z) {
  return combine({{s.sigma_v() * g, s.sigma_p() * g, &z}}, z);
}

TensorCloud interpolate(const TensorCloud& x0, const TensorCloud& x1, const TensorCloud& z, double tau,
                        const Schedule& s) {
  const auto c = s.at(tau);
  const double a = s.data_source() ? c.a : 0.0;
  return combine({{a, a, &x0}, {c.b, c.b, &x1}, {s.sigma_v() * c.g, s.sigma_p() * c.g, &z}}, x1);
}

TensorCloud target_velocity(const TensorCloud& x0, const TensorCloud& x1, const TensorCloud& z, double tau,
                            const Schedule& s) {
  const auto c = s.at(tau);
  const double da = s.data_source() ? c.da : 0.0;
  return combine({{da, da, &x0}, {c.db, c.db, &x1}, {s.sigma_v() * c.dg, s.sigma_p() * c.dg, &z}}, x1);
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (steps < 0) throw std::invalid_argument("train: steps must be >= 0");
  if (!(lr_start > 0.0) || !(lr_end > 0.0) || lr_end > lr_start) {
    throw std::invalid_argument("train: need 0 < lr_end <= lr_start");
  }
  if (lr_steps < 1) throw std::invalid_argument("train: lr_steps must be >= 1");
}

double TrainConfig::learning_rate(long step) const {
  const double f = std::min(1.0, static_cast<double>(step) / static_cast<double>(lr_steps));
  return lr_start + (lr_end - lr_start) * f;
}

DataScales estimate_data_scales(std::span<const Pair> pairs) {
  double dsum = 0.0, psum = 0.0;
  std::size_t count = 0;
  for (const auto& pair : pairs) {
    const auto& a = *pair.x_t;
    const auto& b = *pair.x_next;
    const Vec3 c = centroid(a);
    for (std::size_t i = 0; i < a.size(); ++i) {
      dsum += (b.position(i) - a.position(i)).squaredNorm();
      psum += (a.position(i) - c).squaredNorm();
    }
    count += 3 * a.size();
  }
  if (count == 0) throw std::invalid_argument("estimate_data_scales: no pairs");
  return {std::sqrt(dsum / static_cast<double>(count)), std::sqrt(psum / static_cast<double>(count))};
}

eq::LossSample make_loss_sample(const Pair& pair, const Schedule& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double tau = uniform(rng);
  TensorCloud z = sample_gaussian_like(*pair.x_next, NoiseScales{1.0, 1.0}, rng);
  const TensorCloud x0 = s.data_source() ? *pair.x_t : zeros_like(*pair.x_t);
  eq::LossSample out;
  out.labels = *pair.labels;
  out.x_t = *pair.x_t;
  out.tau = tau;
  out.disp_scale = s.disp_scale(tau);
  out.x_tau = interpolate(x0, *pair.x_next, z, tau, s);
  if (s.uses_drift()) out.drift_target = target_velocity(x0, *pair.x_next, z, tau, s);
  if (s.uses_noise()) out.noise_target = std::move(z);
  return out;
}

StepResult train_step(eq::EquiNetParams& params, std::span<const Pair> batch, const Schedule& s,
                      const TrainConfig& config, AdamState& adam, std::mt19937_64& rng) {
  const std::size_t P = params.flat.size();
  if (adam.m.size() != P) {
    adam.m.assign(P, 0.0);
    adam.v.assign(P, 0.0);
  }
  std::vector<eq::LossSample> samples;
  samples.reserve(batch.size());
  for (const auto& pair : batch) samples.push_back(make_loss_sample(pair, s, rng));
  const auto res = eq::loss_and_grad(params, samples);
  StepResult out;
  out.loss = res.loss;
  out.lr = config.learning_rate(adam.step);
  adam.step += 1;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam.step));
  std::vector<double> next(P);
  for (std::size_t i = 0; i < P; ++i) {
    const double g = res.grad[i];
    adam.m[i] = config.beta1 * adam.m[i] + (1.0 - config.beta1) * g;
    adam.v[i] = config.beta2 * adam.v[i] + (1.0 - config.beta2) * g * g;
    const double mh = adam.m[i] / c1;
    const double vh = adam.v[i] / c2;
    next[i] = params.flat[i] - out.lr * mh / (std::sqrt(vh) + config.adam_eps);
    if (!std::isfinite(next[i])) {
      throw TrainingDiverged("train: non-finite parameter update at step " + std::to_string(adam.step), adam.step,
                             std::move(samples));
    }
  }
  params.flat = std::move(next);
  return out;
}

double validation_loss(const eq::EquiNetParams& params, std::span<const Pair> pairs, const Schedule& s,
                       std::uint64_t seed, int draws) {
  if (pairs.empty() || draws < 1) throw std::invalid_argument("validation_loss: nothing to evaluate");
  std::mt19937_64 rng(seed);
  double total = 0.0;
  std::size_t count = 0;
  for (int d = 0; d < draws; ++d) {
    for (const auto& pair : pairs) {
      auto sample = make_loss_sample(pair, s, rng);
      double offset = 0.0;
      if (sample.drift_target) offset += 0.5 * dot(*sample.drift_target, *sample.drift_target);
      if (sample.noise_target) offset += 0.5 * dot(*sample.noise_target, *sample.noise_target);
      const auto r = eq::loss_only(params, std::span<const eq::LossSample>(&sample, 1));
      total += r.loss + offset;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Sampling

void SampleConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("sample: steps must be >= 1");
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw std::invalid_argument("sample: eps must be finite and >= 0");
  if (!(gamma_floor > 0.0)) throw std::invalid_argument("sample: gamma floor must be > 0");
}

double SampleConfig::eps_at(double tau) const {
  switch (profile) {
    case EpsProfile::constant: return eps;
    case EpsProfile::bridge: return eps * 4.0 * tau * (1.0 - tau);
  }
  return eps;
}

NoiseSource rng_noise(std::mt19937_64& rng) {
  return [&rng](const TensorCloud& like) { return sample_gaussian_like(like, NoiseScales{1.0, 1.0}, rng); };
}

Context make_context(std::span<const int> labels, const TensorCloud& x_t, const eq::EquiNetParams& params,
                     const Schedule& s) {
  Context ctx;
  ctx.params = &params;
  ctx.x_tilde = eq::condition(labels, x_t, params);
  ctx.x0 = s.data_source() ? x_t : zeros_like(x_t);
  return ctx;
}

namespace {

double g_floor(const Schedule& s, double floor_tau) {
  const double t = std::clamp(floor_tau, 0.0, 0.5);
  return std::min(s.at(t).g, s.at(1.0 - t).g);
}

// Per-modality gamma at tau, clamped below.
std::pair<double, double> clamped_gamma(const Schedule& s, double tau, double floor_tau) {
  const double g = std::max(s.at(tau).g, g_floor(s, floor_tau));
  return {s.sigma_v() * g, s.sigma_p() * g};
}

void require_finite(const TensorCloud& x, double tau) {
  auto bad = [](double v) { return !std::isfinite(v); };
  if (std::any_of(x.features().begin(), x.features().end(), bad) ||
      std::any_of(x.positions().begin(), x.positions().end(), bad)) {
    throw std::runtime_error("sampler: non-finite state at tau=" + std::to_string(tau));
  }
}

}  // namespace

Estimates estimate(const Context& ctx, const TensorCloud& x_tau, double tau, const Schedule& s, double floor_tau) {
  const auto pred =
      eq::heads_forward(ctx.x_tilde, x_tau, tau, *ctx.params, {s.uses_drift(), s.uses_noise()}, s.disp_scale(tau));
  Estimates e{pred.drift, pred.noise};
  if (s.uses_drift() && s.uses_noise()) return e;
  const auto c = s.at(tau);
  const double sv = s.sigma_v(), sp = s.sigma_p();
  // x_tau - A X0 is the part explained by B X1 + gamma Z.
  const TensorCloud r = combine({{1.0, 1.0, &x_tau}, {-c.a, -c.a, &ctx.x0}}, x_tau);
  if (!s.uses_drift()) {
    // X1 ~ (r - gamma eta) / B, so b = A' X0 + B'/B (r - gamma eta) + gamma' eta.
    const double b = std::max(c.b, s.at(std::clamp(floor_tau, 0.0, 1.0)).b);
    const double q = c.db / b;
    e.drift = combine({{c.da, c.da, &ctx.x0},
                       {q, q, &r},
                       {sv * (c.dg - q * c.g), sp * (c.dg - q * c.g), &e.noise}},
                      x_tau);
  } else {
    // Solve r = B X1 + gamma Z, b - A' X0 = B' X1 + gamma' Z for Z.
    const double den = c.db * c.g - c.b * c.dg;  // per unit sigma
    if (den == 0.0) throw std::runtime_error("estimate: cannot recover noise at tau=" + std::to_string(tau));
    const TensorCloud bd = combine({{1.0, 1.0, &e.drift}, {-c.da, -c.da, &ctx.x0}}, x_tau);
    e.noise = combine({{c.db / (sv * den), c.db / (sp * den), &r}, {-c.b / (sv * den), -c.b / (sp * den), &bd}}, x_tau);
  }
  return e;
}

TensorCloud sample_step_ode(const Context& ctx, const TensorCloud& x_tau, double tau, double dtau, const Schedule& s) {
  if (!(tau >= 0.0 && tau + dtau <= 1.0 + 1e-12)) throw std::domain_error("sampler: step leaves [0, 1]");
  const TensorCloud drift = s.uses_drift()
                                ? eq::heads_forward(ctx.x_tilde, x_tau, tau, *ctx.params, {true, false}, s.disp_scale(tau)).drift
                                : estimate(ctx, x_tau, tau, s, 0.5 * dtau).drift;
  TensorCloud out = combine({{1.0, 1.0, &x_tau}, {dtau, dtau, &drift}}, x_tau);
  require_finite(out, tau);
  return out;
}

TensorCloud sample_step_sde(const Context& ctx, const TensorCloud& x_tau, double tau, double dtau, const Schedule& s,
                            const SampleConfig& config, const NoiseSource& noise, bool kick) {
  const double eps = config.eps_at(tau);
  if (eps == 0.0) return sample_step_ode(ctx, x_tau, tau, dtau, s);
  if (!(tau >= 0.0 && tau + dtau <= 1.0 + 1e-12)) throw std::domain_error("sampler: step leaves [0, 1]");
  const double floor_tau = config.gamma_floor * dtau;
  const auto e = estimate(ctx, x_tau, tau, s, floor_tau);
  const auto [gv, gp] = clamped_gamma(s, tau, floor_tau);
  TensorCloud out = combine({{1.0, 1.0, &x_tau}, {dtau, dtau, &e.drift}, {-eps * dtau / gv, -eps * dtau / gp, &e.noise}},
                            x_tau);
  if (kick) {
    const double amp = config.literal_kick ? std::sqrt(2.0 * eps) : std::sqrt(2.0 * eps * dtau);
    const TensorCloud z = noise(x_tau);
    out = combine({{1.0, 1.0, &out}, {amp, amp, &z}}, x_tau);
  }
  require_finite(out, tau);
  return out;
}

TensorCloud generate_next(std::span<const int> labels, const TensorCloud& x_t, const eq::EquiNetParams& params,
                          const Schedule& s, const SampleConfig& config, const NoiseSource& noise) {
  config.validate();
  const Context ctx = make_context(labels, x_t, params, s);
  TensorCloud x = s.data_source() ? x_t : scaled_noise(s, s.at(0.0).g, noise(x_t));
  const double dtau = 1.0 / static_cast<double>(config.steps);
  for (int k = 0; k < config.steps; ++k) {
    const double tau = static_cast<double>(k) * dtau;
    const bool last = k + 1 == config.steps;
    x = sample_step_sde(ctx, x, tau, dtau, s, config, noise, !(last && config.final_noiseless));
  }
  return x;
}

TensorCloud generate_next(std::span<const int> labels, const TensorCloud& x_t, const eq::EquiNetParams& params,
                          const Schedule& s, const SampleConfig& config, std::mt19937_64& rng) {
  return generate_next(labels, x_t, params, s, config, rng_noise(rng));
}

Trajectory rollout(std::span<const int> labels, const TensorCloud& x_0, long n_steps, const eq::EquiNetParams& params,
                   const Schedule& s, const SampleConfig& config, std::mt19937_64& rng) {
  if (n_steps < 0) throw std::invalid_argument("rollout: negative step count");
  Trajectory traj;
  traj.spec = x_0.spec();
  traj.n_nodes = x_0.size();
  traj.labels.assign(labels.begin(), labels.end());
  traj.mask = x_0.mask();
  traj.frames.push_back(x_0);
  const auto noise = rng_noise(rng);
  for (long step = 0; step < n_steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    TensorCloud next;
    try {
      next = generate_next(labels, traj.frames.back(), params, s, config, noise);
    } catch (const std::runtime_error& e) {
      traj.status = "truncated at step " + std::to_string(step + 1) + ": " + e.what();
      break;
    }
    traj.step_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    traj.frames.push_back(std::move(next));
  }
  return traj;
}

}  // namespace tensorjump::transport
