#include <charconv>
#include <map>
#include <sstream>

#include "tensorjump_cli/commands.hpp"

namespace tensorjump::cli {

namespace {

std::string num(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, p);
}

double to_double(const std::string& v) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw io::FormatError("checkpoint header: bad number '" + v + "'");
  return x;
}

int to_int(const std::string& v) {
  int x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw io::FormatError("checkpoint header: bad integer '" + v + "'");
  return x;
}

}  // namespace

std::string checkpoint_header(const equinet::NetConfig& net, const transport::Schedule& schedule,
                              const TrainSection& train, double lag_interval, std::uint64_t data_fingerprint) {
  const auto& b = net.block;
  std::ostringstream h;
  h << "model.H=" << b.H << "\nmodel.lmax=" << b.lmax << "\nmodel.k=" << b.k << "\nmodel.L_cond=" << b.L_cond
    << "\nmodel.L_header=" << b.L_header << "\nmodel.n_rbf=" << b.n_rbf << "\nmodel.cutoff=" << num(b.cutoff)
    << "\nmodel.state_spec=" << (net.state_spec.empty() ? "none" : net.state_spec.str())
    << "\nmodel.vocab=" << net.vocab << "\nmodel.tau_dim=" << net.tau_dim
    << "\nschedule.kind=" << transport::to_string(schedule.kind())
    << "\nschedule.sigma2_p=" << num(schedule.scales().sigma2_p)
    << "\nschedule.sigma2_v=" << num(schedule.scales().sigma2_v)
    << "\nschedule.delta_rms=" << num(schedule.data_scales().delta_rms)
    << "\nschedule.pos_rms=" << num(schedule.data_scales().pos_rms) << "\ndata.lag_interval=" << num(lag_interval)
    << "\ndata.fingerprint=" << data_fingerprint << "\ntrain.batch_size=" << train.batch_size
    << "\ntrain.lr_start=" << num(train.lr_start) << "\ntrain.lr_end=" << num(train.lr_end)
    << "\ntrain.lr_steps=" << (train.lr_steps > 0 ? train.lr_steps : train.steps)
    << "\ntrain.cluster_weights=" << (train.cluster_weights ? 1 : 0);
  if (train.cluster_weights) {
    h << "\ntrain.cluster_k=" << train.cluster_k << "\ntrain.cluster_tics=" << train.cluster_tics
      << "\ntrain.tica_lag=" << train.tica_lag;
  }
  h << "\ntrain.seed=" << train.seed << "\n";
  return h.str();
}

Model load_model(const io::Checkpoint& checkpoint) {
  std::map<std::string, std::string> kv;
  std::istringstream in(checkpoint.header);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw io::FormatError("checkpoint header: missing " + key);
    return it->second;
  };
  Model m;
  auto& b = m.net.block;
  b.H = to_int(get("model.H"));
  b.lmax = to_int(get("model.lmax"));
  b.k = to_int(get("model.k"));
  b.L_cond = to_int(get("model.L_cond"));
  b.L_header = to_int(get("model.L_header"));
  b.n_rbf = to_int(get("model.n_rbf"));
  b.cutoff = to_double(get("model.cutoff"));
  const auto& spec = get("model.state_spec");
  m.net.state_spec = spec == "none" ? IrrepsSpec{} : IrrepsSpec::parse(spec);
  m.net.vocab = to_int(get("model.vocab"));
  m.net.tau_dim = to_int(get("model.tau_dim"));
  m.net.validate();

  NoiseScales scales;
  scales.sigma2_p = to_double(get("schedule.sigma2_p"));
  scales.sigma2_v = to_double(get("schedule.sigma2_v"));
  m.schedule = transport::make_schedule(transport::parse_kind(get("schedule.kind")), scales);
  m.schedule.set_data_scales({to_double(get("schedule.delta_rms")), to_double(get("schedule.pos_rms"))});
  m.lag_interval = to_double(get("data.lag_interval"));

  m.params = equinet::init_params(m.net, 0);
  if (m.params.flat.size() != checkpoint.params.size()) {
    throw io::FormatError("checkpoint holds " + std::to_string(checkpoint.params.size()) +
                          " parameters, the header's model needs " + std::to_string(m.params.flat.size()));
  }
  m.params.flat = checkpoint.resume ? checkpoint.resume->params : checkpoint.params;
  return m;
}

Model load_model(const std::string& path) { return load_model(io::read_checkpoint(path)); }

}  // namespace tensorjump::cli
