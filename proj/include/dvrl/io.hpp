#pragma once

// On-disk formats: DVRL-CKPT checkpoints, DVRL-DEMO demonstration sets and
// the metrics table. All binary payloads are little-endian with row-major
// 64-bit reals and end in an FNV-1a checksum over the preceding bytes.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dvrl/env.hpp"
#include "dvrl/net.hpp"

namespace dvrl {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrityError : public IoError {
 public:
  using IoError::IoError;
};

inline std::uint64_t fnv1a64(const char* data, std::size_t n) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

namespace detail {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const char* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void put_matrix(const Eigen::MatrixXd& m) {
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) put<double>(m(i, j));
  }
  void put_vector(const Eigen::VectorXd& v) {
    for (int i = 0; i < v.size(); ++i) put<double>(v[i]);
  }
  void put_magic(const char* s) { buf_.append(s); }
  void finish_to(const std::string& path) {
    const std::uint64_t sum = fnv1a64(buf_.data(), buf_.size());
    put<std::uint64_t>(sum);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write: " + path);
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError("short write: " + path);
  }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    buf_ = ss.str();
  }
  void verify_checksum(const std::string& what) {
    if (buf_.size() < 8) throw IntegrityError(what + ": truncated file");
    std::uint64_t stored;
    std::memcpy(&stored, buf_.data() + buf_.size() - 8, 8);
    if (stored != fnv1a64(buf_.data(), buf_.size() - 8))
      throw IntegrityError(what + ": checksum mismatch");
  }
  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    if (pos_ + sizeof(T) > buf_.size()) throw IntegrityError("truncated file");
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  Eigen::MatrixXd get_matrix(int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = get<double>();
    return m;
  }
  Eigen::VectorXd get_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = get<double>();
    return v;
  }
  void expect_magic(const char* s, const std::string& what) {
    const std::size_t n = std::strlen(s);
    if (pos_ + n > buf_.size() || buf_.compare(pos_, n, s) != 0)
      throw IntegrityError(what + ": bad magic");
    pos_ += n;
  }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

inline void put_env_config(Writer& w, const EnvConfig& c) {
  w.put<std::uint32_t>(c.kind == EnvKind::Reach ? 0 : 1);
  for (int i = 0; i < 3; ++i) w.put<double>(c.workspace.center[i]);
  w.put<double>(c.workspace.rho);
  w.put<double>(c.workspace.table_height);
  w.put<double>(c.workspace.eta);
  w.put<double>(c.delta);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.horizon));
  w.put<std::uint64_t>(c.seed);
  w.put<double>(c.grasp_radius);
}

inline EnvConfig get_env_config(Reader& r) {
  EnvConfig c;
  c.kind = r.get<std::uint32_t>() == 0 ? EnvKind::Reach : EnvKind::Pick;
  for (int i = 0; i < 3; ++i) c.workspace.center[i] = r.get<double>();
  c.workspace.rho = r.get<double>();
  c.workspace.table_height = r.get<double>();
  c.workspace.eta = r.get<double>();
  c.delta = r.get<double>();
  c.horizon = static_cast<int>(r.get<std::uint32_t>());
  c.seed = r.get<std::uint64_t>();
  c.grasp_radius = r.get<double>();
  return c;
}

inline void put_mlp_shape(Writer& w, const Mlp& net) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (int s : net.layer_sizes()) w.put<std::uint32_t>(s);
  w.put<std::uint8_t>(net.output_kind() == Mlp::Output::Tanh ? 1 : 0);
}

inline void put_mlp_params(Writer& w, const Mlp& net) {
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    w.put_matrix(net.weights()[l]);
    w.put_vector(net.biases()[l]);
  }
}

inline Mlp get_mlp_shape(Reader& r) {
  const auto n = r.get<std::uint32_t>();
  std::vector<int> sizes(n);
  for (auto& s : sizes) s = static_cast<int>(r.get<std::uint32_t>());
  const auto out =
      r.get<std::uint8_t>() ? Mlp::Output::Tanh : Mlp::Output::Linear;
  std::mt19937_64 rng(0);
  return Mlp::create(sizes, out, rng);
}

inline void get_mlp_params(Reader& r, Mlp& net) {
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    net.weights()[l] =
        r.get_matrix(static_cast<int>(net.weights()[l].rows()),
                     static_cast<int>(net.weights()[l].cols()));
    net.biases()[l] = r.get_vector(static_cast<int>(net.biases()[l].size()));
  }
}

}  // namespace detail

// --- Checkpoints ------------------------------------------------------------

struct Checkpoint {
  EnvConfig env;
  Mlp actor;
  Mlp critic;
  Mlp actor_target;
  Mlp critic_target;
};

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  detail::Writer w;
  w.put_magic("DVRL-CKPT");
  w.put<std::uint32_t>(1);  // format version
  detail::put_env_config(w, ck.env);
  detail::put_mlp_shape(w, ck.actor);
  detail::put_mlp_shape(w, ck.critic);
  detail::put_mlp_params(w, ck.actor);
  detail::put_mlp_params(w, ck.critic);
  detail::put_mlp_params(w, ck.actor_target);
  detail::put_mlp_params(w, ck.critic_target);
  w.finish_to(path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  detail::Reader r(path);
  r.verify_checksum(path);
  r.expect_magic("DVRL-CKPT", path);
  const auto version = r.get<std::uint32_t>();
  if (version != 1)
    throw IntegrityError(path + ": unsupported version " +
                         std::to_string(version));
  Checkpoint ck;
  ck.env = detail::get_env_config(r);
  ck.actor = detail::get_mlp_shape(r);
  ck.critic = detail::get_mlp_shape(r);
  ck.actor_target = ck.actor;
  ck.critic_target = ck.critic;
  detail::get_mlp_params(r, ck.actor);
  detail::get_mlp_params(r, ck.critic);
  detail::get_mlp_params(r, ck.actor_target);
  detail::get_mlp_params(r, ck.critic_target);
  return ck;
}

// --- Demonstration sets -----------------------------------------------------

inline void save_demo_set(const std::vector<Episode>& episodes,
                          const EnvConfig& env, const std::string& path) {
  detail::Writer w;
  w.put_magic("DVRL-DEMO");
  w.put<std::uint32_t>(1);
  detail::put_env_config(w, env);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(episodes.size()));
  for (const Episode& ep : episodes) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ep.length()));
    w.put<std::uint32_t>(
        static_cast<std::uint32_t>(ep.observations.front().size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ep.actions.front().size()));
    for (const auto& o : ep.observations) w.put_vector(o);
    for (const auto& a : ep.actions) w.put_vector(a);
    for (double r : ep.rewards) w.put<double>(r);
    for (const auto& ag : ep.achieved_goals) w.put_vector(ag);
    w.put_vector(ep.desired_goal);
    w.put<std::uint8_t>(ep.attached.empty() ? 0 : 1);
    for (std::uint8_t f : ep.attached) w.put<std::uint8_t>(f);
  }
  w.finish_to(path);
}

struct DemoSet {
  EnvConfig env;
  std::vector<Episode> episodes;
};

inline DemoSet load_demo_set(const std::string& path) {
  detail::Reader r(path);
  r.verify_checksum(path);
  r.expect_magic("DVRL-DEMO", path);
  const auto version = r.get<std::uint32_t>();
  if (version != 1)
    throw IntegrityError(path + ": unsupported version " +
                         std::to_string(version));
  DemoSet set;
  set.env = detail::get_env_config(r);
  const auto count = r.get<std::uint32_t>();
  set.episodes.resize(count);
  for (auto& ep : set.episodes) {
    const int len = static_cast<int>(r.get<std::uint32_t>());
    const int od = static_cast<int>(r.get<std::uint32_t>());
    const int ad = static_cast<int>(r.get<std::uint32_t>());
    ep.observations.resize(len + 1);
    for (auto& o : ep.observations) o = r.get_vector(od);
    ep.actions.resize(len);
    for (auto& a : ep.actions) a = r.get_vector(ad);
    ep.rewards.resize(len);
    for (auto& rv : ep.rewards) rv = r.get<double>();
    ep.achieved_goals.resize(len + 1);
    for (auto& ag : ep.achieved_goals) {
      const Eigen::VectorXd v = r.get_vector(3);
      ag = v;
    }
    const Eigen::VectorXd dg = r.get_vector(3);
    ep.desired_goal = dg;
    if (r.get<std::uint8_t>()) {
      ep.attached.resize(len + 1);
      for (auto& f : ep.attached) f = r.get<std::uint8_t>();
    }
  }
  return set;
}

// --- Metrics ----------------------------------------------------------------

struct EpochMetrics {
  int epoch = 0;
  double success_rate = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double bc_loss = 0.0;
  double wall_seconds = 0.0;
};

inline const char* metrics_header() {
  return "epoch,success_rate,critic_loss,actor_loss,bc_loss,wall_seconds";
}

inline std::string format_metrics_row(const EpochMetrics& m) {
  std::ostringstream ss;
  ss.precision(17);
  ss << m.epoch << ',' << m.success_rate << ',' << m.critic_loss << ','
     << m.actor_loss << ',' << m.bc_loss << ',' << m.wall_seconds;
  return ss.str();
}

inline std::vector<EpochMetrics> load_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file: " + path);
  std::vector<EpochMetrics> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != metrics_header())
        throw IoError(path + ":1: unexpected metrics header");
      continue;
    }
    if (line.empty()) continue;
    EpochMetrics m;
    char comma;
    std::istringstream ls(line);
    if (!(ls >> m.epoch >> comma >> m.success_rate >> comma >> m.critic_loss >>
          comma >> m.actor_loss >> comma >> m.bc_loss >> comma >>
          m.wall_seconds))
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": malformed metrics row");
    rows.push_back(m);
  }
  return rows;
}

}  // namespace dvrl
