#pragma once

// Vectorized rollout engine: n isolated environment instances stepped by
// worker threads in synchronized rounds. Workers share nothing; the policy
// snapshot they receive is read-only and each instance owns its generators,
// so results are reproducible per (seed_base, instance) regardless of
// scheduling.

#include <chrono>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dvrl/env.hpp"

namespace dvrl {

struct TimingReport {
  int n_envs = 0;
  double seconds = 0.0;  // wall time for one synchronized round
  int episodes = 0;
  long steps = 0;

  double steps_per_second() const {
    return seconds > 0 ? static_cast<double>(steps) / seconds : 0.0;
  }
  double episodes_per_second() const {
    return seconds > 0 ? static_cast<double>(episodes) / seconds : 0.0;
  }
};

class VecEnv {
 public:
  VecEnv(int n, EnvConfig config, std::uint64_t seed_base) {
    if (n < 1) throw std::invalid_argument("need at least one instance");
    for (int i = 0; i < n; ++i) {
      EnvConfig c = config;
      c.seed = seed_base + static_cast<std::uint64_t>(i);
      envs_.emplace_back(c);
      // Separate stream for per-instance exploration noise.
      noise_rngs_.emplace_back(c.seed ^ 0x9e3779b97f4a7c15ULL);
    }
  }

  int size() const { return static_cast<int>(envs_.size()); }
  const EnvConfig& config() const { return envs_.front().config(); }

  // One synchronized round: every instance runs `episodes_per_instance`
  // episodes to completion. Episodes come back grouped by instance id.
  std::vector<Episode> rollout(const Policy& policy, int episodes_per_instance,
                               TimingReport* timing = nullptr) {
    const int n = size();
    std::vector<Episode> out(
        static_cast<std::size_t>(n) * episodes_per_instance);
    std::vector<std::exception_ptr> errors(n);

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::thread> workers;
    workers.reserve(n);
    for (int i = 0; i < n; ++i) {
      workers.emplace_back([this, i, episodes_per_instance, &policy, &out,
                            &errors] {
        try {
          for (int j = 0; j < episodes_per_instance; ++j)
            out[static_cast<std::size_t>(i) * episodes_per_instance + j] =
                run_episode(envs_[i], policy, noise_rngs_[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    const auto t1 = std::chrono::steady_clock::now();

    for (int i = 0; i < n; ++i) {
      if (errors[i]) {
        try {
          std::rethrow_exception(errors[i]);
        } catch (const std::exception& e) {
          throw std::runtime_error("rollout instance " + std::to_string(i) +
                                   " failed: " + e.what());
        }
      }
    }

    if (timing) {
      timing->n_envs = n;
      timing->seconds = std::chrono::duration<double>(t1 - t0).count();
      timing->episodes = static_cast<int>(out.size());
      timing->steps = 0;
      for (const auto& ep : out) timing->steps += ep.length();
    }
    return out;
  }

 private:
  std::vector<Environment> envs_;
  std::vector<std::mt19937_64> noise_rngs_;
};

inline VecEnv spawn(int n, const EnvConfig& config, std::uint64_t seed_base) {
  return VecEnv(n, config, seed_base);
}

}  // namespace dvrl
