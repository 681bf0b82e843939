#pragma once

// Staleness matrices tau(t, i) for consistent-read asynchrony.

#include "apsgd/error.hpp"
#include "apsgd/random.hpp"

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace apsgd {

class DelaySchedule {
 public:
  DelaySchedule() = default;

  DelaySchedule(std::int64_t K, std::int64_t M, std::int64_t T, std::vector<std::int64_t> tau)
      : K_(K), M_(M), T_(T), tau_(std::move(tau)) {
    require(K >= 0 && M >= 1 && T >= 0, "schedule: need K >= 0, M >= 1, T >= 0");
    require(static_cast<std::int64_t>(tau_.size()) == K * M, "schedule: tau must have K*M entries");
    for (std::int64_t t = 0; t < K; ++t)
      for (std::int64_t i = 0; i < M; ++i) {
        const auto v = at(t, i);
        require(v >= 0 && v <= std::min(t, T), "schedule: tau(" + std::to_string(t) + "," + std::to_string(i) +
                                                   ") = " + std::to_string(v) + " outside [0, min(t, T)]");
      }
  }

  static DelaySchedule zeros(std::int64_t K, std::int64_t M, std::int64_t T = 0) {
    return DelaySchedule(K, M, T, std::vector<std::int64_t>(static_cast<std::size_t>(K * M), 0));
  }

  std::int64_t K() const { return K_; }
  std::int64_t M() const { return M_; }
  std::int64_t T() const { return T_; }

  std::int64_t at(std::int64_t t, std::int64_t i) const { return tau_[static_cast<std::size_t>(t * M_ + i)]; }
  std::int64_t operator()(std::int64_t t, std::int64_t i) const { return at(t, i); }

  std::vector<std::int64_t> row(std::int64_t t) const {
    return {tau_.begin() + t * M_, tau_.begin() + (t + 1) * M_};
  }

  std::int64_t max_delay() const { return tau_.empty() ? 0 : *std::max_element(tau_.begin(), tau_.end()); }
  const std::vector<std::int64_t>& data() const { return tau_; }

  // First `K` steps of this schedule.
  DelaySchedule prefix(std::int64_t K) const {
    require(K <= K_, "schedule: prefix longer than schedule");
    return DelaySchedule(K, M_, T_, {tau_.begin(), tau_.begin() + K * M_});
  }

  friend bool operator==(const DelaySchedule& a, const DelaySchedule& b) {
    return a.K_ == b.K_ && a.M_ == b.M_ && a.T_ == b.T_ && a.tau_ == b.tau_;
  }

  void write_csv(std::ostream& os) const {
    os << "t,i,tau\n";
    for (std::int64_t t = 0; t < K_; ++t)
      for (std::int64_t i = 0; i < M_; ++i) os << t << ',' << i << ',' << at(t, i) << '\n';
  }

 private:
  std::int64_t K_ = 0;
  std::int64_t M_ = 1;
  std::int64_t T_ = 0;
  std::vector<std::int64_t> tau_;
};

enum class DelayModelKind { Constant, Uniform, RoundRobin, AdversarialMax };

struct DelayModel {
  DelayModelKind kind = DelayModelKind::Constant;
  std::int64_t constant = 0;  // Constant
  std::int64_t workers = 1;   // RoundRobin

  static DelayModel constant_delay(std::int64_t c) { return {DelayModelKind::Constant, c, 1}; }
  static DelayModel uniform() { return {DelayModelKind::Uniform, 0, 1}; }
  static DelayModel round_robin(std::int64_t W) { return {DelayModelKind::RoundRobin, 0, W}; }
  static DelayModel adversarial_max() { return {DelayModelKind::AdversarialMax, 0, 1}; }
};

inline std::string to_string(DelayModelKind k) {
  switch (k) {
    case DelayModelKind::Constant: return "constant";
    case DelayModelKind::Uniform: return "uniform";
    case DelayModelKind::RoundRobin: return "round_robin";
    case DelayModelKind::AdversarialMax: return "adversarial_max";
  }
  return "unknown";
}

inline DelayModelKind delay_model_from_string(const std::string& s) {
  if (s == "constant") return DelayModelKind::Constant;
  if (s == "uniform") return DelayModelKind::Uniform;
  if (s == "round_robin") return DelayModelKind::RoundRobin;
  if (s == "adversarial_max") return DelayModelKind::AdversarialMax;
  throw PreconditionError("unknown schedule model '" + s + "'");
}

// Delays before step T are clipped to t: there is no iterate before x_0.
inline DelaySchedule generate(const DelayModel& model, std::int64_t K, std::int64_t M, std::int64_t T,
                              std::uint64_t seed) {
  require(K >= 0 && M >= 1 && T >= 0, "generate: need K >= 0, M >= 1, T >= 0");
  std::vector<std::int64_t> tau(static_cast<std::size_t>(K * M));
  switch (model.kind) {
    case DelayModelKind::Constant: {
      require(model.constant >= 0 && model.constant <= T, "generate: constant delay c must satisfy 0 <= c <= T");
      for (std::int64_t t = 0; t < K; ++t)
        for (std::int64_t i = 0; i < M; ++i) tau[t * M + i] = std::min(t, model.constant);
      break;
    }
    case DelayModelKind::Uniform: {
      Stream rs = stream_for(seed, {stream_tag::kSchedule});
      for (std::int64_t t = 0; t < K; ++t)
        for (std::int64_t i = 0; i < M; ++i) tau[t * M + i] = rs.uniform_int(0, std::min(t, T));
      break;
    }
    case DelayModelKind::RoundRobin: {
      // W workers served in turn: each gradient was computed W-1 updates ago
      // once the pipeline is full.
      require(model.workers >= 1, "generate: round_robin needs W >= 1");
      require(model.workers - 1 <= T, "generate: round_robin with W workers needs T >= W - 1");
      for (std::int64_t t = 0; t < K; ++t)
        for (std::int64_t i = 0; i < M; ++i) tau[t * M + i] = std::min(t, model.workers - 1);
      break;
    }
    case DelayModelKind::AdversarialMax: {
      for (std::int64_t t = 0; t < K; ++t)
        for (std::int64_t i = 0; i < M; ++i) tau[t * M + i] = std::min(t, T);
      break;
    }
  }
  return DelaySchedule(K, M, T, std::move(tau));
}

struct TraceEvent {
  std::int64_t apply_step = 0;
  std::int64_t snapshot_step = 0;
};

struct LiveTraceResult {
  DelaySchedule schedule;
  std::int64_t max_delay = 0;
  bool within_bound = true;
};

// Events must arrive grouped M per apply step, in step order. The resulting
// schedule's bound is max(configured T, largest observed delay).
inline LiveTraceResult from_live_trace(const std::vector<TraceEvent>& events, std::int64_t M, std::int64_t T) {
  require(M >= 1, "from_live_trace: M must be positive");
  require(static_cast<std::int64_t>(events.size()) % M == 0, "from_live_trace: events not grouped M per step");
  const std::int64_t K = static_cast<std::int64_t>(events.size()) / M;
  std::vector<std::int64_t> tau(events.size());
  LiveTraceResult res;
  for (std::int64_t t = 0; t < K; ++t) {
    for (std::int64_t i = 0; i < M; ++i) {
      const auto& e = events[static_cast<std::size_t>(t * M + i)];
      if (e.apply_step != t) throw RecordingError("from_live_trace: event out of step order");
      const auto delay = e.apply_step - e.snapshot_step;
      if (delay < 0)
        throw RecordingError("from_live_trace: snapshot step " + std::to_string(e.snapshot_step) +
                             " is after apply step " + std::to_string(e.apply_step));
      tau[static_cast<std::size_t>(t * M + i)] = delay;
      res.max_delay = std::max(res.max_delay, delay);
    }
  }
  res.within_bound = res.max_delay <= T;
  res.schedule = DelaySchedule(K, M, std::max(T, res.max_delay), std::move(tau));
  return res;
}

}  // namespace apsgd
