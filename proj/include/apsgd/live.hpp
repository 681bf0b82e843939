#pragma once

// In-process master/worker execution. Workers pull an atomic snapshot of the
// current iterate, compute one stochastic gradient, and push it tagged with
// the snapshot step. The master applies M arrived gradients per step. The
// delays are whatever the thread interleaving produces; they are recorded and
// returned as a measured schedule.

#include "apsgd/delay.hpp"
#include "apsgd/engine.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace apsgd {

struct LiveConfig {
  HyperParams h;
  const StochasticOracle* oracle = nullptr;
  std::int64_t workers = 1;
  std::uint64_t seed = 0;
  Vector x0;
  std::int64_t K = 0;
  // A measured delay above this aborts the run.
  std::int64_t delay_cap = 10000;
  // W = 1 only: the worker computes all M gradients of step t at x_t with
  // theta = slot_key(seed, t, i), then waits for x_{t+1}.
  bool handshake = false;
};

struct LiveResult {
  Trajectory trajectory;  // trajectory.schedule is the measured schedule
  std::int64_t max_delay = 0;
  bool within_bound = true;
};

namespace live_detail {

struct Submission {
  Vector g;
  std::int64_t snapshot_step = 0;
  SampleKey theta = 0;
  std::uint64_t ticket = 0;
};

// Rendezvous channel: push returns only after the master has taken the item
// (or the channel is closed). Items are served in push order.
class Handoff {
 public:
  bool push(Submission s) {
    std::unique_lock lk(mu_);
    if (closed_) return false;
    s.ticket = next_ticket_++;
    const auto ticket = s.ticket;
    queue_.push_back(std::move(s));
    cv_.notify_all();
    cv_.wait(lk, [&] { return closed_ || served_ > ticket; });
    return served_ > ticket;
  }

  std::optional<Submission> pop() {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return closed_ || !queue_.empty(); });
    if (queue_.empty()) return std::nullopt;
    Submission s = std::move(queue_.front());
    queue_.pop_front();
    served_ = s.ticket + 1;
    cv_.notify_all();
    return s;
  }

  void close() {
    std::lock_guard lk(mu_);
    closed_ = true;
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Submission> queue_;
  std::uint64_t next_ticket_ = 0;
  std::uint64_t served_ = 0;
  bool closed_ = false;
};

// The published iterate and its step index, read and written as a whole.
class Snapshot {
 public:
  explicit Snapshot(Vector x0) : x_(std::move(x0)) {}

  std::pair<Vector, std::int64_t> read() const {
    std::lock_guard lk(mu_);
    return {x_, step_};
  }

  void publish(const Vector& x, std::int64_t step) {
    {
      std::lock_guard lk(mu_);
      x_ = x;
      step_ = step;
    }
    cv_.notify_all();
  }

  // Block until the published step is at least `step` or `stop` is set.
  std::optional<std::pair<Vector, std::int64_t>> wait_for(std::int64_t step, const std::atomic<bool>& stop) const {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return stop.load() || step_ >= step; });
    if (step_ < step) return std::nullopt;
    return std::make_pair(x_, step_);
  }

  void wake() const { cv_.notify_all(); }

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  Vector x_;
  std::int64_t step_ = 0;
};

}  // namespace live_detail

inline LiveResult run_live(const LiveConfig& cfg) {
  using namespace live_detail;
  require(cfg.oracle != nullptr, "run_live: oracle required");
  require(cfg.workers >= 1, "run_live: need W >= 1");
  require(cfg.K >= 0, "run_live: K must be non-negative");
  require(!cfg.handshake || cfg.workers == 1, "run_live: handshake mode needs W = 1");
  require(cfg.delay_cap >= 0, "run_live: delay cap must be non-negative");
  const Eigen::Index d = cfg.oracle->dim();
  require(cfg.x0.size() == d && cfg.x0.allFinite(), "run_live: x0 must be finite with dimension d");

  const std::int64_t K = cfg.K;
  const std::int64_t M = cfg.h.M();
  const StochasticOracle& oracle = *cfg.oracle;

  Snapshot snap(cfg.x0);
  Handoff chan;
  std::atomic<bool> stop{false};
  std::exception_ptr worker_error;
  std::mutex err_mu;

  auto worker_main = [&](std::int64_t w) {
    try {
      if (cfg.handshake) {
        for (std::int64_t v = 0; v < K; ++v) {
          auto got = snap.wait_for(v, stop);
          if (!got) return;
          for (std::int64_t i = 0; i < M; ++i) {
            const SampleKey theta = slot_key(cfg.seed, got->second, i);
            if (!chan.push({sample_gradient(oracle, got->first, theta), got->second, theta, 0})) return;
          }
        }
        return;
      }
      for (std::uint64_t n = 0; !stop.load(); ++n) {
        auto [x, step] = snap.read();
        const SampleKey theta = derive_key(cfg.seed, {stream_tag::kLiveWorker, static_cast<std::uint64_t>(w), n});
        if (!chan.push({sample_gradient(oracle, x, theta), step, theta, 0})) return;
      }
    } catch (...) {
      std::lock_guard lk(err_mu);
      if (!worker_error) worker_error = std::current_exception();
      stop = true;
      chan.close();
      snap.wake();
    }
  };

  Trajectory tr;
  tr.params = cfg.h;
  tr.seed = cfg.seed;
  tr.x.resize(d, K + 1);
  tr.zeta.resize(d, K);
  tr.grads.resize(d, K * M);
  tr.source_step.resize(static_cast<std::size_t>(K * M));
  tr.theta.resize(static_cast<std::size_t>(K * M));
  tr.x.col(0) = cfg.x0;
  std::vector<TraceEvent> events;
  events.reserve(static_cast<std::size_t>(K * M));

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(cfg.workers));
  for (std::int64_t w = 0; w < cfg.workers; ++w) pool.emplace_back(worker_main, w);

  auto shutdown = [&] {
    stop = true;
    chan.close();
    snap.wake();
    for (auto& th : pool) th.join();
  };

  try {
    for (std::int64_t t = 0; t < K; ++t) {
      for (std::int64_t i = 0; i < M; ++i) {
        auto sub = chan.pop();
        if (!sub) throw RecordingError("run_live: workers stopped before the run finished");
        const auto k = t * M + i;
        const std::int64_t delay = t - sub->snapshot_step;
        if (delay > cfg.delay_cap)
          throw PreconditionError("run_live: measured delay " + std::to_string(delay) + " exceeds cap " +
                                  std::to_string(cfg.delay_cap));
        tr.grads.col(k) = sub->g;
        tr.source_step[static_cast<std::size_t>(k)] = sub->snapshot_step;
        tr.theta[static_cast<std::size_t>(k)] = sub->theta;
        events.push_back({t, sub->snapshot_step});
      }
      tr.zeta.col(t) = perturbation(cfg.seed, t, d, cfg.h.r());
      const Vector next = apply_update(tr.x.col(t), tr.grads.middleCols(t * M, M), tr.zeta.col(t), cfg.h.eta);
      check_finite_iterate(next, t);
      tr.x.col(t + 1) = next;
      snap.publish(next, t + 1);
    }
  } catch (...) {
    shutdown();
    if (worker_error) std::rethrow_exception(worker_error);
    throw;
  }
  shutdown();
  if (worker_error) std::rethrow_exception(worker_error);

  auto measured = from_live_trace(events, M, cfg.h.T());
  tr.schedule = measured.schedule;
  LiveResult res;
  res.trajectory = std::move(tr);
  res.max_delay = measured.max_delay;
  res.within_bound = measured.within_bound;
  return res;
}

}  // namespace apsgd
