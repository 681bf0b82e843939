#pragma once

#include "apsgd/error.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace apsgd {

struct BinomialInterval {
  double lower = 0.0;
  double upper = 1.0;
};

// Exact (Clopper-Pearson) two-sided interval at level 1 - alpha.
inline BinomialInterval clopper_pearson(std::int64_t successes, std::int64_t trials, double alpha = 0.05) {
  require(trials >= 1 && successes >= 0 && successes <= trials, "clopper_pearson: need 0 <= k <= n, n >= 1");
  require(alpha > 0 && alpha < 1, "clopper_pearson: alpha must be in (0, 1)");
  const double k = static_cast<double>(successes);
  const double n = static_cast<double>(trials);
  BinomialInterval ci;
  ci.lower = successes == 0 ? 0.0 : boost::math::ibeta_inv(k, n - k + 1.0, alpha / 2.0);
  ci.upper = successes == trials ? 1.0 : boost::math::ibeta_inv(k + 1.0, n - k, 1.0 - alpha / 2.0);
  return ci;
}

// One-sided lower confidence bound at level 1 - alpha.
inline double binomial_lower_bound(std::int64_t successes, std::int64_t trials, double alpha = 0.05) {
  require(trials >= 1 && successes >= 0 && successes <= trials, "binomial_lower_bound: need 0 <= k <= n, n >= 1");
  if (successes == 0) return 0.0;
  const double k = static_cast<double>(successes);
  return boost::math::ibeta_inv(k, static_cast<double>(trials) - k + 1.0, alpha);
}

// Mean of the two middle order statistics for even sizes.
inline double median(std::vector<double> v) {
  require(!v.empty(), "median: empty sample");
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

// Runs fn(0..n-1) across hardware threads. Each index must write only its
// own output slot; results are then independent of the thread count.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn, unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::int64_t>(threads, std::max<std::int64_t>(n, 1)));
  if (threads <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::int64_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace apsgd
