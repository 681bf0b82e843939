#include "apsgd/delay.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace apsgd;

TEST(Delay, ConstantZeroIsSynchronous) {
  const auto s = generate(DelayModel::constant_delay(0), 50, 3, 4, 1);
  EXPECT_EQ(s, DelaySchedule::zeros(50, 3, 4));
  EXPECT_EQ(s.max_delay(), 0);
}

TEST(Delay, RoundRobinPipelineFill) {
  const auto s = generate(DelayModel::round_robin(3), 10, 2, 2, 0);
  for (std::int64_t i = 0; i < 2; ++i) {
    EXPECT_EQ(s(0, i), 0);
    EXPECT_EQ(s(1, i), 1);
    for (std::int64_t t = 2; t < 10; ++t) EXPECT_EQ(s(t, i), 2);
  }
}

TEST(Delay, AdversarialMaxClipped) {
  const auto s = generate(DelayModel::adversarial_max(), 10, 2, 5, 0);
  EXPECT_EQ(s(2, 0), 2);
  EXPECT_EQ(s(2, 1), 2);
  EXPECT_EQ(s(7, 0), 5);
  EXPECT_EQ(s(7, 1), 5);
}

TEST(Delay, RejectsInconsistentModels) {
  EXPECT_THROW(generate(DelayModel::constant_delay(3), 5, 1, 2, 0), PreconditionError);
  EXPECT_THROW(generate(DelayModel::round_robin(0), 5, 1, 2, 0), PreconditionError);
  EXPECT_THROW(generate(DelayModel::round_robin(4), 5, 1, 2, 0), PreconditionError);
  EXPECT_THROW(DelaySchedule(2, 1, 1, {0, 2}), PreconditionError);
  EXPECT_THROW(DelaySchedule(2, 1, 1, {1, 0}), PreconditionError);
  EXPECT_THROW(delay_model_from_string("fifo"), PreconditionError);
}

TEST(DelayProperty, EveryGeneratorRespectsBound) {
  for (std::int64_t T = 0; T <= 6; ++T) {
    std::vector<DelayModel> models = {DelayModel::uniform(), DelayModel::adversarial_max()};
    for (std::int64_t c = 0; c <= T; ++c) models.push_back(DelayModel::constant_delay(c));
    for (std::int64_t W = 1; W <= T + 1; ++W) models.push_back(DelayModel::round_robin(W));
    for (const auto& m : models)
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto s = generate(m, 40, 3, T, seed);
        for (std::int64_t t = 0; t < 40; ++t)
          for (std::int64_t i = 0; i < 3; ++i) {
            ASSERT_GE(s(t, i), 0);
            ASSERT_LE(s(t, i), std::min(t, T));
          }
      }
  }
}

TEST(DelayProperty, UniformCoversRangeAndIsSeedDeterministic) {
  const auto a = generate(DelayModel::uniform(), 400, 4, 3, 11);
  EXPECT_EQ(a, generate(DelayModel::uniform(), 400, 4, 3, 11));
  EXPECT_FALSE(a == generate(DelayModel::uniform(), 400, 4, 3, 12));
  std::vector<int> counts(4, 0);
  for (std::int64_t t = 3; t < 400; ++t)
    for (std::int64_t i = 0; i < 4; ++i) ++counts[static_cast<std::size_t>(a(t, i))];
  for (int c : counts) EXPECT_GT(c, 300);
}

TEST(Delay, LiveTraceZeroDelay) {
  std::vector<TraceEvent> ev;
  for (std::int64_t t = 0; t < 5; ++t)
    for (int i = 0; i < 2; ++i) ev.push_back({t, t});
  const auto r = from_live_trace(ev, 2, 0);
  EXPECT_EQ(r.schedule, DelaySchedule::zeros(5, 2, 0));
  EXPECT_EQ(r.max_delay, 0);
  EXPECT_TRUE(r.within_bound);
}

TEST(Delay, LiveTraceLaggingWorkerColumn) {
  std::vector<TraceEvent> ev;
  for (std::int64_t t = 0; t < 12; ++t) {
    ev.push_back({t, t});
    ev.push_back({t, std::max<std::int64_t>(0, t - 4)});
  }
  const auto r = from_live_trace(ev, 2, 2);
  EXPECT_EQ(r.max_delay, 4);
  EXPECT_FALSE(r.within_bound);
  for (std::int64_t t = 4; t < 12; ++t) {
    EXPECT_EQ(r.schedule(t, 0), 0);
    EXPECT_EQ(r.schedule(t, 1), 4);
  }
}

TEST(Delay, LiveTraceCausalityViolation) {
  EXPECT_THROW(from_live_trace({{0, 0}, {1, 2}}, 1, 3), RecordingError);
  EXPECT_THROW(from_live_trace({{1, 0}}, 1, 3), RecordingError);
}

TEST(Delay, CsvLayout) {
  std::ostringstream os;
  generate(DelayModel::adversarial_max(), 2, 2, 1, 0).write_csv(os);
  EXPECT_EQ(os.str(), "t,i,tau\n0,0,0\n0,1,0\n1,0,1\n1,1,1\n");
}
