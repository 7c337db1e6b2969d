#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <sstream>

#include "oracles.hpp"

using namespace gapsroute;

namespace {

std::vector<LinkIndex> all_links(std::size_t k) {
  std::vector<LinkIndex> v(k);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

PolicyTable row_table(const std::vector<double>& theta, double temperature = 1.0) {
  PolicyTable p(1, theta.size(), {.temperature = temperature});
  for (std::size_t a = 0; a < theta.size(); ++a) p.theta(0, a) = theta[a];
  return p;
}

}  // namespace

TEST(Softmax, UniformRow) {
  for (double temp : {0.5, 1.0, 3.0}) {
    const auto p = action_probabilities(row_table({0, 0, 0}, temp), 0, all_links(3));
    for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  }
}

TEST(Softmax, LnTwoGivesOneThirdTwoThirds) {
  const auto p = action_probabilities(row_table({0, std::log(2.0)}), 0, all_links(2));
  EXPECT_NEAR(p[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, HugeGapStaysFiniteAndPositive) {
  const auto p = action_probabilities(row_table({1000, 0}), 0, all_links(2));
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_GT(p[1], 0.0);
  EXPECT_LT(p[1], 1e-300);
}

TEST(Softmax, RestrictedToAvailableLinks) {
  const PolicyTable t = row_table({5.0, 0.0, std::log(3.0)});
  const std::vector<LinkIndex> avail{1, 2};
  const auto p = action_probabilities(t, 0, avail);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, Errors) {
  const PolicyTable t = row_table({0, 0});
  EXPECT_THROW(action_probabilities(t, 0, {}), PolicyError);
  const std::vector<LinkIndex> bad{0, 2};
  EXPECT_THROW(action_probabilities(t, 0, bad), PolicyError);
  EXPECT_THROW(action_probabilities(t, 1, all_links(2)), PolicyError);
  EXPECT_THROW(PolicyTable(1, 2, {.temperature = 0.0}), PolicyError);
  EXPECT_THROW(PolicyTable(1, 2, {.learning_rate = -1.0}), PolicyError);
  EXPECT_THROW(PolicyTable(1, 2, {.discount = 1.5}), PolicyError);
}

TEST(Sampling, SingleActionAlwaysChosen) {
  const PolicyTable t = row_table({3.0, -1.0, 2.0});
  const std::vector<LinkIndex> one{2};
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_action(t, 0, one, rng), 2u);
}

TEST(Sampling, UniformFrequenciesWithinThreeSigma) {
  const PolicyTable t = row_table({0, 0, 0});
  std::mt19937_64 rng(11);
  const int n = 100000;
  std::array<int, 3> counts{};
  for (int i = 0; i < n; ++i) ++counts[sample_action(t, 0, all_links(3), rng)];
  const double sigma = std::sqrt(n * (1.0 / 3.0) * (2.0 / 3.0));
  for (int c : counts) EXPECT_LT(std::abs(c - n / 3.0), 3.0 * sigma);
}

TEST(Sampling, MatchesProbabilitiesOnSkewedRow) {
  const PolicyTable t = row_table({0.0, 1.0, -0.5, 2.0});
  const auto probs = action_probabilities(t, 0, all_links(4));
  std::mt19937_64 rng(5);
  const int n = 200000;
  std::array<int, 4> counts{};
  for (int i = 0; i < n; ++i) ++counts[sample_action(t, 0, all_links(4), rng)];
  for (std::size_t a = 0; a < 4; ++a) {
    const double sigma = std::sqrt(n * probs[a] * (1 - probs[a]));
    EXPECT_LT(std::abs(counts[a] - n * probs[a]), 3.0 * sigma) << a;
  }
}

TEST(Sampling, SeededSequenceRepeats) {
  const PolicyTable t = row_table({0.1, 0.7, -0.3});
  std::mt19937_64 a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(sample_action(t, 0, all_links(3), a), sample_action(t, 0, all_links(3), b));
  }
}

TEST(Gradient, TwoUniformActions) {
  const auto g = grad_log_prob(row_table({0, 0}), 0, 1, all_links(2));
  EXPECT_EQ(g.observation, 0u);
  EXPECT_NEAR(g.values[0], -0.5, 1e-15);
  EXPECT_NEAR(g.values[1], 0.5, 1e-15);
}

TEST(Gradient, ThreeCaseFormula) {
  PolicyTable t(3, 3, {.temperature = 2.0});
  t.theta(1, 0) = 0.3;
  t.theta(1, 1) = -1.2;
  t.theta(1, 2) = 0.9;
  const auto mu = action_probabilities(t, 1, all_links(3));
  const auto g = grad_log_prob(t, 1, 2, all_links(3));
  EXPECT_EQ(g.observation, 1u);
  EXPECT_NEAR(g.values[0], -mu[0] / 2.0, 1e-15);
  EXPECT_NEAR(g.values[1], -mu[1] / 2.0, 1e-15);
  EXPECT_NEAR(g.values[2], (1.0 - mu[2]) / 2.0, 1e-15);
}

TEST(Gradient, UnavailableLinksGetZero) {
  const PolicyTable t = row_table({0.4, 1.0, -2.0});
  const std::vector<LinkIndex> avail{0, 2};
  const auto g = grad_log_prob(t, 0, 0, avail);
  EXPECT_EQ(g.values[1], 0.0);
  EXPECT_THROW(grad_log_prob(t, 0, 1, avail), PolicyError);
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> theta_draw(-3.0, 3.0);
  const double temps[] = {0.5, 1.0, 2.0};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + trial % 4;
    std::vector<double> theta(k);
    for (double& v : theta) v = theta_draw(rng);
    const double temp = temps[trial % 3];
    const LinkIndex a = static_cast<LinkIndex>(rng() % k);
    const auto g = grad_log_prob(row_table(theta, temp), 0, a, all_links(k));
    double err = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double numeric = oracle::derivative(
          [&](double x) {
            auto t = theta;
            t[i] = x;
            return static_cast<double>(oracle::log_softmax(t, temp, a));
          },
          theta[i], 1e-3);
      err += (g.values[i] - numeric) * (g.values[i] - numeric);
      norm += numeric * numeric;
    }
    EXPECT_LE(std::sqrt(err / norm), 1e-6) << "trial " << trial;
  }
}

TEST(Gradient, LogProbabilityAgreesWithOracle) {
  const std::vector<double> theta{0.2, -1.0, 3.0};
  const std::vector<LinkIndex> all = all_links(3);
  for (LinkIndex a = 0; a < 3; ++a) {
    EXPECT_NEAR(log_probability(row_table(theta, 0.7), 0, a, all),
                static_cast<double>(oracle::log_softmax(theta, 0.7, a)), 1e-14);
  }
}

TEST(Properties, RandomTables) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> theta_draw(-10.0, 10.0);
  std::uniform_real_distribution<double> temp_draw(0.05, 5.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t k = 1 + trial % 6;
    std::vector<double> theta(k);
    for (double& v : theta) v = theta_draw(rng);
    const double temp = temp_draw(rng);
    const auto p = action_probabilities(row_table(theta, temp), 0, all_links(k));
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    ASSERT_NEAR(sum, 1.0, 1e-12);
    for (double v : p) ASSERT_GT(v, 0.0);
    const double c = theta_draw(rng) * 50.0;
    auto shifted = theta;
    for (double& v : shifted) v += c;
    const auto q = action_probabilities(row_table(shifted, temp), 0, all_links(k));
    for (std::size_t i = 0; i < k; ++i) ASSERT_NEAR(p[i], q[i], 1e-12);
    const auto g = grad_log_prob(row_table(theta, temp), 0, trial % k, all_links(k));
    ASSERT_NEAR(std::accumulate(g.values.begin(), g.values.end(), 0.0), 0.0, 1e-12);
  }
}

TEST(Accumulate, EmptyRecordIsZero) {
  const PolicyTable t(2, 2);
  EXPECT_TRUE(accumulate(TrajectoryRecord{}, t).empty());
}

TEST(Accumulate, SingleEntryEqualsGradient) {
  const PolicyTable t = row_table({0.3, -0.4, 1.1});
  TrajectoryRecord rec{1, {{0, 0, 2, all_links(3)}}};
  const auto acc = accumulate(rec, t);
  const auto g = grad_log_prob(t, 0, 2, all_links(3));
  for (LinkIndex a = 0; a < 3; ++a) EXPECT_EQ(acc.value(0, a), g.values[a]);
}

TEST(Accumulate, RepeatedVisitSumsBothTerms) {
  const PolicyTable t = row_table({0.3, -0.4, 1.1});
  TrajectoryRecord rec{1, {{0, 0, 2, all_links(3)}, {3, 0, 1, all_links(3)}}};
  const auto acc = accumulate(rec, t);
  const auto g1 = grad_log_prob(t, 0, 2, all_links(3));
  const auto g2 = grad_log_prob(t, 0, 1, all_links(3));
  for (LinkIndex a = 0; a < 3; ++a) EXPECT_NEAR(acc.value(0, a), g1.values[a] + g2.values[a], 1e-15);
  EXPECT_NE(acc.value(0, 2), 0.0);
}

TEST(Accumulate, DistinctObservationsKeptApart) {
  const PolicyTable t(3, 2);
  TrajectoryRecord rec{1, {{0, 0, 1, all_links(2)}, {1, 2, 0, all_links(2)}}};
  const auto acc = accumulate(rec, t);
  EXPECT_EQ(acc.rows().size(), 2u);
  EXPECT_EQ(acc.value(1, 0), 0.0);
  EXPECT_NEAR(acc.value(2, 0), 0.5, 1e-15);
}

TEST(ApplyUpdate, ZeroAccumulatorLeavesTable) {
  PolicyTable t = row_table({0.5, 0.1});
  const PolicyTable before = t;
  apply_update(t, GradientAccumulator{}, -7.0, 3.0);
  EXPECT_EQ(t, before);
}

TEST(ApplyUpdate, SingleDecisionClosedForm) {
  PolicyTable t(1, 2, {.temperature = 1.0, .learning_rate = 0.01});
  t.theta(0, 1) = 0.8;
  const double mu = action_probabilities(t, 0, all_links(2))[1];
  const double before = t.theta(0, 1);
  TrajectoryRecord rec{0, {{0, 0, 1, all_links(2)}}};
  apply_update(t, accumulate(rec, t), -5.0, 3.0);
  EXPECT_NEAR(t.theta(0, 1) - before, 0.01 * -5.0 * (1.0 - mu), 1e-15);
  EXPECT_EQ(t.temperature(), 1.0);
  EXPECT_EQ(t.learning_rate(), 0.01);
}

TEST(ApplyUpdate, DiscountUsesElapsed) {
  PolicyTable t(1, 2, {.learning_rate = 1.0, .discount = 0.5});
  TrajectoryRecord rec{0, {{0, 0, 0, all_links(2)}}};
  apply_update(t, accumulate(rec, t), -8.0, 3.0);
  EXPECT_NEAR(t.theta(0, 0), -8.0 * 0.125 * 0.5, 1e-15);
}

TEST(ApplyUpdate, RejectsBadInput) {
  PolicyTable t(1, 2);
  TrajectoryRecord rec{0, {{0, 0, 0, all_links(2)}}};
  const auto acc = accumulate(rec, t);
  EXPECT_THROW(apply_update(t, acc, std::nan(""), 1.0), PolicyError);
  EXPECT_THROW(apply_update(t, acc, std::numeric_limits<double>::infinity(), 1.0), PolicyError);
  EXPECT_THROW(apply_update(t, acc, -1.0, -1.0), PolicyError);
}

TEST(ToyMdp, ExpectedUpdateFollowsExactGradient) {
  const auto mdp = oracle::two_state_mdp();
  PolicyTable t(mdp.states(), mdp.actions(), {.learning_rate = 1.0});
  const std::vector<double> theta{0.3, -0.2, 0.1, 0.4};
  for (std::size_t i = 0; i < theta.size(); ++i) t.row(i / 2)[i % 2] = theta[i];
  std::mt19937_64 rng(17);
  std::vector<double> mean(theta.size(), 0.0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto ep = mdp.sample(t, rng);
    PolicyTable probe = t;
    apply_update(probe, accumulate(ep.record, probe), ep.reward, static_cast<double>(ep.steps));
    for (std::size_t k = 0; k < theta.size(); ++k) mean[k] += (probe.row(k / 2)[k % 2] - theta[k]) / n;
  }
  EXPECT_GT(oracle::cosine(mean, mdp.exact_gradient(theta)), 0.95);
}

TEST(ToyMdp, UpdatesImproveExactValue) {
  const auto mdp = oracle::three_state_mdp();
  std::size_t improved = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed);
    PolicyTable t = init_random(mdp.states(), mdp.actions(), {.learning_rate = 0.01}, rng, 1.0);
    const auto flat = [&] {
      std::vector<double> v;
      for (std::size_t s = 0; s < mdp.states(); ++s)
        for (double x : t.row(s)) v.push_back(x);
      return v;
    };
    const double before = mdp.value(flat());
    for (int i = 0; i < 500; ++i) {
      const auto ep = mdp.sample(t, rng);
      apply_update(t, accumulate(ep.record, t), ep.reward, static_cast<double>(ep.steps));
    }
    if (mdp.value(flat()) > before) ++improved;
  }
  EXPECT_GE(improved, 95u);
}

TEST(InitRandom, UniformMarginal) {
  std::mt19937_64 rng(23);
  const PolicyTable t = init_random(100, 100, {}, rng, 2.5);
  std::vector<double> xs;
  for (Observation o = 0; o < 100; ++o)
    for (double v : t.row(o)) xs.push_back(v);
  for (double v : xs) ASSERT_LE(std::abs(v), 2.5);
  const double d = oracle::ks_uniform(xs, -2.5, 2.5);
  // Critical value for p = 0.01 is 1.628 / sqrt(n).
  EXPECT_LT(d, 1.628 / std::sqrt(static_cast<double>(xs.size())));
}

TEST(InitRandom, SeedReproducesTable) {
  std::mt19937_64 a(5), b(5);
  EXPECT_EQ(init_random(4, 3, {}, a, 1.0), init_random(4, 3, {}, b, 1.0));
}

TEST(InitRandom, TinyScaleIsNearlyUniform) {
  std::mt19937_64 rng(1);
  const PolicyTable t = init_random(2, 4, {}, rng, 1e-12);
  for (double v : action_probabilities(t, 1, all_links(4))) EXPECT_NEAR(v, 0.25, 1e-11);
  EXPECT_THROW(init_random(2, 4, {}, rng, 0.0), PolicyError);
}

TEST(InitEpsilonGreedy, TwoLinks) {
  const Topology t = load_topology("nodes 3\nedge 0 1\nedge 1 2\n");
  const auto p = init_epsilon_greedy(t, shortest_paths(t), 1, 0.01, {});
  const auto mu = action_probabilities(p, 2, t.available_links(1));
  EXPECT_NEAR(mu[1], 0.99, 1e-12);
  EXPECT_NEAR(mu[0], 0.01, 1e-12);
}

TEST(InitEpsilonGreedy, FourLinksRoundTrip) {
  const Topology t = load_topology("nodes 5\nedge 0 1\nedge 0 2\nedge 0 3\nedge 0 4\n");
  for (double temp : {0.5, 1.0, 2.0}) {
    const auto p = init_epsilon_greedy(t, shortest_paths(t), 0, 0.01, {.temperature = temp});
    const auto mu = action_probabilities(p, 3, t.available_links(0));
    EXPECT_NEAR(mu[2], 0.99, 1e-12);
    for (LinkIndex a : {0, 1, 3}) EXPECT_NEAR(mu[a], 0.01 / 3.0, 1e-12);
  }
}

TEST(InitEpsilonGreedy, SingleLinkAndUnreachable) {
  Topology t = load_topology("nodes 4\nedge 0 1\nedge 1 2\nedge 1 3\n");
  const auto leaf = init_epsilon_greedy(t, shortest_paths(t), 0, 0.01, {});
  EXPECT_EQ(action_probabilities(leaf, 2, t.available_links(0))[0], 1.0);
  t = set_link_state(t, Edge{1, 3}, LinkState::kDown);
  const auto hub = init_epsilon_greedy(t, shortest_paths(t), 1, 0.01, {});
  for (double v : action_probabilities(hub, 3, t.available_links(1))) EXPECT_NEAR(v, 0.5, 1e-15);
  EXPECT_THROW(init_epsilon_greedy(t, shortest_paths(t), 1, 0.0, {}), PolicyError);
  EXPECT_THROW(init_epsilon_greedy(t, shortest_paths(t), 1, 1.0, {}), PolicyError);
}

TEST(Serialization, RoundTripIsExact) {
  std::mt19937_64 rng(8);
  const PolicyTable t = init_random(5, 3, {.temperature = 2.0}, rng, 4.0);
  std::stringstream buf;
  write_policy(buf, 17, t);
  EXPECT_EQ(buf.str().substr(0, 14), "policy 17 5 3\n");
  PolicyTable back;
  EXPECT_EQ(read_policy(buf, back, {.temperature = 2.0}), 17u);
  EXPECT_EQ(back, t);
}

TEST(Serialization, SeveralTablesInOneStream) {
  std::stringstream buf;
  write_policy(buf, 0, PolicyTable(2, 2));
  write_policy(buf, 1, PolicyTable(2, 3));
  PolicyTable a, b;
  EXPECT_EQ(read_policy(buf, a), 0u);
  EXPECT_EQ(read_policy(buf, b), 1u);
  EXPECT_EQ(b.actions(), 3u);
}

TEST(Serialization, MalformedInput) {
  PolicyTable p;
  std::stringstream bad_header("table 0 1 1\n0\n");
  EXPECT_THROW(read_policy(bad_header, p), PolicyError);
  std::stringstream short_row("policy 0 2 2\n0 1\n0\n");
  EXPECT_THROW(read_policy(short_row, p), PolicyError);
  std::stringstream nan_row("policy 0 1 2\nnan 1\n");
  EXPECT_THROW(read_policy(nan_row, p), PolicyError);
}
