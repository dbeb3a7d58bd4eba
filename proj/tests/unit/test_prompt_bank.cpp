#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "dyna/prompt_bank.hpp"
#include "test_util.hpp"

using namespace dyna;
using dyna::testing::random_grid;

namespace {

SpectralKey random_key(Rng& rng) { return {random_grid(rng, Shape{1, 1, 3, 3}, 0.1, 2.0).values().matrix(), 0}; }
LowFreqPrompt random_prompt(Rng& rng) { return LowFreqPrompt(random_grid(rng, Shape{1, 1, 3, 3}, 0.5, 1.5), 0.05); }

}  // namespace

TEST(Bank, FifoCapacity) {
  Rng rng(1);
  MemoryBank bank(5);
  for (int k = 0; k < 12; ++k) {
    bank.push(random_key(rng), random_prompt(rng));
    EXPECT_EQ(bank.size(), std::min<std::size_t>(k + 1, 5));
  }
  std::vector<std::uint64_t> seqs;
  for (const auto& e : bank.entries()) seqs.push_back(e.sequence);
  EXPECT_EQ(seqs, (std::vector<std::uint64_t>{7, 8, 9, 10, 11}));
  EXPECT_THROW(MemoryBank(0), Error);
}

TEST(Bank, TopMMatchesBruteForce) {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    MemoryBank bank(40);
    const int n = 1 + static_cast<int>(rng.below(60));
    for (int k = 0; k < n; ++k) bank.push(random_key(rng), random_prompt(rng));
    const SpectralKey q = random_key(rng);
    const std::size_t m = 1 + rng.below(20);

    std::vector<std::pair<double, std::uint64_t>> brute;
    for (const auto& e : bank.entries()) {
      const double cos = q.values.dot(e.key.values) / (q.values.norm() * e.key.values.norm());
      brute.push_back({cos, e.sequence});
    }
    std::sort(brute.begin(), brute.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second > b.second; });
    brute.resize(std::min(m, brute.size()));

    const auto support = bank.retrieve_support(q, m);
    ASSERT_EQ(support.size(), brute.size());
    for (std::size_t k = 0; k < support.size(); ++k) {
      EXPECT_NEAR(support[k].similarity, brute[k].first, 1e-15);
    }
  }
}

TEST(Bank, TiesPreferRecent) {
  MemoryBank bank(10);
  const SpectralKey key{Eigen::VectorXd::Ones(4), 0};
  for (int k = 0; k < 4; ++k) bank.push(key, LowFreqPrompt(RealGrid(Shape{1, 1, 2, 2}, 1.0 + k), 0.05));
  const auto s = bank.retrieve_support(key, 2);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].value.values().values()[0], 4.0);
  EXPECT_EQ(s[1].value.values().values()[0], 3.0);
}

TEST(Bank, WeightsSumToOne) {
  Rng rng(2);
  MemoryBank bank(40);
  for (int k = 0; k < 40; ++k) bank.push(random_key(rng), random_prompt(rng));
  for (std::size_t m : {1, 5, 16, 40}) {
    const Eigen::VectorXd w = support_weights(bank.retrieve_support(random_key(rng), m));
    EXPECT_NEAR(w.sum(), 1.0, 1e-12);
    EXPECT_TRUE((w.array() > 0.0).all());
  }
  // Softmax oracle on explicit similarities.
  std::vector<SupportItem> items{{random_prompt(rng), 0.2}, {random_prompt(rng), 0.9}, {random_prompt(rng), -0.4}};
  const Eigen::VectorXd w = support_weights(items);
  const double z = std::exp(0.2) + std::exp(0.9) + std::exp(-0.4);
  EXPECT_NEAR(w[1], std::exp(0.9) / z, 1e-15);
}

TEST(Bank, InitPromptInConvexHull) {
  Rng rng(3);
  MemoryBank bank(40);
  for (int k = 0; k < 30; ++k) bank.push(random_key(rng), random_prompt(rng));
  const auto support = bank.retrieve_support(random_key(rng), 16);
  const LowFreqPrompt init = init_prompt(support, LowFreqPrompt::identity(Shape{1, 1, 64, 64}, 0.05));
  for (Index k = 0; k < 9; ++k) {
    double lo = 1e9, hi = -1e9;
    for (const auto& s : support) {
      lo = std::min(lo, s.value.values().values()[k]);
      hi = std::max(hi, s.value.values().values()[k]);
    }
    EXPECT_GE(init.values().values()[k], lo - 1e-12);
    EXPECT_LE(init.values().values()[k], hi + 1e-12);
  }
  // Explicit weighted sum.
  const Eigen::VectorXd w = support_weights(support);
  Eigen::ArrayXd expected = Eigen::ArrayXd::Zero(9);
  for (std::size_t k = 0; k < support.size(); ++k) expected += w[static_cast<Index>(k)] * support[k].value.values().values();
  EXPECT_LT((init.values().values() - expected).abs().maxCoeff(), 1e-14);
}

TEST(Bank, EmptySupportGivesIdentity) {
  const LowFreqPrompt fb = LowFreqPrompt::identity(Shape{1, 1, 64, 64}, 0.05);
  const LowFreqPrompt p = init_prompt({}, fb);
  EXPECT_TRUE((p.values().values() == 1.0).all());
  EXPECT_EQ(p.values().shape(), (Shape{1, 1, 3, 3}));
}

TEST(Bank, Errors) {
  Rng rng(4);
  MemoryBank bank(4);
  bank.push(random_key(rng), random_prompt(rng));
  EXPECT_THROW(bank.retrieve_support(SpectralKey{Eigen::VectorXd::Zero(9), 0}, 2), DomainError);
  EXPECT_THROW(bank.retrieve_support(random_key(rng), 0), Error);
  EXPECT_THROW(bank.push(random_key(rng), LowFreqPrompt(RealGrid(Shape{1, 1, 5, 5}, 1.0), 0.05)), ShapeError);
  std::vector<SupportItem> mixed{{random_prompt(rng), 0.1}, {LowFreqPrompt(RealGrid(Shape{1, 1, 5, 5}, 1.0), 0.05), 0.2}};
  EXPECT_THROW(init_prompt(mixed, random_prompt(rng)), ShapeError);
}

TEST(Bank, RestoreValidates) {
  Rng rng(5);
  MemoryBank bank(3);
  for (int k = 0; k < 5; ++k) bank.push(random_key(rng), random_prompt(rng));
  const MemoryBank copy = MemoryBank::restore(bank.capacity(), bank.entries(), bank.next_sequence());
  EXPECT_TRUE(copy == bank);
  EXPECT_THROW(MemoryBank::restore(2, bank.entries(), bank.next_sequence()), Error);
  EXPECT_THROW(MemoryBank::restore(3, bank.entries(), 1), Error);
}
