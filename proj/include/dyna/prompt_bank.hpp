#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "dyna/freq_prompt.hpp"

namespace dyna {

struct BankEntry {
  SpectralKey key;
  LowFreqPrompt prompt;
  std::uint64_t sequence = 0;  // insertion order, strictly increasing
};

struct SupportItem {
  LowFreqPrompt value;
  double similarity = 0.0;
};

// FIFO store of (key, trained prompt) pairs with capacity K.
class MemoryBank {
 public:
  explicit MemoryBank(std::size_t capacity = 40);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::deque<BankEntry>& entries() const { return entries_; }
  std::uint64_t next_sequence() const { return next_sequence_; }

  // Appends, evicting the oldest entry when full.
  void push(SpectralKey key, LowFreqPrompt prompt);

  // The min(M, size) entries with the highest cosine similarity to key,
  // descending; equal similarities rank the most recent insertion first.
  std::vector<SupportItem> retrieve_support(const SpectralKey& key, std::size_t m) const;

  // Rebuilds a bank from serialized parts.
  static MemoryBank restore(std::size_t capacity, std::deque<BankEntry> entries, std::uint64_t next_sequence);

  bool operator==(const MemoryBank& o) const;

 private:
  std::size_t capacity_;
  std::deque<BankEntry> entries_;
  std::uint64_t next_sequence_ = 0;
};

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Softmax over the support similarities.
Eigen::VectorXd support_weights(const std::vector<SupportItem>& support);

// Similarity-weighted sum of the support prompts; the all-ones prompt of
// `fallback` shape when the support is empty.
LowFreqPrompt init_prompt(const std::vector<SupportItem>& support, const LowFreqPrompt& fallback);

}  // namespace dyna
