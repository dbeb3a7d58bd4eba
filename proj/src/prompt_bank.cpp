#include "dyna/prompt_bank.hpp"

#include <algorithm>
#include <cmath>

namespace dyna {

MemoryBank::MemoryBank(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error("memory bank capacity must be positive");
}

void MemoryBank::push(SpectralKey key, LowFreqPrompt prompt) {
  if (!entries_.empty()) {
    const BankEntry& ref = entries_.front();
    if (!(ref.prompt.shape() == prompt.shape())) {
      throw ShapeError("memory bank: prompt shape " + prompt.shape().str() + " differs from bank shape " +
                       ref.prompt.shape().str());
    }
    if (ref.key.values.size() != key.values.size()) throw ShapeError("memory bank: key length differs from bank");
  }
  entries_.push_back(BankEntry{std::move(key), std::move(prompt), next_sequence_++});
  while (entries_.size() > capacity_) entries_.pop_front();
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ShapeError("cosine similarity: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine similarity: zero-norm key");
  return a.dot(b) / (na * nb);
}

std::vector<SupportItem> MemoryBank::retrieve_support(const SpectralKey& key, std::size_t m) const {
  if (m < 1) throw Error("retrieve_support: M must be at least 1");
  if (key.values.norm() == 0.0) throw DomainError("retrieve_support: zero-norm key");
  struct Scored {
    double similarity;
    std::uint64_t sequence;
    const BankEntry* entry;
  };
  std::vector<Scored> scored;
  scored.reserve(entries_.size());
  for (const BankEntry& e : entries_) scored.push_back({cosine_similarity(key.values, e.key.values), e.sequence, &e});
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.sequence > b.sequence;
  });
  std::vector<SupportItem> out;
  const std::size_t count = std::min(m, scored.size());
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back({scored[i].entry->prompt, scored[i].similarity});
  return out;
}

MemoryBank MemoryBank::restore(std::size_t capacity, std::deque<BankEntry> entries, std::uint64_t next_sequence) {
  MemoryBank bank(capacity);
  if (entries.size() > capacity) throw FormatError("memory bank snapshot exceeds its capacity");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i > 0 && entries[i].sequence <= entries[i - 1].sequence) throw FormatError("memory bank snapshot out of order");
    if (entries[i].sequence >= next_sequence) throw FormatError("memory bank snapshot sequence counter is stale");
    if (!(entries[i].prompt.shape() == entries.front().prompt.shape())) {
      throw FormatError("memory bank snapshot mixes prompt shapes");
    }
  }
  bank.entries_ = std::move(entries);
  bank.next_sequence_ = next_sequence;
  return bank;
}

bool MemoryBank::operator==(const MemoryBank& o) const {
  if (capacity_ != o.capacity_ || next_sequence_ != o.next_sequence_ || entries_.size() != o.entries_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const BankEntry& a = entries_[i];
    const BankEntry& b = o.entries_[i];
    if (a.sequence != b.sequence || a.key.source_id != b.key.source_id || !(a.prompt == b.prompt)) return false;
    if (a.key.values.size() != b.key.values.size() || a.key.values != b.key.values) return false;
  }
  return true;
}

Eigen::VectorXd support_weights(const std::vector<SupportItem>& support) {
  Eigen::VectorXd w(static_cast<Index>(support.size()));
  if (support.empty()) return w;
  double top = support.front().similarity;
  for (const SupportItem& s : support) top = std::max(top, s.similarity);
  for (std::size_t i = 0; i < support.size(); ++i) w[static_cast<Index>(i)] = std::exp(support[i].similarity - top);
  return w / w.sum();
}

LowFreqPrompt init_prompt(const std::vector<SupportItem>& support, const LowFreqPrompt& fallback) {
  if (support.empty()) return LowFreqPrompt(RealGrid::ones(fallback.shape()), fallback.beta());
  const Shape& shape = support.front().value.shape();
  for (const SupportItem& s : support) {
    if (!(s.value.shape() == shape)) throw ShapeError("init_prompt: support prompts have mismatched shapes");
  }
  const Eigen::VectorXd w = support_weights(support);
  RealGrid values(shape);
  for (std::size_t i = 0; i < support.size(); ++i) values.values() += w[static_cast<Index>(i)] * support[i].value.values().values();
  return LowFreqPrompt(std::move(values), support.front().value.beta());
}

}  // namespace dyna
