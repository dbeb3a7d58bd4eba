#include <fstream>
#include <sstream>

#include "dyna/binary_io.hpp"
#include "dyna/deployment.hpp"

namespace dyna {

namespace {

constexpr std::uint64_t kMaxCount = std::uint64_t{1} << 32;

std::uint64_t read_count(std::istream& in, const char* what) {
  const std::uint64_t n = io::read_u64(in, what);
  if (n > kMaxCount) throw FormatError(std::string("implausible count while reading ") + what);
  return n;
}

void write_bank(std::ostream& out, const MemoryBank& bank) {
  io::write_u64(out, bank.capacity());
  io::write_u64(out, bank.next_sequence());
  io::write_u64(out, bank.size());
  for (const BankEntry& e : bank.entries()) {
    io::write_u64(out, e.sequence);
    io::write_u64(out, e.key.source_id);
    io::write_u64(out, static_cast<std::uint64_t>(e.key.values.size()));
    io::write_f64s(out, e.key.values.data(), static_cast<std::size_t>(e.key.values.size()));
    const RealGrid& p = e.prompt.values();
    io::write_f64(out, e.prompt.beta());
    io::write_u32(out, static_cast<std::uint32_t>(p.channels()));
    io::write_u32(out, static_cast<std::uint32_t>(p.height()));
    io::write_u32(out, static_cast<std::uint32_t>(p.width()));
    io::write_f64s(out, p.data(), static_cast<std::size_t>(p.size()));
  }
}

MemoryBank read_bank(std::istream& in) {
  const std::uint64_t capacity = read_count(in, "bank capacity");
  const std::uint64_t next = io::read_u64(in, "bank sequence");
  const std::uint64_t count = read_count(in, "bank size");
  std::deque<BankEntry> entries;
  for (std::uint64_t k = 0; k < count; ++k) {
    BankEntry e;
    e.sequence = io::read_u64(in, "bank entry sequence");
    e.key.source_id = io::read_u64(in, "bank key source");
    const std::uint64_t len = read_count(in, "bank key length");
    e.key.values.resize(static_cast<Index>(len));
    io::read_f64s(in, e.key.values.data(), len, "bank key");
    const double beta = io::read_f64(in, "prompt beta");
    const std::uint32_t c = io::read_u32(in, "prompt channels");
    const std::uint32_t h = io::read_u32(in, "prompt height");
    const std::uint32_t w = io::read_u32(in, "prompt width");
    if (std::uint64_t{c} * h * w > kMaxCount) throw FormatError("implausible prompt shape");
    RealGrid values(Shape{1, c, h, w});
    io::read_f64s(in, values.data(), static_cast<std::size_t>(values.size()), "prompt values");
    e.prompt = LowFreqPrompt(std::move(values), beta);
    entries.push_back(std::move(e));
  }
  try {
    return MemoryBank::restore(capacity, std::move(entries), next);
  } catch (const Error& e) {
    throw FormatError(std::string("inconsistent bank snapshot: ") + e.what());
  }
}

}  // namespace

void save_state(const DeploymentState& state, const std::string& path) {
  std::ostringstream ckpt;
  save_checkpoint(state.model, ckpt);
  const std::string blob = ckpt.str();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  io::write_magic(out, "DYNS");
  io::write_u32(out, kStateVersion);
  io::write_u64(out, state.cycle);
  io::write_u64(out, state.counter);
  io::write_u64(out, blob.size());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  write_bank(out, state.bank);
  io::write_u64(out, state.log.size());
  for (const SampleLog& s : state.log) {
    io::write_u32(out, s.day);
    io::write_u64(out, s.index);
    io::write_f64(out, s.dice_dyna);
    io::write_f64(out, s.dice_source_only);
  }
  if (!out) throw FormatError("failed to write '" + path + "'");
}

DeploymentState load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  io::expect_magic(in, "DYNS", "state header");
  const std::uint32_t version = io::read_u32(in, "state version");
  if (version != kStateVersion) {
    throw FormatError("unsupported state version " + std::to_string(version) + " (this build reads version " +
                      std::to_string(kStateVersion) + ")");
  }
  DeploymentState state;
  state.cycle = io::read_u64(in, "state cycle");
  state.counter = io::read_u64(in, "state counter");
  if (state.counter < 1) throw FormatError("state warm-up counter must be at least 1");
  const std::uint64_t blob_size = read_count(in, "checkpoint length");
  std::string blob(blob_size, '\0');
  io::read_exact(in, blob.data(), blob.size(), "embedded checkpoint");
  std::istringstream ckpt(blob);
  state.model = load_checkpoint(ckpt);
  state.bank = read_bank(in);
  const std::uint64_t n = read_count(in, "metric log length");
  state.log.reserve(n);
  for (std::uint64_t k = 0; k < n; ++k) {
    SampleLog s;
    s.day = io::read_u32(in, "log day");
    s.index = io::read_u64(in, "log index");
    s.dice_dyna = io::read_f64(in, "log dice");
    s.dice_source_only = io::read_f64(in, "log dice");
    state.log.push_back(s);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after deployment state");
  return state;
}

}  // namespace dyna
