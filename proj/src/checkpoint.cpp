#include <fstream>
#include <map>

#include "dyna/binary_io.hpp"
#include "dyna/segnet.hpp"

namespace dyna {

namespace {

// Vectors are stored with their natural rank 1; kernels with rank 4.
std::vector<std::uint32_t> stored_dims(const RealGrid& t) {
  const Shape& s = t.shape();
  if (s.n == 1 && s.h == 1 && s.w == 1) return {static_cast<std::uint32_t>(s.c)};
  return {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
          static_cast<std::uint32_t>(s.w)};
}

Shape shape_from_dims(const std::vector<std::uint32_t>& dims) {
  if (dims.size() == 1) return Shape{1, dims[0], 1, 1};
  if (dims.size() == 4) return Shape{dims[0], dims[1], dims[2], dims[3]};
  throw FormatError("checkpoint tensor has unsupported rank " + std::to_string(dims.size()));
}

}  // namespace

void save_checkpoint(const SegModelState& model, std::ostream& out) {
  io::write_magic(out, "DYNA");
  io::write_u32(out, kCheckpointVersion);
  io::write_string(out, model.architecture());
  for (const auto* list : {&model.parameters(), &model.buffers()}) {
    for (const NamedTensor& t : *list) {
      io::write_string(out, t.name);
      const auto dims = stored_dims(t.value);
      io::write_u32(out, static_cast<std::uint32_t>(dims.size()));
      for (auto d : dims) io::write_u32(out, d);
      io::write_f64s(out, t.value.data(), static_cast<std::size_t>(t.value.size()));
    }
  }
  if (!out) throw FormatError("failed to write checkpoint");
}

SegModelState load_checkpoint(std::istream& in) {
  io::expect_magic(in, "DYNA", "checkpoint header");
  const std::uint32_t version = io::read_u32(in, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::string tag = io::read_string(in, 256, "architecture tag");
  SegModelState model = SegModelState::from_architecture(tag);

  std::map<std::string, RealGrid> loaded;
  std::size_t expected = model.parameters().size() + model.buffers().size();
  while (loaded.size() < expected) {
    const std::string name = io::read_string(in, 256, "tensor name");
    const std::uint32_t ndim = io::read_u32(in, "tensor rank");
    if (ndim > 8) throw FormatError("checkpoint tensor rank is implausible");
    std::vector<std::uint32_t> dims(ndim);
    for (auto& d : dims) d = io::read_u32(in, "tensor dims");
    RealGrid t(shape_from_dims(dims));
    const RealGrid* ref = nullptr;
    try {
      ref = &model.tensor(name);
    } catch (const Error&) {
      throw FormatError("checkpoint tensor '" + name + "' does not belong to architecture " + tag);
    }
    if (!(ref->shape() == t.shape())) throw FormatError("checkpoint tensor '" + name + "' has the wrong shape");
    io::read_f64s(in, t.data(), static_cast<std::size_t>(t.size()), "tensor payload");
    if (!loaded.emplace(name, std::move(t)).second) throw FormatError("duplicate tensor '" + name + "' in checkpoint");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint records");
  for (auto& [name, t] : loaded) model.tensor(name) = std::move(t);
  for (const NamedTensor& b : model.buffers()) {
    if (b.name.ends_with("running_std") && (b.value.values() <= 0.0).any()) {
      throw FormatError("checkpoint running std must be positive");
    }
  }
  return model;
}

void save_checkpoint(const SegModelState& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  save_checkpoint(model, out);
}

SegModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace dyna
