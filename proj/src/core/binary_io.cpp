#include "aop/core/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace aop {

namespace {

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ParseError("unexpected end of binary file");
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

std::uint64_t element_count(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

constexpr std::uint64_t kMaxElements = 1ULL << 32;

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { write_le(os, v); }
void write_i64(std::ostream& os, std::int64_t v) { write_le(os, v); }
void write_f32(std::ostream& os, float v) { write_le(os, v); }
void write_f64(std::ostream& os, double v) { write_le(os, v); }
std::uint32_t read_u32(std::istream& is) { return read_le<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return read_le<std::uint64_t>(is); }
std::int64_t read_i64(std::istream& is) { return read_le<std::int64_t>(is); }
float read_f32(std::istream& is) { return read_le<float>(is); }
double read_f64(std::istream& is) { return read_le<double>(is); }

void RecordFile::put_f32(const std::string& name, std::vector<std::uint64_t> shape,
                         const std::vector<double>& values) {
  if (element_count(shape) != values.size()) throw InputError("record '" + name + "': shape/value mismatch");
  Record r;
  r.kind = Kind::f32;
  r.shape = std::move(shape);
  r.reals.reserve(values.size());
  for (double v : values) r.reals.push_back(static_cast<double>(static_cast<float>(v)));
  records_[name] = std::move(r);
}

void RecordFile::put_f64(const std::string& name, std::vector<std::uint64_t> shape,
                         const std::vector<double>& values) {
  if (element_count(shape) != values.size()) throw InputError("record '" + name + "': shape/value mismatch");
  records_[name] = Record{Kind::f64, std::move(shape), values, {}};
}

void RecordFile::put_i64(const std::string& name, std::vector<std::uint64_t> shape,
                         const std::vector<std::int64_t>& values) {
  if (element_count(shape) != values.size()) throw InputError("record '" + name + "': shape/value mismatch");
  records_[name] = Record{Kind::i64, std::move(shape), {}, values};
}

const RecordFile::Record& RecordFile::get(const std::string& name) const {
  const auto it = records_.find(name);
  if (it == records_.end()) throw ParseError("missing record '" + name + "'");
  return it->second;
}

void RecordFile::save(const std::filesystem::path& path, const std::string& magic) const {
  if (magic.size() != 8) throw InputError("record file magic must be 8 bytes");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(magic.data(), 8);
  write_u32(os, static_cast<std::uint32_t>(records_.size()));
  for (const auto& [name, r] : records_) {
    const auto len = static_cast<std::uint16_t>(name.size());
    os.put(static_cast<char>(len & 0xff));
    os.put(static_cast<char>(len >> 8));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(r.kind));
    write_u32(os, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) write_u64(os, d);
    switch (r.kind) {
      case Kind::f32: for (double v : r.reals) write_f32(os, static_cast<float>(v)); break;
      case Kind::f64: for (double v : r.reals) write_f64(os, v); break;
      case Kind::i64: for (auto v : r.ints) write_i64(os, v); break;
    }
  }
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

RecordFile RecordFile::load(const std::filesystem::path& path, const std::string& magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  char head[8];
  if (!is.read(head, 8) || std::string(head, 8) != magic) {
    throw ParseError("'" + path.string() + "' is not a " + magic + " file");
  }
  RecordFile file;
  const std::uint32_t count = read_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    unsigned char lb[2];
    if (!is.read(reinterpret_cast<char*>(lb), 2)) throw ParseError("truncated record header");
    const std::size_t len = lb[0] | (static_cast<std::size_t>(lb[1]) << 8);
    std::string name(len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(len))) throw ParseError("truncated record name");
    const int kind = is.get();
    if (kind < 0 || kind > 2) throw ParseError("record '" + name + "' has unknown kind");
    Record r;
    r.kind = static_cast<Kind>(kind);
    const std::uint32_t rank = read_u32(is);
    if (rank > 8) throw ParseError("record '" + name + "' has implausible rank");
    for (std::uint32_t k = 0; k < rank; ++k) r.shape.push_back(read_u64(is));
    const std::uint64_t n = element_count(r.shape);
    if (n > kMaxElements) throw ParseError("record '" + name + "' is too large");
    if (r.kind == Kind::i64) {
      r.ints.reserve(n);
      for (std::uint64_t k = 0; k < n; ++k) r.ints.push_back(read_i64(is));
    } else {
      r.reals.reserve(n);
      for (std::uint64_t k = 0; k < n; ++k)
        r.reals.push_back(r.kind == Kind::f32 ? static_cast<double>(read_f32(is)) : read_f64(is));
    }
    file.records_[name] = std::move(r);
  }
  return file;
}

void save_tensor(const std::filesystem::path& path, const std::vector<std::uint64_t>& shape,
                 const std::vector<double>& values) {
  if (element_count(shape) != values.size()) throw InputError("save_tensor: shape/value mismatch");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write("AOPTENS1", 8);
  write_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) write_u64(os, d);
  for (double v : values) write_f32(os, static_cast<float>(v));
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<double> load_tensor(const std::filesystem::path& path, std::vector<std::uint64_t>* shape) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open tensor file '" + path.string() + "'");
  char head[8];
  if (!is.read(head, 8) || std::string(head, 8) != "AOPTENS1") {
    throw ParseError("'" + path.string() + "' is not a tensor file");
  }
  const std::uint32_t rank = read_u32(is);
  if (rank > 8) throw ParseError("'" + path.string() + "': implausible rank");
  std::vector<std::uint64_t> dims;
  for (std::uint32_t k = 0; k < rank; ++k) dims.push_back(read_u64(is));
  const std::uint64_t n = element_count(dims);
  if (n > kMaxElements) throw ParseError("'" + path.string() + "': tensor too large");
  std::vector<double> values;
  values.reserve(n);
  for (std::uint64_t k = 0; k < n; ++k) values.push_back(static_cast<double>(read_f32(is)));
  if (shape) *shape = std::move(dims);
  return values;
}

}  // namespace aop
