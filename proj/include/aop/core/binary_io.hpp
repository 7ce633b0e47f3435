#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "aop/core/types.hpp"

namespace aop {

// Little-endian primitives shared by every binary container in the project.
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_i64(std::ostream& os, std::int64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
std::int64_t read_i64(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);

/// Named-array container: an 8-byte magic, a record count, then records of
/// (u16 name length, name, u8 kind, u32 rank, u64 dims[rank], payload).
/// Kind 0 is little-endian float32, 1 is int64, 2 is float64.
class RecordFile {
 public:
  enum class Kind : std::uint8_t { f32 = 0, i64 = 1, f64 = 2 };

  struct Record {
    Kind kind = Kind::f32;
    std::vector<std::uint64_t> shape;
    std::vector<double> reals;  // f32 and f64 payloads, widened
    std::vector<std::int64_t> ints;
  };

  void put_f32(const std::string& name, std::vector<std::uint64_t> shape, const std::vector<double>& values);
  void put_f64(const std::string& name, std::vector<std::uint64_t> shape, const std::vector<double>& values);
  void put_i64(const std::string& name, std::vector<std::uint64_t> shape, const std::vector<std::int64_t>& values);

  bool contains(const std::string& name) const { return records_.count(name) != 0; }
  const Record& get(const std::string& name) const;
  const std::map<std::string, Record>& records() const { return records_; }

  void save(const std::filesystem::path& path, const std::string& magic) const;
  static RecordFile load(const std::filesystem::path& path, const std::string& magic);

 private:
  std::map<std::string, Record> records_;
};

/// Flat float32 tensor file: magic "AOPTENS1", u32 rank, u64 dims, payload.
void save_tensor(const std::filesystem::path& path, const std::vector<std::uint64_t>& shape,
                 const std::vector<double>& values);
std::vector<double> load_tensor(const std::filesystem::path& path, std::vector<std::uint64_t>* shape);

template <typename Derived>
std::vector<double> to_std_vector(const Eigen::DenseBase<Derived>& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  // Row-major element order regardless of the Eigen storage order.
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(static_cast<double>(m(r, c)));
  return out;
}

}  // namespace aop
