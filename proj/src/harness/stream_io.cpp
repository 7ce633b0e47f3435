#include "aop/harness/stream_io.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "aop/core/binary_io.hpp"

namespace aop {

namespace {

void save_samples(const Dataset& samples, ClassId id, const std::filesystem::path& path, const ImageShape& shape) {
  std::vector<double> values;
  values.reserve(samples.size() * static_cast<std::size_t>(shape.size()));
  std::size_t n = 0;
  for (const auto& s : samples) {
    if (s.label != id) continue;
    values.insert(values.end(), s.x.data(), s.x.data() + s.x.size());
    ++n;
  }
  save_tensor(path, {n, static_cast<std::uint64_t>(shape.size())}, values);
}

Dataset load_samples(const std::filesystem::path& path, ClassId id, const ImageShape& shape, const std::string& where) {
  if (!std::filesystem::exists(path)) throw ParseError(where + "missing sample file " + path.string());
  std::vector<std::uint64_t> dims;
  const auto values = load_tensor(path, &dims);
  if (dims.size() != 2 || dims[1] != static_cast<std::uint64_t>(shape.size())) {
    throw ParseError(where + "sample file " + path.string() + " does not hold " + shape.to_string() + " images");
  }
  Dataset out;
  const auto d = static_cast<std::size_t>(dims[1]);
  for (std::uint64_t i = 0; i < dims[0]; ++i) {
    Image x(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(j)) = values[i * d + j];
    out.push_back({std::move(x), id});
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void save_stream(const ContinualTaskStream& stream, const std::filesystem::path& manifest) {
  stream.validate();
  const auto dir = manifest.has_parent_path() ? manifest.parent_path() : std::filesystem::path(".");
  std::filesystem::create_directories(dir);
  std::ostringstream text;
  text << "# task stream manifest\nversion = 1\n";
  text << "shape = " << stream.shape.channels << ' ' << stream.shape.height << ' ' << stream.shape.width << '\n';
  for (const auto& task : stream.tasks) {
    text << "task =";
    for (ClassId id : task.classes) text << ' ' << id;
    text << '\n';
  }
  for (const auto& task : stream.tasks) {
    for (ClassId id : task.classes) {
      const std::string train = "class_" + std::to_string(id) + ".train.bin";
      const std::string test = "class_" + std::to_string(id) + ".test.bin";
      save_samples(task.train, id, dir / train, stream.shape);
      save_samples(task.test, id, dir / test, stream.shape);
      text << "class " << id << " = " << train << ' ' << test << '\n';
    }
  }
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write stream manifest " + manifest.string());
  out << text.str();
  if (!out) throw IoError("failed writing stream manifest " + manifest.string());
}

ContinualTaskStream load_stream(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open stream manifest " + manifest.string());
  const auto dir = manifest.has_parent_path() ? manifest.parent_path() : std::filesystem::path(".");

  ContinualTaskStream stream;
  bool have_shape = false;
  bool have_version = false;
  std::map<ClassId, std::pair<std::string, std::string>> files;
  std::map<ClassId, std::string> file_lines;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = manifest.string() + ":" + std::to_string(number) + ": ";
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(where + "expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    std::istringstream value(trim(body.substr(eq + 1)));
    if (key == "version") {
      int v = 0;
      if (!(value >> v) || v != 1) throw ParseError(where + "unsupported manifest version");
      have_version = true;
    } else if (key == "shape") {
      if (!(value >> stream.shape.channels >> stream.shape.height >> stream.shape.width) ||
          stream.shape.channels < 1 || stream.shape.height < 1 || stream.shape.width < 1) {
        throw ParseError(where + "shape needs three positive integers");
      }
      have_shape = true;
    } else if (key == "task") {
      TaskData task;
      ClassId id = 0;
      while (value >> id) task.classes.push_back(id);
      if (!value.eof() || task.classes.empty()) throw ParseError(where + "task needs a list of integer class ids");
      stream.tasks.push_back(std::move(task));
    } else if (key.rfind("class ", 0) == 0) {
      ClassId id = 0;
      std::istringstream id_text(key.substr(6));
      std::string rest;
      if (!(id_text >> id) || (id_text >> rest)) throw ParseError(where + "malformed class id in '" + key + "'");
      std::string train, test, extra;
      if (!(value >> train >> test) || (value >> extra)) throw ParseError(where + "class needs a train and a test file");
      if (files.count(id)) throw ParseError(where + "class " + std::to_string(id) + " listed twice");
      files[id] = {train, test};
      file_lines[id] = where;
    } else {
      throw ParseError(where + "unknown key '" + key + "'");
    }
  }
  if (!have_version) throw ParseError(manifest.string() + ": missing version line");
  if (!have_shape) throw ParseError(manifest.string() + ": missing shape line");
  if (stream.tasks.empty()) throw ParseError(manifest.string() + ": no tasks");

  std::set<ClassId> seen;
  for (const auto& task : stream.tasks) {
    for (ClassId id : task.classes) {
      if (!seen.insert(id).second) {
        throw ValidationError("class " + std::to_string(id) + " appears in more than one task");
      }
    }
  }
  for (auto& task : stream.tasks) {
    for (ClassId id : task.classes) {
      const auto f = files.find(id);
      if (f == files.end()) throw ParseError(manifest.string() + ": no sample files for class " + std::to_string(id));
      const Dataset train = load_samples(dir / f->second.first, id, stream.shape, file_lines[id]);
      const Dataset test = load_samples(dir / f->second.second, id, stream.shape, file_lines[id]);
      task.train.insert(task.train.end(), train.begin(), train.end());
      task.test.insert(task.test.end(), test.begin(), test.end());
    }
  }
  for (const auto& [id, where] : file_lines) {
    if (!seen.count(id)) throw ValidationError(where + "class " + std::to_string(id) + " belongs to no task");
  }
  stream.validate();
  return stream;
}

}  // namespace aop
