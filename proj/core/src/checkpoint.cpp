#include "bistnet/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "bistnet/btsr.hpp"

namespace bistnet {

namespace {

std::string manifest_shape(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

Shape parse_manifest_shape(const std::string& text, const std::string& where) {
  if (text == "scalar") return {};
  Shape shape;
  std::istringstream is(text);
  std::string part;
  while (std::getline(is, part, 'x')) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(part, &used);
      if (used != part.size() || v == 0) throw std::invalid_argument(part);
      shape.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw FormatError("checkpoint " + where + ": bad shape '" + text + "'");
    }
  }
  return shape;
}

}  // namespace

void Checkpoint::set(const std::string& name, Tensor tensor) {
  if (name.empty() || name.find_first_of(" \t\r\n/") != std::string::npos) {
    throw Error("checkpoint: invalid tensor name '" + name + "'");
  }
  tensors_[name] = tensor.detach();
}

const Tensor& Checkpoint::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("checkpoint: missing tensor '" + name + "'");
  return it->second;
}

void Checkpoint::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  for (const auto& [name, tensor] : tensors_) {
    const std::string file = name + ".btsr";
    btsr::write(dir / file, tensor);
    manifest << name << ' ' << manifest_shape(tensor.shape()) << ' ' << dtype_name(tensor.dtype()) << ' '
             << file << '\n';
  }
  std::ofstream os(dir / "manifest.txt", std::ios::binary | std::ios::trunc);
  if (!os) throw Error("checkpoint: cannot write manifest in " + dir.string());
  os << manifest.str();
}

Checkpoint Checkpoint::load(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  std::ifstream is(manifest_path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: missing " + manifest_path.string());
  Checkpoint ckpt;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = manifest_path.string() + ":" + std::to_string(line_no);
    std::istringstream fields(line);
    std::string name, shape_text, dtype_text, file, extra;
    if (!(fields >> name >> shape_text >> dtype_text >> file) || (fields >> extra)) {
      throw FormatError("checkpoint " + where + ": expected 'name shape dtype file'");
    }
    const Shape shape = parse_manifest_shape(shape_text, where);
    if (dtype_text != "f32" && dtype_text != "f64") {
      throw FormatError("checkpoint " + where + ": unknown dtype '" + dtype_text + "'");
    }
    Tensor t = btsr::read(dir / file);
    if (t.shape() != shape || dtype_name(t.dtype()) != dtype_text) {
      throw FormatError("checkpoint " + where + ": file holds " + shape_str(t.shape()) + " " +
                        std::string(dtype_name(t.dtype())) + ", manifest says " + shape_str(shape) + " " +
                        dtype_text);
    }
    ckpt.set(name, std::move(t));
  }
  return ckpt;
}

}  // namespace bistnet
