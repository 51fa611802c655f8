#include "bistnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace bistnet::io {

Tensor read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path.string() + ": " + msg);
  }
  std::vector<float> v(buffer.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(buffer[i]) / 255.0f;
  return Tensor::adopt({image.height, image.width, 3}, std::move(v));
}

void write_png(const std::filesystem::path& path, const Tensor& rgb) {
  if (!rgb.defined() || rgb.rank() != 3 || rgb.dim(2) != 3) {
    throw ShapeError("write_png: expected [H,W,3], got " +
                     (rgb.defined() ? shape_str(rgb.shape()) : std::string("<undefined>")));
  }
  const std::vector<double> v = rgb.to_vector();
  std::vector<png_byte> buffer(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    buffer[i] = static_cast<png_byte>(std::lround(std::clamp(v[i], 0.0, 1.0) * 255.0));
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(rgb.dim(1));
  image.height = static_cast<png_uint_32>(rgb.dim(0));
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error("cannot write PNG " + path.string() + ": " + image.message);
  }
}

std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  return out;
}

}  // namespace bistnet::io
