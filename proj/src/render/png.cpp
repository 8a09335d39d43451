#include "ctview/render/png.hpp"

#include <png.h>

#include "ctview/error.hpp"
#include "ctview/nifti.hpp"

namespace ctview::render {

std::vector<std::uint8_t> encode_png(const SliceImage& image) {
  image.validate();
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGBA;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

SliceImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw InvalidArgument(std::string("PNG decode failed: ") + img.message);
  }
  img.format = PNG_FORMAT_RGBA;
  SliceImage out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.channels = 4;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw InvalidArgument(std::string("PNG decode failed: ") + img.message);
  }
  return out;
}

void write_png_file(const SliceImage& image, const std::filesystem::path& path) {
  write_binary_file(path, encode_png(image));
}

}  // namespace ctview::render
