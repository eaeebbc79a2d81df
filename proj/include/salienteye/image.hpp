#pragma once

#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "salienteye/detail/util.hpp"
#include "salienteye/error.hpp"

namespace salienteye {

// Decoded 8-bit image, RGB interleaved. Palette/gray/16-bit sources are
// converted on decode; alpha is composited onto white.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> rgb;  // width * height * 3

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

namespace detail {

inline ImageU8 decode_png(const unsigned char* bytes, std::size_t len, const std::string& name) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes, len))
    throw ValidationError("PNG decode failed for " + name + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  ImageU8 out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  if (out.width <= 0 || out.height <= 0) {
    png_image_free(&image);
    throw ValidationError("zero-area PNG: " + name);
  }
  out.rgb.resize(PNG_IMAGE_SIZE(image));
  const png_color white{255, 255, 255};
  if (!png_image_finish_read(&image, &white, out.rgb.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw ValidationError("PNG decode failed for " + name + ": " + msg);
  }
  return out;
}

struct JpegErrorTrap {
  jpeg_error_mgr pub;
  jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit_trap(j_common_ptr cinfo) {
  auto* trap = reinterpret_cast<JpegErrorTrap*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, trap->message);
  longjmp(trap->jump, 1);
}

inline ImageU8 decode_jpeg(const unsigned char* bytes, std::size_t len, const std::string& name) {
  jpeg_decompress_struct cinfo;
  JpegErrorTrap trap;
  cinfo.err = jpeg_std_error(&trap.pub);
  trap.pub.error_exit = jpeg_error_exit_trap;
  if (setjmp(trap.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ValidationError("JPEG decode failed for " + name + ": " + trap.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes, static_cast<unsigned long>(len));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  ImageU8 out;
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  if (out.width <= 0 || out.height <= 0) {
    jpeg_destroy_decompress(&cinfo);
    throw ValidationError("zero-area JPEG: " + name);
  }
  out.rgb.resize(out.pixel_count() * 3);
  const std::size_t stride = static_cast<std::size_t>(out.width) * 3;
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = out.rgb.data() + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace detail

// Sniffs PNG/JPEG by magic bytes and decodes.
inline ImageU8 decode_image(const unsigned char* bytes, std::size_t len, const std::string& name) {
  if (len >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G')
    return detail::decode_png(bytes, len, name);
  if (len >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF)
    return detail::decode_jpeg(bytes, len, name);
  throw ValidationError("not a PNG or JPEG file: " + name);
}

inline ImageU8 decode_image_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return decode_image(bytes.data(), bytes.size(), path.string());
}

inline void write_png(const std::filesystem::path& path, const ImageU8& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.rgb.data(), 0, nullptr))
    throw ValidationError("PNG encode failed for " + path.string() + ": " + image.message);
}

}  // namespace salienteye
