#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstdlib>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "lanegen/error.hpp"
#include "lanegen/image.hpp"

namespace lanegen {

namespace fs = std::filesystem;

inline std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Write via a sibling temp file and rename so readers never see a partial file.
inline void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_file_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// Leaves the file untouched when its bytes already match. Returns true if written.
inline bool write_file_if_changed(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::error_code ec;
  if (fs::exists(path, ec) && fs::file_size(path, ec) == bytes.size()) {
    const auto current = read_file_bytes(path);
    if (std::equal(current.begin(), current.end(), bytes.begin(), bytes.end())) return false;
  }
  write_file_atomic(path, bytes);
  return true;
}

inline bool write_file_if_changed(const fs::path& path, const std::string& text) {
  return write_file_if_changed(
      path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace detail {

struct PngReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

inline void png_error_throw(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::jmp_buf*>(png_get_error_ptr(png));
  (void)msg;
  std::longjmp(*buf, 1);
}

inline void png_warning_ignore(png_structp, png_const_charp) {}

}  // namespace detail

inline ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw ParseError("not a PNG stream");
  std::jmp_buf jmp;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &jmp, detail::png_error_throw,
                                           detail::png_warning_ignore);
  if (!png) throw ParseError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  detail::PngReadCursor cursor{bytes, 0};
  // Everything touched after setjmp lives outside the protected scope.
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  if (setjmp(jmp)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("corrupt PNG stream");
  }
  png_set_read_fn(png, &cursor, [](png_structp p, png_bytep out, png_size_t len) {
    auto* c = static_cast<detail::PngReadCursor*>(png_get_io_ptr(p));
    if (c->offset + len > c->bytes.size()) png_error(p, "truncated");
    std::memcpy(out, c->bytes.data() + c->offset, len);
    c->offset += len;
  });
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != width * 3) png_error(png, "unexpected row layout");
  pixels.resize(static_cast<std::size_t>(width) * height * 3);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return ImageBuffer(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

namespace detail {

inline std::vector<std::uint8_t> encode_png_raw(const std::uint8_t* data, int width, int height, int channels) {
  std::jmp_buf jmp;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &jmp, png_error_throw, png_warning_ignore);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(jmp)) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep src, png_size_t len) {
        auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        v->insert(v->end(), src, src + len);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  return detail::encode_png_raw(img.data().data(), img.width(), img.height(), 3);
}

// Single-channel PNG with samples 0/255.
inline std::vector<std::uint8_t> encode_mask_png(const GrayMask& mask) {
  std::vector<std::uint8_t> gray(mask.size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = mask.data()[i] ? 255 : 0;
  return detail::encode_png_raw(gray.data(), mask.width(), mask.height(), 1);
}

// Any sample >= 128 in the first channel counts as set.
inline GrayMask decode_mask_png(std::span<const std::uint8_t> bytes) {
  const ImageBuffer img = decode_png(bytes);
  GrayMask m(img.width(), img.height());
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = img.data()[3 * i] >= 128 ? 1 : 0;
  return m;
}

namespace detail {

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jmp;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  std::longjmp(mgr->jmp, 1);
}

}  // namespace detail

inline ImageBuffer decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  detail::JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = detail::jpeg_error_exit;
  std::vector<std::uint8_t> pixels;
  if (setjmp(err.jmp)) {
    jpeg_destroy_decompress(&cinfo);
    throw ParseError("corrupt JPEG stream");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int w = static_cast<int>(cinfo.output_width), h = static_cast<int>(cinfo.output_height);
  pixels.resize(static_cast<std::size_t>(w) * h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return ImageBuffer(w, h, std::move(pixels));
}

inline std::vector<std::uint8_t> encode_jpeg(const ImageBuffer& img, int quality = 95) {
  jpeg_compress_struct cinfo{};
  detail::JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = detail::jpeg_error_exit;
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  if (setjmp(err.jmp)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw IoError("JPEG encoding failed");
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width());
  cinfo.image_height = static_cast<JDIMENSION>(img.height());
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(img.data().data() + static_cast<std::size_t>(cinfo.next_scanline) * img.width() * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

inline bool is_jpeg_path(const fs::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".jpg" || ext == ".jpeg";
}

inline bool is_image_path(const fs::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

// Format chosen by file extension (.jpg/.jpeg or .png).
inline ImageBuffer read_image(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return is_jpeg_path(path) ? decode_jpeg(bytes) : decode_png(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline std::vector<std::uint8_t> encode_image_for(const fs::path& path, const ImageBuffer& img) {
  return is_jpeg_path(path) ? encode_jpeg(img) : encode_png(img);
}

inline void write_image(const fs::path& path, const ImageBuffer& img) {
  write_file_atomic(path, encode_image_for(path, img));
}

inline void write_mask(const fs::path& path, const GrayMask& mask) {
  write_file_atomic(path, encode_mask_png(mask));
}

inline GrayMask read_mask(const fs::path& path) { return decode_mask_png(read_file_bytes(path)); }

}  // namespace lanegen
