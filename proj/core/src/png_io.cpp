#include "usvis/png_io.hpp"

#include <png.h>

#include <cstring>
#include <string>

#include "usvis/error.hpp"
#include "usvis/vvol.hpp"

// libpng reports errors by longjmp. Every function below that calls setjmp
// keeps only trivially destructible locals after the setjmp point; buffers
// are owned by the caller.

namespace usvis {
namespace {

struct ErrorSink {
  char message[256] = {};
};

void on_png_error(png_structp png, png_const_charp text) {
  auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
  if (sink != nullptr) {
    std::strncpy(sink->message, text, sizeof(sink->message) - 1);
  }
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct MemoryReader {
  const std::byte* data;
  std::size_t size;
  std::size_t pos;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* reader = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (reader->pos + count > reader->size) {
    png_error(png, "unexpected end of PNG data");
  }
  std::memcpy(out, reader->data + reader->pos, count);
  reader->pos += count;
}

void write_to_memory(png_structp png, png_bytep in, png_size_t count) {
  auto* out = static_cast<std::vector<std::byte>*>(png_get_io_ptr(png));
  const auto* first = reinterpret_cast<const std::byte*>(in);
  out->insert(out->end(), first, first + count);
}

void flush_memory(png_structp) {}

struct DecodedHeader {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
  std::size_t row_bytes = 0;
};

// Phase 1: header. Returns false on libpng failure.
bool read_header(png_structp png, png_infop info, MemoryReader* reader, DecodedHeader* header,
                 bool gray_only) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_read_fn(png, reader, read_from_memory);
  png_read_info(png, info);
  header->width = png_get_image_width(png, info);
  header->height = png_get_image_height(png, info);
  header->bit_depth = png_get_bit_depth(png, info);
  header->color_type = png_get_color_type(png, info);
  if (gray_only) {
    if (header->color_type == PNG_COLOR_TYPE_GRAY && header->bit_depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
    }
  } else {
    // Normalize anything to 8-bit RGBA.
    if (header->bit_depth == 16) png_set_strip_16(png);
    if (header->color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (header->color_type == PNG_COLOR_TYPE_GRAY && header->bit_depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (header->color_type == PNG_COLOR_TYPE_GRAY || header->color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
      png_set_gray_to_rgb(png);
    }
    if (!(header->color_type & PNG_COLOR_MASK_ALPHA) && !png_get_valid(png, info, PNG_INFO_tRNS)) {
      png_set_filler(png, 0xff, PNG_FILLER_AFTER);
    }
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  header->row_bytes = png_get_rowbytes(png, info);
  return true;
}

// Phase 2: pixel rows into caller-owned storage.
bool read_rows(png_structp png, png_infop info, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, info);
  return true;
}

struct ReadContext {
  ErrorSink sink;
  png_structp png = nullptr;
  png_infop info = nullptr;

  ReadContext() {
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, on_png_error, on_png_warning);
    if (png != nullptr) info = png_create_info_struct(png);
    if (png == nullptr || info == nullptr) {
      png_destroy_read_struct(png ? &png : nullptr, nullptr, nullptr);
      throw Error(ErrorCode::IoError, "libpng initialization failed");
    }
  }
  ~ReadContext() { png_destroy_read_struct(&png, &info, nullptr); }
  ReadContext(const ReadContext&) = delete;
  ReadContext& operator=(const ReadContext&) = delete;
};

void require_png_signature(std::span<const std::byte> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw Error(ErrorCode::InvalidArgument, "data is not a PNG image");
  }
}

std::vector<std::uint8_t> decode_rows(ReadContext& ctx, MemoryReader& reader, DecodedHeader& header,
                                      bool gray_only) {
  if (!read_header(ctx.png, ctx.info, &reader, &header, gray_only)) {
    throw Error(ErrorCode::InvalidArgument, std::string("corrupt PNG: ") + ctx.sink.message);
  }
  if (gray_only && (header.color_type != PNG_COLOR_TYPE_GRAY ||
                    (header.bit_depth != 16 && header.bit_depth > 8))) {
    throw Error(ErrorCode::UnsupportedPixelFormat,
                "frames must be 8- or 16-bit grayscale PNG (color type " +
                    std::to_string(header.color_type) + ", bit depth " +
                    std::to_string(header.bit_depth) + ")");
  }
  std::vector<std::uint8_t> raw(header.row_bytes * header.height);
  std::vector<png_bytep> rows(header.height);
  for (std::size_t y = 0; y < header.height; ++y) rows[y] = raw.data() + y * header.row_bytes;
  if (!read_rows(ctx.png, ctx.info, rows.data())) {
    throw Error(ErrorCode::InvalidArgument, std::string("corrupt PNG: ") + ctx.sink.message);
  }
  return raw;
}

struct WriteContext {
  ErrorSink sink;
  png_structp png = nullptr;
  png_infop info = nullptr;

  WriteContext() {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, on_png_error, on_png_warning);
    if (png != nullptr) info = png_create_info_struct(png);
    if (png == nullptr || info == nullptr) {
      png_destroy_write_struct(png ? &png : nullptr, nullptr);
      throw Error(ErrorCode::IoError, "libpng initialization failed");
    }
  }
  ~WriteContext() { png_destroy_write_struct(&png, &info); }
  WriteContext(const WriteContext&) = delete;
  WriteContext& operator=(const WriteContext&) = delete;
};

bool write_image(png_structp png, png_infop info, std::vector<std::byte>* out, png_uint_32 width,
                 png_uint_32 height, int bit_depth, int color_type, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_write_fn(png, out, write_to_memory, flush_memory);
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  return true;
}

std::vector<std::byte> encode(std::size_t width, std::size_t height, int bit_depth, int color_type,
                              std::vector<std::uint8_t>& raw, std::size_t row_bytes) {
  if (width == 0 || height == 0) throw Error(ErrorCode::InvalidArgument, "empty image");
  WriteContext ctx;
  std::vector<std::byte> out;
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = raw.data() + y * row_bytes;
  if (!write_image(ctx.png, ctx.info, &out, static_cast<png_uint_32>(width),
                   static_cast<png_uint_32>(height), bit_depth, color_type, rows.data())) {
    throw Error(ErrorCode::IoError, std::string("PNG encoding failed: ") + ctx.sink.message);
  }
  return out;
}

}  // namespace

GrayImage decode_gray_png(std::span<const std::byte> bytes) {
  require_png_signature(bytes);
  ReadContext ctx;
  MemoryReader reader{bytes.data(), bytes.size(), 0};
  DecodedHeader header;
  const auto raw = decode_rows(ctx, reader, header, true);

  GrayImage image;
  image.width = header.width;
  image.height = header.height;
  image.bit_depth = header.bit_depth == 16 ? 16 : 8;
  image.pixels.resize(image.width * image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    const std::uint8_t* row = raw.data() + y * header.row_bytes;
    for (std::size_t x = 0; x < image.width; ++x) {
      image.pixels[y * image.width + x] =
          image.bit_depth == 16 ? static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1])
                                : row[x];
    }
  }
  return image;
}

GrayImage read_gray_png(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_gray_png(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::byte> encode_gray_png(const GrayImage& image) {
  if (image.bit_depth != 8 && image.bit_depth != 16) {
    throw Error(ErrorCode::UnsupportedPixelFormat, "gray PNG bit depth must be 8 or 16");
  }
  if (image.pixels.size() != image.width * image.height) {
    throw Error(ErrorCode::InvalidArgument, "pixel count does not match image size");
  }
  const std::size_t bytes_per_pixel = image.bit_depth == 16 ? 2 : 1;
  const std::size_t row_bytes = image.width * bytes_per_pixel;
  std::vector<std::uint8_t> raw(row_bytes * image.height);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const std::uint16_t v = image.pixels[i];
    if (image.bit_depth == 16) {
      raw[2 * i] = static_cast<std::uint8_t>(v >> 8);
      raw[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
    } else {
      if (v > 255) throw Error(ErrorCode::InvalidArgument, "8-bit pixel value above 255");
      raw[i] = static_cast<std::uint8_t>(v);
    }
  }
  return encode(image.width, image.height, image.bit_depth, PNG_COLOR_TYPE_GRAY, raw, row_bytes);
}

std::vector<std::byte> encode_rgba_png(const Rgba8Image& image) {
  if (image.pixels.size() != 4 * image.width * image.height) {
    throw Error(ErrorCode::InvalidArgument, "pixel count does not match image size");
  }
  std::vector<std::uint8_t> raw = image.pixels;
  return encode(image.width, image.height, 8, PNG_COLOR_TYPE_RGBA, raw, 4 * image.width);
}

Rgba8Image decode_rgba_png(std::span<const std::byte> bytes) {
  require_png_signature(bytes);
  ReadContext ctx;
  MemoryReader reader{bytes.data(), bytes.size(), 0};
  DecodedHeader header;
  auto raw = decode_rows(ctx, reader, header, false);
  Rgba8Image image;
  image.width = header.width;
  image.height = header.height;
  image.pixels = std::move(raw);
  return image;
}

}  // namespace usvis
