#include "polyrep/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace polyrep::io {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Error io_error(const fs::path& path, const std::string& what) {
  return Error(ErrorKind::kIo, path.string() + ": " + what);
}

bool has_png_signature(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

// Skips whitespace and '#' comments in a PNM header.
int read_pnm_int(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  return value;
}

Image read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path, "cannot open");
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5" && magic != "P2") throw io_error(path, "not a PGM file");
  const int width = read_pnm_int(in);
  const int height = read_pnm_int(in);
  const int maxval = read_pnm_int(in);
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw io_error(path, "bad PGM header");
  }
  Image img(height, width);
  if (magic == "P2") {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        int v = read_pnm_int(in);
        if (v < 0) throw io_error(path, "truncated PGM data");
        img(y, x) = v;
      }
    }
    return img;
  }
  in.get();  // single whitespace after maxval
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(width) * height * bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw io_error(path, "truncated PGM data");
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * width + x) * bytes;
      img(y, x) = bytes == 2 ? (buf[i] << 8 | buf[i + 1]) : buf[i];
    }
  }
  return img;
}

Image read_png(const fs::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw io_error(path, "cannot open");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw io_error(path, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw io_error(path, "corrupt PNG");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  if (depth == 16) png_set_swap(png);  // host little-endian words
  png_read_update_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> data(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = data.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(height, width);
  for (int y = 0; y < height; ++y) {
    const unsigned char* row = rows[y];
    for (int x = 0; x < width; ++x) {
      if (out_depth == 16) {
        img(y, x) = row[2 * x] | (row[2 * x + 1] << 8);
      } else {
        img(y, x) = row[x];
      }
    }
  }
  return img;
}

void write_png_rows(const fs::path& path, int width, int height, int color_type,
                    const std::vector<unsigned char>& data, std::size_t rowbytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw io_error(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw io_error(path, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw io_error(path, "PNG write failed");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<unsigned char*>(data.data() + y * rowbytes));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_image(const fs::path& path) {
  if (!fs::exists(path)) throw io_error(path, "file not found");
  return has_png_signature(path) ? read_png(path) : read_pgm(path);
}

Mask read_mask(const fs::path& path) {
  Image img = read_image(path);
  return img.array() != 0.0;
}

void write_pgm(const fs::path& path, const Image& image, int maxval) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error(path, "cannot open for writing");
  out << "P5\n" << image.cols() << ' ' << image.rows() << '\n' << maxval << '\n';
  const bool wide = maxval > 255;
  for (Eigen::Index y = 0; y < image.rows(); ++y) {
    for (Eigen::Index x = 0; x < image.cols(); ++x) {
      const double v = std::clamp(std::round(image(y, x)), 0.0, static_cast<double>(maxval));
      const auto iv = static_cast<unsigned>(v);
      if (wide) out.put(static_cast<char>(iv >> 8));
      out.put(static_cast<char>(iv & 0xff));
    }
  }
  if (!out) throw io_error(path, "write failed");
}

void write_mask_pgm(const fs::path& path, const Mask& mask) {
  write_pgm(path, mask.cast<double>().matrix() * 255.0, 255);
}

void write_png_gray(const fs::path& path, const Image& unit) {
  const int h = static_cast<int>(unit.rows());
  const int w = static_cast<int>(unit.cols());
  std::vector<unsigned char> data(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      data[static_cast<std::size_t>(y) * w + x] = static_cast<unsigned char>(
          std::lround(std::clamp(unit(y, x), 0.0, 1.0) * 255.0));
    }
  }
  write_png_rows(path, w, h, PNG_COLOR_TYPE_GRAY, data, w);
}

void write_png_rgb(const fs::path& path, const RgbImage& image) {
  std::vector<unsigned char> data(image.pixels.size() * 3);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    for (int c = 0; c < 3; ++c) data[3 * i + c] = image.pixels[i][c];
  }
  write_png_rows(path, image.width, image.height, PNG_COLOR_TYPE_RGB, data,
                 static_cast<std::size_t>(image.width) * 3);
}

}  // namespace polyrep::io
