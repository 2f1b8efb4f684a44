// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/pipeline/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "safetune/core/container.hpp"
#include "safetune/core/error.hpp"

namespace safetune::pipeline {

std::string encode_pnm(const policy::Image& image) {
  const auto& s = image.shape;
  if (s.channels != 1 && s.channels != 3)
    throw InvalidArgument(fmt::format("netpbm supports 1 or 3 channels, image has {}", s.channels));
  std::string out = fmt::format("{}\n{} {}\n255\n", s.channels == 1 ? "P5" : "P6", s.width, s.height);
  for (int h = 0; h < s.height; ++h)
    for (int w = 0; w < s.width; ++w)
      for (int c = 0; c < s.channels; ++c) {
        const double v = std::clamp(image.at(c, h, w), 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
  return out;
}

namespace {

// Header tokens are separated by whitespace; '#' starts a comment to end of line.
class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : b_(bytes) {}

  std::string token() {
    skip();
    const std::size_t start = pos_;
    while (pos_ < b_.size() && !std::isspace(static_cast<unsigned char>(b_[pos_]))) ++pos_;
    if (start == pos_) throw FormatError("netpbm header is truncated");
    return b_.substr(start, pos_ - start);
  }

  int number() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      throw FormatError(fmt::format("netpbm header has a bad number '{}'", t));
    return std::stoi(t);
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= b_.size()) throw FormatError("netpbm file has no raster");
    return pos_ + 1;
  }

 private:
  void skip() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

policy::Image decode_pnm(const std::string& bytes) {
  HeaderReader r(bytes);
  const std::string magic = r.token();
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw FormatError(fmt::format("unsupported netpbm magic '{}' (need P5 or P6)", magic));
  }
  const int width = r.number();
  const int height = r.number();
  const int maxval = r.number();
  if (width < 1 || height < 1) throw FormatError("netpbm image has zero size");
  if (maxval < 1 || maxval > 255) throw FormatError(fmt::format("netpbm maxval {} is not supported", maxval));
  const std::size_t start = r.raster_start();
  const std::size_t need = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() < start + need)
    throw FormatError(fmt::format("netpbm raster is truncated ({} of {} bytes)", bytes.size() - std::min(bytes.size(), start), need));

  policy::Image image;
  image.shape = {channels, height, width};
  image.pixels.resize(static_cast<Eigen::Index>(need));
  std::size_t k = start;
  for (int h = 0; h < height; ++h)
    for (int w = 0; w < width; ++w)
      for (int c = 0; c < channels; ++c)
        image.pixels[image.shape.index(c, h, w)] = static_cast<unsigned char>(bytes[k++]) / static_cast<double>(maxval);
  return image;
}

void write_pnm(const std::filesystem::path& path, const policy::Image& image) { write_file(path, encode_pnm(image)); }

policy::Image read_pnm(const std::filesystem::path& path) {
  try {
    return decode_pnm(read_file(path));
  } catch (const Error& e) {
    throw FormatError(fmt::format("cannot read image '{}': {}", path.string(), e.what()));
  }
}

}  // namespace safetune::pipeline
