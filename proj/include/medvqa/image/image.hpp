// Copyright 2026 The medvqa Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MEDVQA_IMAGE_IMAGE_HPP_
#define MEDVQA_IMAGE_IMAGE_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "medvqa/core/error.hpp"
#include "medvqa/core/tensor.hpp"

namespace medvqa::img {

/// Decoded raster, CHW layout, values in [0, 1].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;  // channels * height * width

  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
};

namespace detail {

// Skips whitespace and '#' comment lines, then reads one token.
inline std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
    } else if (!std::isspace(c)) {
      tok += static_cast<char>(c);
      while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#') {
        tok += static_cast<char>(in.get());
      }
      return tok;
    }
  }
  return tok;
}

}  // namespace detail

/// Reads a PNM image (PGM P2/P5, PPM P3/P6). Medical fixture and corpus
/// images in this toolkit are stored as PNM.
inline Image decode_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::DecodeFailure, "cannot open: " + path.string());
  }
  const std::string magic = detail::next_token(in);
  bool binary, color;
  if (magic == "P2") { binary = false; color = false; }
  else if (magic == "P3") { binary = false; color = true; }
  else if (magic == "P5") { binary = true; color = false; }
  else if (magic == "P6") { binary = true; color = true; }
  else {
    throw Error(ErrorKind::DecodeFailure,
                "not a PNM image: " + path.string());
  }

  Image im;
  try {
    im.width = std::stoul(detail::next_token(in));
    im.height = std::stoul(detail::next_token(in));
  } catch (const std::exception&) {
    throw Error(ErrorKind::DecodeFailure, "bad PNM header: " + path.string());
  }
  const std::string maxval_tok = detail::next_token(in);
  unsigned long maxval = 0;
  try {
    maxval = std::stoul(maxval_tok);
  } catch (const std::exception&) {
    throw Error(ErrorKind::DecodeFailure, "bad PNM maxval: " + path.string());
  }
  if (maxval == 0 || maxval > 255 || im.width == 0 || im.height == 0) {
    throw Error(ErrorKind::DecodeFailure,
                "unsupported PNM parameters: " + path.string());
  }
  im.channels = color ? 3 : 1;
  const std::size_t n = im.channels * im.height * im.width;
  im.data.resize(n);
  const double scale = 1.0 / static_cast<double>(maxval);

  if (binary) {
    in.get();  // single whitespace byte after maxval
    std::vector<unsigned char> raw(n);
    // interleaved pixel order in file; convert to CHW
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(n));
    if (!in) {
      throw Error(ErrorKind::DecodeFailure,
                  "truncated PNM data: " + path.string());
    }
    for (std::size_t y = 0; y < im.height; ++y) {
      for (std::size_t x = 0; x < im.width; ++x) {
        for (std::size_t c = 0; c < im.channels; ++c) {
          im.at(c, y, x) =
              raw[(y * im.width + x) * im.channels + c] * scale;
        }
      }
    }
  } else {
    for (std::size_t y = 0; y < im.height; ++y) {
      for (std::size_t x = 0; x < im.width; ++x) {
        for (std::size_t c = 0; c < im.channels; ++c) {
          const std::string tok = detail::next_token(in);
          if (tok.empty()) {
            throw Error(ErrorKind::DecodeFailure,
                        "truncated PNM data: " + path.string());
          }
          im.at(c, y, x) = std::stod(tok) * scale;
        }
      }
    }
  }
  return im;
}

inline Image decode_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::DecodeFailure, "no such file: " + path.string());
  }
  return decode_pnm(path);
}

/// Writes a binary PGM/PPM; used by fixtures and the synthetic data tools.
inline void write_pnm(const std::filesystem::path& path, const Image& im) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::WriteFailure, "cannot write: " + path.string());
  }
  out << (im.channels == 3 ? "P6" : "P5") << "\n"
      << im.width << " " << im.height << "\n255\n";
  for (std::size_t y = 0; y < im.height; ++y) {
    for (std::size_t x = 0; x < im.width; ++x) {
      for (std::size_t c = 0; c < im.channels; ++c) {
        double v = im.at(c, y, x);
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        out.put(static_cast<char>(
            static_cast<unsigned char>(v * 255.0 + 0.5)));
      }
    }
  }
}

/// Bilinear resize of one channel plane.
inline void resize_plane(const Image& src, std::size_t c, std::size_t out_h,
                         std::size_t out_w, double* dst) {
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = out_h > 1
        ? static_cast<double>(oy) * (src.height - 1) / (out_h - 1)
        : 0.0;
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = out_w > 1
          ? static_cast<double>(ox) * (src.width - 1) / (out_w - 1)
          : 0.0;
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = src.at(c, y0, x0) * (1.0 - wx) + src.at(c, y0, x1) * wx;
      const double bot = src.at(c, y1, x0) * (1.0 - wx) + src.at(c, y1, x1) * wx;
      dst[oy * out_w + ox] = top * (1.0 - wy) + bot * wy;
    }
  }
}

struct Normalization {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> std{0.5, 0.5, 0.5};
};

/// Decode + resize to R×R + per-channel normalize -> tensor [3, R, R].
/// Grayscale inputs are replicated across the three channels.
inline Tensor load_and_preprocess_image(const std::filesystem::path& path,
                                        std::size_t target_resolution,
                                        const Normalization& norm = {}) {
  const Image im = decode_image(path);
  const std::size_t r = target_resolution;
  Tensor out({3, r, r});
  std::vector<double> plane(r * r);
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t src_c = im.channels == 3 ? c : 0;
    resize_plane(im, src_c, r, r, plane.data());
    for (std::size_t p = 0; p < r * r; ++p) {
      out[c * r * r + p] = (plane[p] - norm.mean[c]) / norm.std[c];
    }
  }
  return out;
}

/// Decode + resize to S×S single-channel (autoencoder input), no
/// normalization beyond the [0, 1] pixel range.
inline Tensor load_grayscale(const std::filesystem::path& path,
                             std::size_t size) {
  const Image im = decode_image(path);
  Tensor out({1, size, size});
  if (im.channels == 1) {
    resize_plane(im, 0, size, size, out.data());
  } else {
    std::vector<double> plane(size * size);
    out.fill(0.0);
    for (std::size_t c = 0; c < 3; ++c) {
      resize_plane(im, c, size, size, plane.data());
      for (std::size_t p = 0; p < size * size; ++p) {
        out[p] += plane[p] / 3.0;
      }
    }
  }
  return out;
}

}  // namespace medvqa::img

#endif  // MEDVQA_IMAGE_IMAGE_HPP_
