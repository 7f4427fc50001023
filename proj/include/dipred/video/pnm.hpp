#pragma once

// Binary 8-bit PGM (P5) / PPM (P6) frames.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include "dipred/video/video.hpp"

namespace dipred::pnm {

namespace detail {

inline void skip_space_and_comments(std::istream& is) {
  for (;;) {
    const int c = is.peek();
    if (c == '#') {
      std::string dummy;
      std::getline(is, dummy);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      is.get();
    } else {
      return;
    }
  }
}

inline std::size_t read_header_int(std::istream& is, const std::string& path) {
  skip_space_and_comments(is);
  long v = -1;
  if (!(is >> v) || v <= 0) throw Error("malformed PNM header: " + path);
  return static_cast<std::size_t>(v);
}

inline unsigned char quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

}  // namespace detail

// Reads a P5/P6 file; grayscale is replicated to three channels.
inline Frame read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read frame: " + path);
  std::string magic(2, '\0');
  is.read(magic.data(), 2);
  if (magic != "P5" && magic != "P6") throw Error("not a binary PGM/PPM file: " + path);
  const std::size_t w = detail::read_header_int(is, path);
  const std::size_t h = detail::read_header_int(is, path);
  const std::size_t maxval = detail::read_header_int(is, path);
  if (maxval != 255) throw Error("only 8-bit PNM is supported: " + path);
  is.get();  // single whitespace before the raster
  const std::size_t src_channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> raster(w * h * src_channels);
  if (!is.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size())))
    throw Error("truncated PNM raster: " + path);
  Frame f({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t sc = src_channels == 3 ? c : 0;
        f.at(c, y, x) = raster[(y * w + x) * src_channels + sc] / 255.0f;
      }
  return f;
}

// Writes a 3-channel frame as P6 (values clamped to [0, 1]).
inline void write_ppm(const std::string& path, const Frame& f) {
  if (f.rank() != 3 || f.channels() != 3) throw ShapeError("write_ppm: frame must be 3 x H x W");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write frame: " + path);
  const std::size_t h = f.height(), w = f.width();
  os << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> raster(w * h * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) raster[(y * w + x) * 3 + c] = detail::quantize(f.at(c, y, x));
  os.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!os) throw Error("write failed: " + path);
}

// Glob match supporting '*' and '?'.
inline bool wildcard_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

// Loads every file in `dir` whose name matches `pattern`, in lexicographic order.
inline VideoSequence load_frames(const std::string& dir, const std::string& pattern = "*.p?m") {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (wildcard_match(pattern, name)) names.push_back(name);
  }
  if (names.empty()) throw Error("no frames in " + dir + " matching " + pattern);
  std::sort(names.begin(), names.end());
  VideoSequence v;
  v.name = fs::path(dir).filename().string();
  for (const auto& n : names) {
    v.frames.push_back(read((fs::path(dir) / n).string()));
    if (v.frames.back().shape() != v.frames.front().shape())
      throw ShapeError("inconsistent frame dimensions at " + n + " in " + dir);
  }
  return v;
}

inline std::string frame_filename(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu.ppm", i);
  return buf;
}

inline void save_frames(const VideoSequence& video, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t i = 0; i < video.length(); ++i)
    write_ppm((fs::path(dir) / frame_filename(i)).string(), video.frames[i]);
}

}  // namespace dipred::pnm
