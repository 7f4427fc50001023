#pragma once

#include <span>
#include <string>
#include <vector>

#include "dipred/labels.hpp"
#include "dipred/numerics/tensor.hpp"

namespace dipred {

using Frame = Tensor<float>;

// Ordered 3 x H x W frames with values in [0, 1].
struct VideoSequence {
  std::string name;
  std::vector<Frame> frames;
  double fps = 30.0;
  std::vector<ClassId> labels;  // empty, or one per frame

  std::size_t length() const noexcept { return frames.size(); }
  std::size_t height() const { return frames.at(0).height(); }
  std::size_t width() const { return frames.at(0).width(); }

  void validate() const {
    for (const auto& f : frames) {
      if (f.rank() != 3 || f.channels() != 3)
        throw ShapeError("video " + name + ": frames must be 3 x H x W");
      if (f.shape() != frames.front().shape())
        throw ShapeError("video " + name + ": inconsistent frame shapes");
    }
    if (!labels.empty() && labels.size() != frames.size())
      throw ShapeError("video " + name + ": label count does not match frame count");
  }

  LabelTimeline timeline() const { return LabelTimeline(labels); }
};

struct WindowSpec {
  std::size_t window = 30;
  std::size_t stride = 5;

  void validate() const {
    if (window < 2) throw Error("window size must be at least 2");
    if (stride < 1) throw Error("window stride must be at least 1");
  }
};

struct FrameWindow {
  std::size_t start;
  std::span<const Frame> frames;
};

inline std::size_t window_count(std::size_t length, const WindowSpec& spec) {
  spec.validate();
  if (length < spec.window) return 0;
  return (length - spec.window) / spec.stride + 1;
}

// Windows start at 0, s, 2s, ...; a window that would run past the end is dropped.
// The returned spans alias `video.frames`.
inline std::vector<FrameWindow> sliding_windows(const VideoSequence& video, const WindowSpec& spec) {
  spec.validate();
  if (video.length() < spec.window)
    throw Error("video " + video.name + " has " + std::to_string(video.length()) +
                " frames, shorter than window " + std::to_string(spec.window));
  std::vector<FrameWindow> out;
  const std::size_t n = window_count(video.length(), spec);
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t start = i * spec.stride;
    out.push_back({start, std::span<const Frame>(video.frames).subspan(start, spec.window)});
  }
  return out;
}

}  // namespace dipred
