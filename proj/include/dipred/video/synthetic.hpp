#pragma once

// Synthetic multi-action videos: a bright soft-edged disk moving over a
// static low-amplitude texture. Coordinates wrap around the frame (torus).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dipred/video/video.hpp"

namespace dipred {

struct ActionStep {
  ClassId action;
  std::size_t duration;   // frames, >= 1
  std::size_t gap_after;  // still frames after the action
};

struct ActionScript {
  std::vector<ActionStep> steps;
  std::size_t lead_in = 0;  // still frames before the first action
  double radius = 4.0;      // base disk radius in pixels
  double speed = 0.5;       // pixels per frame for translations
  double grow_rate = 0.12;  // radius increase per frame while growing
  // Initial centre; negative means drawn from the seed.
  double start_x = -1.0;
  double start_y = -1.0;
  std::uint64_t seed = 0;

  std::size_t total_frames() const {
    std::size_t n = lead_in;
    for (const auto& s : steps) n += s.duration + s.gap_after;
    return n;
  }
};

// Parameters for drawing random scripts (one per video).
struct ScriptSampler {
  std::size_t actions = 5;
  std::size_t min_duration = 50;
  std::size_t max_duration = 90;
  std::size_t min_gap = 0;
  std::size_t max_gap = 20;
  std::size_t max_lead_in = 10;
  double radius = 4.0;
  double speed = 0.5;
  double grow_rate = 0.12;
};

inline ActionScript sample_script(const ScriptSampler& p, std::uint64_t seed) {
  if (p.actions == 0) throw Error("script needs at least one action");
  if (p.min_duration == 0 || p.min_duration > p.max_duration) throw Error("invalid action duration range");
  if (p.min_gap > p.max_gap) throw Error("invalid gap range");
  std::mt19937_64 rng(seed);
  ActionScript s;
  s.radius = p.radius;
  s.speed = p.speed;
  s.grow_rate = p.grow_rate;
  s.seed = rng();
  s.lead_in = std::uniform_int_distribution<std::size_t>(0, p.max_lead_in)(rng);
  std::uniform_int_distribution<std::size_t> dur(p.min_duration, p.max_duration);
  std::uniform_int_distribution<std::size_t> gap(p.min_gap, p.max_gap);
  std::uniform_int_distribution<int> cls(0, kNumActionClasses - 1);
  ClassId prev = kGap;
  for (std::size_t i = 0; i < p.actions; ++i) {
    ClassId c = cls(rng);
    while (c == prev) c = cls(rng);
    prev = c;
    const std::size_t d = dur(rng);
    const std::size_t g = i + 1 < p.actions ? gap(rng) : 0;
    s.steps.push_back({c, d, g});
  }
  return s;
}

namespace detail {

struct DiskState {
  double x, y, r;
};

inline double wrapped_delta(double a, double b, double period) {
  double d = std::fabs(a - b);
  d = std::fmod(d, period);
  return std::min(d, period - d);
}

inline Frame render(const Frame& background, const DiskState& s, const std::array<float, 3>& color) {
  Frame f = background;
  const std::size_t h = f.height(), w = f.width();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = wrapped_delta(x + 0.5, s.x, static_cast<double>(w));
      const double dy = wrapped_delta(y + 0.5, s.y, static_cast<double>(h));
      const double dist = std::sqrt(dx * dx + dy * dy);
      const float a = static_cast<float>(std::clamp(s.r + 0.5 - dist, 0.0, 1.0));
      if (a <= 0.0f) continue;
      for (std::size_t c = 0; c < 3; ++c)
        f.at(c, y, x) = f.at(c, y, x) * (1.0f - a) + color[c] * a;
    }
  return f;
}

inline Frame make_background(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Frame raw({3, h, w});
  for (auto& v : raw.data()) v = u(rng);
  // 3x3 box blur (wrapping), then map into a dim band.
  Frame bg({3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            acc += raw.at(c, (y + h + dy) % h, (x + w + dx) % w);
        bg.at(c, y, x) = 0.1f + 0.25f * (acc / 9.0f);
      }
  return bg;
}

}  // namespace detail

// Renders `script` at H x W. Gap frames repeat the previous frame exactly;
// `grow` inflates the disk from the base radius over the action.
inline VideoSequence gen_synthetic(const ActionScript& script, std::size_t height, std::size_t width,
                                   std::string name = "synthetic") {
  if (height % 8 || width % 8) throw Error("synthetic frame size must be divisible by 8");
  for (const auto& s : script.steps) {
    if (s.action < 0 || s.action >= kNumActionClasses)
      throw Error("unknown action class id " + std::to_string(s.action));
    if (s.duration == 0) throw Error("action duration must be at least 1");
  }

  std::mt19937_64 rng(script.seed);
  const Frame background = detail::make_background(height, width, rng);
  std::uniform_real_distribution<float> jitter(-0.05f, 0.05f);
  const std::array<float, 3> color{0.95f + jitter(rng), 0.85f + jitter(rng), 0.35f + jitter(rng)};
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(width));
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(height));
  detail::DiskState st{ux(rng), uy(rng), script.radius};
  if (script.start_x >= 0) st.x = script.start_x;
  if (script.start_y >= 0) st.y = script.start_y;

  VideoSequence v;
  v.name = std::move(name);
  v.frames.reserve(script.total_frames());
  v.labels.reserve(script.total_frames());
  auto emit_still = [&](std::size_t n) {
    if (n == 0) return;
    const Frame f = detail::render(background, st, color);
    for (std::size_t i = 0; i < n; ++i) {
      v.frames.push_back(f);
      v.labels.push_back(kGap);
    }
  };

  emit_still(script.lead_in);
  for (const auto& step : script.steps) {
    for (std::size_t i = 0; i < step.duration; ++i) {
      switch (step.action) {
        case kTranslateRight: st.x += script.speed; break;
        case kTranslateLeft: st.x -= script.speed; break;
        case kTranslateDown: st.y += script.speed; break;
        case kGrow: st.r = script.radius + script.grow_rate * static_cast<double>(i + 1); break;
      }
      st.x = std::fmod(st.x + width, static_cast<double>(width));
      st.y = std::fmod(st.y + height, static_cast<double>(height));
      v.frames.push_back(detail::render(background, st, color));
      v.labels.push_back(step.action);
    }
    emit_still(step.gap_after);
  }
  return v;
}

}  // namespace dipred
