#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dipred/numerics/tensor.hpp"

namespace dipred {

using ClassId = int;

// Synthetic action classes. Non-negative ids are real actions.
inline constexpr ClassId kTranslateRight = 0;
inline constexpr ClassId kTranslateLeft = 1;
inline constexpr ClassId kTranslateDown = 2;
inline constexpr ClassId kGrow = 3;
inline constexpr int kNumActionClasses = 4;

// Inactivity between actions, before relabeling.
inline constexpr ClassId kGap = -1;
// Terminal marker for frames with no following action.
inline constexpr ClassId kEnd = -2;

inline std::string class_name(ClassId id) {
  switch (id) {
    case kTranslateRight: return "translate_right";
    case kTranslateLeft: return "translate_left";
    case kTranslateDown: return "translate_down";
    case kGrow: return "grow";
    case kGap: return "GAP";
    case kEnd: return "END";
    default: return "class_" + std::to_string(id);
  }
}

inline bool is_action(ClassId id) { return id >= 0; }

struct Segment {
  ClassId label;
  std::size_t begin;  // inclusive
  std::size_t end;    // exclusive
  bool operator==(const Segment&) const = default;
};

// Per-frame class ids with a run-length segment view.
class LabelTimeline {
 public:
  LabelTimeline() = default;
  explicit LabelTimeline(std::vector<ClassId> frames) : frames_(std::move(frames)) {}

  // Builds a timeline from (class, length) runs.
  static LabelTimeline from_runs(const std::vector<std::pair<ClassId, std::size_t>>& runs) {
    std::vector<ClassId> f;
    for (auto [c, n] : runs) f.insert(f.end(), n, c);
    return LabelTimeline(std::move(f));
  }

  const std::vector<ClassId>& frames() const noexcept { return frames_; }
  std::size_t size() const noexcept { return frames_.size(); }
  ClassId operator[](std::size_t i) const { return frames_.at(i); }

  std::vector<Segment> segments() const {
    std::vector<Segment> out;
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      if (out.empty() || out.back().label != frames_[i])
        out.push_back({frames_[i], i, i + 1});
      else
        out.back().end = i + 1;
    }
    return out;
  }

  bool operator==(const LabelTimeline&) const = default;

 private:
  std::vector<ClassId> frames_;
};

// Every GAP run takes the class of the next non-GAP run; a trailing GAP becomes END.
inline LabelTimeline relabel_gaps(const LabelTimeline& timeline) {
  std::vector<ClassId> out = timeline.frames();
  ClassId next = kEnd;
  for (std::size_t i = out.size(); i-- > 0;) {
    if (out[i] == kGap)
      out[i] = next;
    else
      next = out[i];
  }
  return LabelTimeline(std::move(out));
}

// CSV with header `frame,class_id`.
inline void write_timeline_csv(const std::string& path, const LabelTimeline& timeline) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open for writing: " + path);
  os << "frame,class_id\n";
  for (std::size_t i = 0; i < timeline.size(); ++i) os << i << ',' << timeline[i] << '\n';
  if (!os) throw Error("write failed: " + path);
}

inline LabelTimeline read_timeline_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "frame,class_id")
    throw Error("timeline CSV missing header: " + path);
  std::vector<ClassId> frames;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error("malformed timeline row in " + path);
    const auto frame = std::stoul(line.substr(0, comma));
    if (frame != frames.size()) throw Error("timeline rows out of order in " + path);
    frames.push_back(std::stoi(line.substr(comma + 1)));
  }
  return LabelTimeline(std::move(frames));
}

}  // namespace dipred
