// rsan/timeline.h

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef RSAN_TIMELINE_H_
#define RSAN_TIMELINE_H_

#include <map>
#include <set>
#include <string>
#include <vector>

namespace rsan {

struct Segment {
  std::string speaker;
  double start = 0.0;  // seconds
  double end = 0.0;

  double duration() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

// Speaker activity annotation. After Normalize(), segments of one speaker are
// disjoint and sorted, and every segment has start < end.
class Timeline {
 public:
  Timeline() = default;
  explicit Timeline(std::vector<Segment> segments);

  void Add(const std::string& speaker, double start, double end);
  void Normalize();

  const std::vector<Segment>& segments() const { return segments_; }
  std::set<std::string> Speakers() const;
  bool empty() const { return segments_.empty(); }
  double TotalSpeech() const;
  double End() const;

  // Returns a copy with speaker ids renamed via `mapping` (unmapped ids kept).
  Timeline Relabel(const std::map<std::string, std::string>& mapping) const;

  bool operator==(const Timeline&) const = default;

 private:
  std::vector<Segment> segments_;
};

// RTTM lines: SPEAKER <file> 1 <tbeg> <tdur> <NA> <NA> <spk> <NA> <NA>
std::string FormatRttm(const Timeline& timeline, const std::string& file_id);
void WriteRttm(const std::string& path, const Timeline& timeline,
               const std::string& file_id);
// All SPEAKER lines grouped by file id.
std::map<std::string, Timeline> ReadRttm(const std::string& path);

}  // namespace rsan

#endif  // RSAN_TIMELINE_H_
