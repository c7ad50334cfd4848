// rsan/timeline.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "rsan/timeline.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rsan/types.h"

namespace rsan {

Timeline::Timeline(std::vector<Segment> segments)
    : segments_(std::move(segments)) {
  Normalize();
}

void Timeline::Add(const std::string& speaker, double start, double end) {
  if (!(start < end))
    throw Error("segment for " + speaker + " has start >= end");
  segments_.push_back({speaker, start, end});
}

void Timeline::Normalize() {
  std::erase_if(segments_, [](const Segment& s) { return !(s.start < s.end); });
  std::sort(segments_.begin(), segments_.end(),
            [](const Segment& a, const Segment& b) {
              if (a.speaker != b.speaker) return a.speaker < b.speaker;
              if (a.start != b.start) return a.start < b.start;
              return a.end < b.end;
            });
  std::vector<Segment> merged;
  for (const auto& s : segments_) {
    if (!merged.empty() && merged.back().speaker == s.speaker &&
        s.start <= merged.back().end) {
      merged.back().end = std::max(merged.back().end, s.end);
    } else {
      merged.push_back(s);
    }
  }
  segments_ = std::move(merged);
}

std::set<std::string> Timeline::Speakers() const {
  std::set<std::string> out;
  for (const auto& s : segments_) out.insert(s.speaker);
  return out;
}

double Timeline::TotalSpeech() const {
  double total = 0.0;
  for (const auto& s : segments_) total += s.duration();
  return total;
}

double Timeline::End() const {
  double end = 0.0;
  for (const auto& s : segments_) end = std::max(end, s.end);
  return end;
}

Timeline Timeline::Relabel(
    const std::map<std::string, std::string>& mapping) const {
  std::vector<Segment> out = segments_;
  for (auto& s : out) {
    auto it = mapping.find(s.speaker);
    if (it != mapping.end()) s.speaker = it->second;
  }
  return Timeline(std::move(out));
}

std::string FormatRttm(const Timeline& timeline, const std::string& file_id) {
  std::vector<Segment> segs = timeline.segments();
  std::stable_sort(segs.begin(), segs.end(),
                   [](const Segment& a, const Segment& b) {
                     if (a.start != b.start) return a.start < b.start;
                     return a.speaker < b.speaker;
                   });
  std::string out;
  char line[512];
  for (const auto& s : segs) {
    std::snprintf(line, sizeof(line),
                  "SPEAKER %s 1 %.3f %.3f <NA> <NA> %s <NA> <NA>\n",
                  file_id.c_str(), s.start, s.duration(), s.speaker.c_str());
    out += line;
  }
  return out;
}

void WriteRttm(const std::string& path, const Timeline& timeline,
               const std::string& file_id) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << FormatRttm(timeline, file_id);
}

std::map<std::string, Timeline> ReadRttm(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  std::map<std::string, std::vector<Segment>> raw;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string type, file, channel, tbeg, tdur, ortho, stype, name;
    if (!(ss >> type)) continue;
    if (type != "SPEAKER") continue;
    if (!(ss >> file >> channel >> tbeg >> tdur >> ortho >> stype >> name))
      throw Error(path + ":" + std::to_string(lineno) + ": malformed RTTM line");
    double start = 0.0, dur = 0.0;
    try {
      start = std::stod(tbeg);
      dur = std::stod(tdur);
    } catch (const std::exception&) {
      throw Error(path + ":" + std::to_string(lineno) + ": bad time field");
    }
    raw[file];  // files with only zero-length lines still appear
    if (dur > 0.0) raw[file].push_back({name, start, start + dur});
  }
  std::map<std::string, Timeline> out;
  for (auto& [file, segs] : raw) out.emplace(file, Timeline(std::move(segs)));
  return out;
}

}  // namespace rsan
