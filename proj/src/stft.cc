// rsan/stft.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "rsan/stft.h"

#include <algorithm>

namespace rsan {

WindowType ParseWindow(const std::string& name) {
  if (name == "sqrt_hann" || name == "sqrthann") return WindowType::kSqrtHann;
  if (name == "hann") return WindowType::kHann;
  if (name == "rect") return WindowType::kRect;
  throw Error("unknown window type: " + name);
}

std::string WindowName(WindowType w) {
  switch (w) {
    case WindowType::kSqrtHann: return "sqrt_hann";
    case WindowType::kHann: return "hann";
    case WindowType::kRect: return "rect";
  }
  return "unknown";
}

void ValidateStftConfig(const StftConfig& cfg) {
  if (cfg.window_len <= 0 || cfg.hop <= 0 || cfg.hop > cfg.window_len)
    throw Error("invalid stft config: window_len " +
                std::to_string(cfg.window_len) + ", hop " +
                std::to_string(cfg.hop));
  if (cfg.window_len % 2 != 0) throw Error("stft window_len must be even");
}

double OverlapAddGain(const StftConfig& cfg) {
  ValidateStftConfig(cfg);
  const auto w = MakeWindow<double>(cfg);
  double lo = 1e300, hi = -1e300;
  for (int n = 0; n < cfg.hop; ++n) {
    double s = 0.0;
    for (int m = n; m < cfg.window_len; m += cfg.hop) s += w[m] * w[m];
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (hi <= 0.0 || hi - lo > 1e-9 * hi)
    throw Error("window/hop violates overlap-add");
  return 0.5 * (lo + hi);
}

}  // namespace rsan
