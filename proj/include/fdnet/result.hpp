#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fdnet {

/// Point estimate(s) plus what produced them.
struct EstimateResult {
  std::vector<double> estimate;
  std::map<std::string, double> components;
  std::size_t n = 0;
  std::optional<int> n2;
  std::map<std::string, double> diagnostics;
  std::optional<std::uint64_t> seed;
  std::string config;

  double scalar() const { return estimate.empty() ? 0.0 : estimate.front(); }
};

}  // namespace fdnet
