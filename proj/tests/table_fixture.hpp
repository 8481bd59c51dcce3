#pragma once

#include <array>
#include <string>
#include <vector>

#include "hgtnet/metrics.hpp"

namespace hgt::testing {

// Lung/colon reference confusion counts (2499 samples). Recalls are 474/500,
// 490/500, 472/500, 499/500 and 453/499; errors fall mostly on
// colon_aca -> colon_n and lung_aca <-> lung_scc. Rendered, every cell of the
// reference metrics table comes out as listed in metrics_test.
inline constexpr std::array<std::array<int, 5>, 5> kReferenceCounts{{
    {474, 25, 1, 0, 0},
    {8, 490, 2, 0, 0},
    {4, 0, 472, 3, 21},
    {0, 0, 1, 499, 0},
    {0, 0, 46, 0, 453},
}};

inline std::vector<metrics::PredictionRecord> reference_records() {
  std::vector<metrics::PredictionRecord> out;
  for (std::size_t a = 0; a < 5; ++a)
    for (std::size_t p = 0; p < 5; ++p)
      for (int i = 0; i < kReferenceCounts[a][p]; ++i) {
        std::vector<double> scores(5, 0.05);
        scores[p] = 0.8;
        out.push_back({"t" + std::to_string(out.size()), static_cast<int>(a), scores});
      }
  return out;
}

}  // namespace hgt::testing
