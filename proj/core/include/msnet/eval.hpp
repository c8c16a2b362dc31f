#pragma once

#include <string>
#include <vector>

namespace msnet {

// One reference/estimate frame; 0 Hz = unvoiced.
struct FramePair {
  double ref_f0 = 0.0;
  double est_f0 = 0.0;
};

struct Scores {
  double vr = 0.0;   // voicing recall
  double vfa = 0.0;  // voicing false alarm
  double rpa = 0.0;  // raw pitch accuracy
  double rca = 0.0;  // raw chroma accuracy
  double oa = 0.0;   // overall accuracy
};

// 1200 * log2(est/ref); both inputs must be positive.
double cent_diff(double ref_hz, double est_hz);

// Frame-level melody metrics with the 50-cent rule. Conventions: no voiced
// reference frames -> VR = RPA = RCA = 0; no unvoiced frames -> VFA = 0.
Scores score(const std::vector<FramePair>& frames);

// Nearest-neighbor resample of est onto ref_times (ties toward earlier),
// then score.
Scores score_contours(const std::vector<double>& ref_f0,
                      const std::vector<double>& est_f0,
                      const std::vector<double>& ref_times,
                      const std::vector<double>& est_times);

// Per-clip rows plus a mean row; columns VR, VFA, RPA, RCA, OA in percent
// with one decimal.
std::string format_score_table(const std::vector<std::string>& clip_ids,
                               const std::vector<Scores>& per_clip);

Scores mean_scores(const std::vector<Scores>& per_clip);

}  // namespace msnet
