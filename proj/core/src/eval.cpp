#include "msnet/eval.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace msnet {

double cent_diff(double ref_hz, double est_hz) {
  if (ref_hz <= 0.0 || est_hz <= 0.0) {
    throw std::invalid_argument("cent_diff: frequencies must be positive");
  }
  return 1200.0 * std::log2(est_hz / ref_hz);
}

namespace {
// Fold into (-600, 600].
double chroma_fold(double cents) {
  double c = std::fmod(cents, 1200.0);
  if (c > 600.0) c -= 1200.0;
  if (c <= -600.0) c += 1200.0;
  return c;
}
}  // namespace

Scores score(const std::vector<FramePair>& frames) {
  if (frames.empty()) throw std::invalid_argument("score: empty frame sequence");
  long voiced = 0, unvoiced = 0;
  long vr_hits = 0, vfa_hits = 0, rpa_hits = 0, rca_hits = 0, true_neg = 0;
  for (const auto& f : frames) {
    const bool ref_v = f.ref_f0 > 0.0;
    const bool est_v = f.est_f0 > 0.0;
    if (ref_v) {
      ++voiced;
      if (est_v) {
        ++vr_hits;
        const double cents = cent_diff(f.ref_f0, f.est_f0);
        if (std::abs(cents) <= 50.0) ++rpa_hits;
        if (std::abs(chroma_fold(cents)) <= 50.0) ++rca_hits;
      }
    } else {
      ++unvoiced;
      if (est_v) {
        ++vfa_hits;
      } else {
        ++true_neg;
      }
    }
  }
  Scores s;
  if (voiced > 0) {
    s.vr = static_cast<double>(vr_hits) / voiced;
    s.rpa = static_cast<double>(rpa_hits) / voiced;
    s.rca = static_cast<double>(rca_hits) / voiced;
  }
  if (unvoiced > 0) {
    s.vfa = static_cast<double>(vfa_hits) / unvoiced;
  }
  s.oa = static_cast<double>(rpa_hits + true_neg) /
         static_cast<double>(frames.size());
  return s;
}

Scores score_contours(const std::vector<double>& ref_f0,
                      const std::vector<double>& est_f0,
                      const std::vector<double>& ref_times,
                      const std::vector<double>& est_times) {
  if (ref_f0.empty() || est_f0.empty()) {
    throw std::invalid_argument("score_contours: empty contour");
  }
  if (ref_f0.size() != ref_times.size() || est_f0.size() != est_times.size()) {
    throw std::invalid_argument("score_contours: contour/time length mismatch");
  }
  std::vector<FramePair> frames(ref_f0.size());
  std::size_t j = 0;
  for (std::size_t i = 0; i < ref_f0.size(); ++i) {
    const double t = ref_times[i];
    while (j + 1 < est_times.size() && est_times[j + 1] <= t) ++j;
    std::size_t pick = j;
    if (j + 1 < est_times.size()) {
      const double d_here = std::abs(est_times[j] - t);
      const double d_next = std::abs(est_times[j + 1] - t);
      if (d_next < d_here) pick = j + 1;  // ties stay on the earlier sample
    }
    frames[i] = {ref_f0[i], est_f0[pick]};
  }
  return score(frames);
}

Scores mean_scores(const std::vector<Scores>& per_clip) {
  Scores m;
  if (per_clip.empty()) return m;
  for (const auto& s : per_clip) {
    m.vr += s.vr;
    m.vfa += s.vfa;
    m.rpa += s.rpa;
    m.rca += s.rca;
    m.oa += s.oa;
  }
  const double n = static_cast<double>(per_clip.size());
  m.vr /= n; m.vfa /= n; m.rpa /= n; m.rca /= n; m.oa /= n;
  return m;
}

std::string format_score_table(const std::vector<std::string>& clip_ids,
                               const std::vector<Scores>& per_clip) {
  if (clip_ids.size() != per_clip.size()) {
    throw std::invalid_argument("format_score_table: id/score count mismatch");
  }
  std::string out = "clip\tVR\tVFA\tRPA\tRCA\tOA\n";
  char buf[160];
  const auto row = [&](const std::string& id, const Scores& s) {
    std::snprintf(buf, sizeof(buf), "%s\t%.1f\t%.1f\t%.1f\t%.1f\t%.1f\n",
                  id.c_str(), 100.0 * s.vr, 100.0 * s.vfa, 100.0 * s.rpa,
                  100.0 * s.rca, 100.0 * s.oa);
    out += buf;
  };
  for (std::size_t i = 0; i < per_clip.size(); ++i) row(clip_ids[i], per_clip[i]);
  row("mean", mean_scores(per_clip));
  return out;
}

}  // namespace msnet
