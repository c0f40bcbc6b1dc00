#include "akseg/metrics.hpp"

#include <cstdio>
#include <queue>

namespace akseg {

std::vector<int> connected_components(const Mask& m, int& count) {
  std::vector<int> label(m.size(), 0);
  count = 0;
  for (std::size_t start = 0; start < m.size(); ++start) {
    if (!m.v[start] || label[start]) continue;
    ++count;
    std::queue<std::size_t> q;
    q.push(start);
    label[start] = count;
    while (!q.empty()) {
      std::size_t p = q.front();
      q.pop();
      std::size_t y = p / m.w, x = p % m.w;
      const long dy[4] = {-1, 1, 0, 0};
      const long dx[4] = {0, 0, -1, 1};
      for (int d = 0; d < 4; ++d) {
        long ny = static_cast<long>(y) + dy[d];
        long nx = static_cast<long>(x) + dx[d];
        if (ny < 0 || nx < 0 || ny >= static_cast<long>(m.h) ||
            nx >= static_cast<long>(m.w))
          continue;
        std::size_t np = static_cast<std::size_t>(ny) * m.w +
                         static_cast<std::size_t>(nx);
        if (m.v[np] && !label[np]) {
          label[np] = count;
          q.push(np);
        }
      }
    }
  }
  return label;
}

static double lesion_f1(const Mask& pred, const Mask& truth) {
  int np = 0, nt = 0;
  std::vector<int> lp = connected_components(pred, np);
  std::vector<int> lt = connected_components(truth, nt);
  if (np == 0 && nt == 0) return 100.0;
  if (np == 0 || nt == 0) return 0.0;

  // pairwise component IoU via intersection/size tallies
  std::vector<std::size_t> sp(np + 1, 0), st(nt + 1, 0);
  std::vector<std::vector<std::size_t>> inter(np + 1,
                                              std::vector<std::size_t>(nt + 1, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (lp[i]) ++sp[lp[i]];
    if (lt[i]) ++st[lt[i]];
    if (lp[i] && lt[i]) ++inter[lp[i]][lt[i]];
  }
  auto pair_iou = [&](int a, int b) {
    double in = static_cast<double>(inter[a][b]);
    double un = static_cast<double>(sp[a] + st[b]) - in;
    return un > 0 ? in / un : 0.0;
  };
  std::size_t detected = 0;  // truth lesions hit by some predicted component
  for (int b = 1; b <= nt; ++b) {
    for (int a = 1; a <= np; ++a) {
      if (pair_iou(a, b) >= 0.1) {
        ++detected;
        break;
      }
    }
  }
  std::size_t matched_pred = 0;  // predicted components that hit some lesion
  for (int a = 1; a <= np; ++a) {
    for (int b = 1; b <= nt; ++b) {
      if (pair_iou(a, b) >= 0.1) {
        ++matched_pred;
        break;
      }
    }
  }
  double precision = static_cast<double>(matched_pred) / np;
  double recall = static_cast<double>(detected) / nt;
  if (precision + recall == 0.0) return 0.0;
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

MetricsRecord compute_metrics(const Mask& pred, const Mask& truth) {
  if (pred.h != truth.h || pred.w != truth.w)
    throw ShapeError("compute_metrics: mask shape mismatch");
  MetricsRecord r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred.v[i] > 1 || truth.v[i] > 1)
      throw ValueError("compute_metrics: masks must be binary");
    if (pred.v[i] && truth.v[i]) ++r.tp;
    else if (pred.v[i] && !truth.v[i]) ++r.fp;
    else if (!pred.v[i] && truth.v[i]) ++r.fn;
    else ++r.tn;
  }
  double tp = static_cast<double>(r.tp), fp = static_cast<double>(r.fp);
  double tn = static_cast<double>(r.tn), fn = static_cast<double>(r.fn);
  r.iou = (tp + fp + fn) > 0 ? 100.0 * tp / (tp + fp + fn) : 100.0;
  r.dice = (2 * tp + fp + fn) > 0 ? 100.0 * 2 * tp / (2 * tp + fp + fn) : 100.0;
  r.specificity = (tn + fp) > 0 ? 100.0 * tn / (tn + fp) : 100.0;
  r.fpr = 100.0 - r.specificity;
  r.f1_pixel = r.dice;
  r.f1_lesion = lesion_f1(pred, truth);
  return r;
}

std::string metrics_csv_header() {
  return "image_id,tp,fp,tn,fn,iou,dice,specificity,f1_pixel,f1_lesion,fpr\n";
}

std::string metrics_csv_row(const std::string& image_id,
                            const MetricsRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%s,%zu,%zu,%zu,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                image_id.c_str(), r.tp, r.fp, r.tn, r.fn, r.iou, r.dice,
                r.specificity, r.f1_pixel, r.f1_lesion, r.fpr);
  return std::string(buf);
}

MetricsRecord macro_average(const std::vector<MetricsRecord>& rs) {
  MetricsRecord agg;
  if (rs.empty()) return agg;
  for (const auto& r : rs) {
    agg.tp += r.tp;
    agg.fp += r.fp;
    agg.tn += r.tn;
    agg.fn += r.fn;
    agg.iou += r.iou;
    agg.dice += r.dice;
    agg.specificity += r.specificity;
    agg.f1_pixel += r.f1_pixel;
    agg.f1_lesion += r.f1_lesion;
    agg.fpr += r.fpr;
  }
  double n = static_cast<double>(rs.size());
  agg.iou /= n;
  agg.dice /= n;
  agg.specificity /= n;
  agg.f1_pixel /= n;
  agg.f1_lesion /= n;
  agg.fpr /= n;
  return agg;
}

}  // namespace akseg
