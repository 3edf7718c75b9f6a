#include "semfusion/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace semfusion::eval {

KdTree3::KdTree3(std::vector<Eigen::Vector3f> points) : points_(std::move(points)) {
  if (points_.empty()) throw std::invalid_argument("KdTree3: empty point set");
  std::vector<int> order(points_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  nodes_.reserve(points_.size());
  root_ = build(0, static_cast<int>(order.size()), order);
}

int KdTree3::build(int begin, int end, std::vector<int>& order) {
  if (begin >= end) return -1;
  // split on the widest axis of this subset
  Eigen::Vector3f lo = points_[order[begin]], hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order[i]]);
    hi = hi.cwiseMax(points_[order[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });

  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({order[mid], axis, -1, -1});
  const int left = build(begin, mid, order);
  const int right = build(mid + 1, end, order);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree3::search(int node, const Eigen::Vector3d& q, int& best,
                     double& best_d2) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Eigen::Vector3d p = points_[n.point].cast<double>();
  const double d2 = (p - q).squaredNorm();
  if (d2 < best_d2) {
    best_d2 = d2;
    best = n.point;
  }
  const double delta = q[n.axis] - p[n.axis];
  const int near = delta < 0.0 ? n.left : n.right;
  const int far = delta < 0.0 ? n.right : n.left;
  search(near, q, best, best_d2);
  if (delta * delta <= best_d2) search(far, q, best, best_d2);
}

std::pair<int, double> KdTree3::nearest(const Eigen::Vector3f& query) const {
  int best = -1;
  double best_d2 = std::numeric_limits<double>::max();
  search(root_, query.cast<double>(), best, best_d2);
  return {best, best_d2};
}

double recon_error_cm(const fusion::Mesh& mesh, const fusion::Mesh& gt_samples,
                      const std::optional<Pose>& alignment, bool brute_force) {
  if (mesh.vertices.empty())
    throw std::invalid_argument("eval.recon_error: empty mesh");
  if (gt_samples.vertices.empty())
    throw std::invalid_argument("eval.recon_error: empty GT sample set");

  std::vector<Eigen::Vector3f> queries = mesh.vertices;
  if (alignment)
    for (auto& v : queries)
      v = alignment->apply(v.cast<double>()).cast<float>();

  double sum = 0.0;
  if (brute_force) {
    for (const auto& v : queries) {
      const Eigen::Vector3d q = v.cast<double>();
      double best = std::numeric_limits<double>::max();
      for (const auto& g : gt_samples.vertices)
        best = std::min(best, (g.cast<double>() - q).squaredNorm());
      sum += std::sqrt(best);
    }
  } else {
    KdTree3 tree(gt_samples.vertices);
    for (const auto& v : queries) sum += std::sqrt(tree.nearest(v).second);
  }
  return 100.0 * sum / static_cast<double>(queries.size());
}

EvalReport semantic_scores(const std::vector<uint16_t>& pred,
                           const std::vector<uint16_t>& gt, int num_classes) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("eval.semantic_scores: pred/gt length mismatch (" +
                                std::to_string(pred.size()) + " vs " +
                                std::to_string(gt.size()) + ")");
  if (num_classes < 2)
    throw std::invalid_argument("eval.semantic_scores: num_classes must be >= 2");

  EvalReport r;
  r.iou.assign(num_classes, 0.0);
  r.gt_count.assign(num_classes, 0);
  r.pred_count.assign(num_classes, 0);
  r.tp_count.assign(num_classes, 0);
  std::vector<int64_t> fp(num_classes, 0);

  for (size_t i = 0; i < gt.size(); ++i) {
    if (pred[i] >= num_classes || gt[i] >= num_classes)
      throw std::invalid_argument("eval.semantic_scores: label " +
                                  std::to_string(std::max(pred[i], gt[i])) +
                                  " out of range at vertex " + std::to_string(i));
    if (gt[i] == 0) continue;  // unannotated: fully excluded
    ++r.gt_count[gt[i]];
    if (pred[i] != 0) ++r.pred_count[pred[i]];
    if (pred[i] == gt[i])
      ++r.tp_count[gt[i]];
    else if (pred[i] != 0)
      ++fp[pred[i]];
  }

  int present = 0;
  double iou_sum = 0.0, acc_sum = 0.0;
  for (int c = 1; c < num_classes; ++c) {
    if (r.gt_count[c] == 0) continue;
    const int64_t tp = r.tp_count[c];
    const int64_t denom = r.gt_count[c] + fp[c];  // TP + FN + FP
    r.iou[c] = denom > 0 ? static_cast<double>(tp) / denom : 0.0;
    iou_sum += r.iou[c];
    acc_sum += static_cast<double>(tp) / r.gt_count[c];
    ++present;
  }
  if (present > 0) {
    r.miou = iou_sum / present;
    r.macc = acc_sum / present;
  }
  r.metadata["present_classes"] = std::to_string(present);
  return r;
}

std::string to_json(const EvalReport& report) {
  nlohmann::json j;
  if (report.recon_error_cm >= 0.0) j["recon_error_cm"] = report.recon_error_cm;
  j["miou"] = report.miou;
  j["macc"] = report.macc;
  j["iou"] = report.iou;
  j["gt_count"] = report.gt_count;
  j["pred_count"] = report.pred_count;
  j["tp_count"] = report.tp_count;
  j["metadata"] = report.metadata;
  return j.dump(2);
}

std::string to_table(const EvalReport& report) {
  std::ostringstream out;
  out << std::fixed;
  if (report.recon_error_cm >= 0.0)
    out << "recon error (cm)  " << std::setprecision(4) << report.recon_error_cm
        << "\n";
  out << "mIoU              " << std::setprecision(4) << report.miou << "\n";
  out << "mAcc              " << std::setprecision(4) << report.macc << "\n";
  if (!report.iou.empty()) {
    out << "\n" << std::setw(6) << "class" << std::setw(10) << "gt" << std::setw(10)
        << "pred" << std::setw(10) << "tp" << std::setw(10) << "iou" << "\n";
    for (size_t c = 1; c < report.iou.size(); ++c) {
      if (report.gt_count[c] == 0 && report.pred_count[c] == 0) continue;
      out << std::setw(6) << c << std::setw(10) << report.gt_count[c]
          << std::setw(10) << report.pred_count[c] << std::setw(10)
          << report.tp_count[c] << std::setw(10) << std::setprecision(4)
          << report.iou[c] << "\n";
    }
  }
  for (const auto& [k, v] : report.metadata) out << k << ": " << v << "\n";
  return out.str();
}

}  // namespace semfusion::eval
