#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semfusion/core/pose.hpp"
#include "semfusion/fusion/tsdf.hpp"

namespace semfusion::eval {

// Metrics report for one run. recon_error_cm < 0 means "not evaluated";
// per-class vectors are indexed by class id (slot 0 = unannotated, unused).
struct EvalReport {
  double recon_error_cm = -1.0;
  std::vector<double> iou;
  double miou = 0.0;
  double macc = 0.0;
  std::vector<int64_t> gt_count;
  std::vector<int64_t> pred_count;
  std::vector<int64_t> tp_count;
  std::map<std::string, std::string> metadata;
};

std::string to_json(const EvalReport& report);
std::string to_table(const EvalReport& report);

/// Exact nearest neighbor over a fixed 3D point set.
class KdTree3 {
 public:
  explicit KdTree3(std::vector<Eigen::Vector3f> points);

  /// Index of the nearest point and the squared distance (double precision).
  std::pair<int, double> nearest(const Eigen::Vector3f& query) const;

  size_t size() const { return points_.size(); }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };
  int build(int begin, int end, std::vector<int>& order);
  void search(int node, const Eigen::Vector3d& q, int& best,
              double& best_d2) const;

  std::vector<Eigen::Vector3f> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Mean distance (cm) from each mesh vertex to its nearest GT surface sample.
/// One-directional by convention; `alignment` is applied to the mesh first.
/// `brute_force` switches to the O(n*m) scan for oracle checks.
double recon_error_cm(const fusion::Mesh& mesh, const fusion::Mesh& gt_samples,
                      const std::optional<Pose>& alignment = std::nullopt,
                      bool brute_force = false);

/// Per-class IoU / mIoU / mAcc over paired vertex labels. Label 0 marks
/// unannotated vertices: they never contribute, in GT or in predictions.
/// Classes with no GT presence are excluded from both means.
EvalReport semantic_scores(const std::vector<uint16_t>& pred,
                           const std::vector<uint16_t>& gt, int num_classes);

}  // namespace semfusion::eval
