#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "vsdock/geometry.hpp"
#include "vsdock/image.hpp"

namespace vsdock {

// Connected component of nonzero pixels with intensity-weighted moments.
struct Blob {
  double m00 = 0.0;  // sum of intensities
  double m10 = 0.0;  // sum of u * intensity
  double m01 = 0.0;  // sum of v * intensity
  int area = 0;      // pixel count
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
};

// Coplanar marker points in the target frame {T}. The default array is a
// square of side `side` in the Z=0 plane, ids ordered row-wise as seen in
// the image at the frontal pose (top-left, top-right, bottom-left,
// bottom-right).
struct MarkerModel {
  std::vector<Eigen::Vector3d> points_target;

  int size() const { return int(points_target.size()); }
  void validate() const;

  static MarkerModel square(double side);
};

// Identified sub-pixel marker centroids; ids strictly increasing,
// normalized coordinates consistent with pixels under K.
struct FeatureObservation {
  std::vector<int> ids;
  std::vector<Eigen::Vector2d> pixels;
  std::vector<Eigen::Vector2d> normalized;
  double timestamp = 0.0;

  int size() const { return int(ids.size()); }
};

struct PlanarPose {
  double depth = 0.0;   // mean marker depth in {C}, meters
  double theta = 0.0;   // signed rotation about camera Y, radians
  RigidTransform pose;  // target-to-camera: P_C = R * P_T + t
  double reproj_rms_px = 0.0;
};

// Eq.-style threshold: keeps intensities strictly above lambda, zeroes the
// rest. Idempotent.
GrayImage threshold_image(const GrayImage& img, int lambda);

// 8-connected components of nonzero pixels; components smaller than
// min_area pixels are dropped. Centroids are intensity-weighted.
std::vector<Blob> detect_blobs(const GrayImage& img, int min_area = 3);

// Assigns candidate centroids the ids of the nearest predicted features
// within gate_px (greedy by distance, injective). Unmatched candidates are
// discarded. Throws TrackingLost when fewer than 4 ids survive.
FeatureObservation match_features(const std::vector<Eigen::Vector2d>& candidates,
                                  const FeatureObservation& previous,
                                  const FeatureObservation& predicted,
                                  double gate_px,
                                  const CameraIntrinsics& K);

// Establishes marker identities with no prior track: enumerates candidate
// subsets, assigns ids by the array's row ordering (top-to-bottom rows,
// left-to-right within a row as imaged), and keeps the assignment with the
// lowest planar-pose reprojection RMS. Throws NoConsistentAssignment when
// the best RMS exceeds rms_threshold_px.
FeatureObservation initialize_correspondence(
    const std::vector<Eigen::Vector2d>& candidates, const MarkerModel& model,
    const CameraIntrinsics& K, double rms_threshold_px = 3.0);

// Planar pose from 2D-3D correspondences of the coplanar marker:
// normalized-DLT homography, the two analytic plane decompositions, and
// Gauss-Newton reprojection refinement of both candidates. Returns the
// lower-error pose (tie-break: smaller |theta|).
PlanarPose estimate_planar_pose(const FeatureObservation& obs,
                                const MarkerModel& model,
                                const CameraIntrinsics& K);

struct PerceptionParams {
  int lambda = 128;
  int min_area = 3;
  double gate_px = 5.0;
  double init_rms_px = 3.0;
};

struct PerceptionResult {
  FeatureObservation observation;
  PlanarPose pose;
  bool reinitialized = false;
};

// Frame-to-frame tracking state: thresholds + blob extraction, flow-gated
// id inheritance with re-initialization fallback, and pose recovery.
// Single-owner mutable state.
class PerceptionPipeline {
 public:
  PerceptionPipeline(MarkerModel model, CameraIntrinsics intrinsics,
                     PerceptionParams params)
      : model_(std::move(model)), intrinsics_(intrinsics), params_(params) {}

  // u is the camera-frame control active since the previous frame, fc the
  // frame rate used for the one-frame feature prediction.
  PerceptionResult process(const GrayImage& frame, const Eigen::Vector2d& u,
                           double fc, double timestamp);

  void reset() { last_.reset(); }
  const PerceptionParams& params() const { return params_; }

 private:
  MarkerModel model_;
  CameraIntrinsics intrinsics_;
  PerceptionParams params_;
  std::optional<PerceptionResult> last_;
};

}  // namespace vsdock
