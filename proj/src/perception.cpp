#include "vsdock/perception.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "vsdock/servo_model.hpp"

namespace vsdock {

void MarkerModel::validate() const {
  if (size() < 4) {
    throw ConfigError("marker model needs at least 4 points");
  }
  // Coplanarity and non-collinearity via the scatter spectrum.
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : points_target) c += p;
  c /= double(size());
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const auto& p : points_target) {
    scatter += (p - c) * (p - c).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
  const Eigen::Vector3d ev = eig.eigenvalues();  // ascending
  if (ev(0) > 1e-9 * std::max(ev(2), 1e-12)) {
    throw ConfigError("marker points are not coplanar");
  }
  if (ev(1) < 1e-9 * std::max(ev(2), 1e-12)) {
    throw ConfigError("marker points are collinear");
  }
}

MarkerModel MarkerModel::square(double side) {
  const double h = 0.5 * side;
  MarkerModel m;
  // Image-left corresponds to +X_T (facing cameras mirror left-right) and
  // image-top to -Y_T; ids run row-wise top-left, top-right, bottom-left,
  // bottom-right as imaged at the frontal pose.
  m.points_target = {
      {h, -h, 0.0},   // 0: top-left in image
      {-h, -h, 0.0},  // 1: top-right
      {h, h, 0.0},    // 2: bottom-left
      {-h, h, 0.0},   // 3: bottom-right
  };
  return m;
}

GrayImage threshold_image(const GrayImage& img, int lambda) {
  GrayImage out(img.width, img.height);
  for (size_t i = 0; i < img.data.size(); ++i) {
    out.data[i] = img.data[i] > lambda ? img.data[i] : 0;
  }
  return out;
}

std::vector<Blob> detect_blobs(const GrayImage& img, int min_area) {
  std::vector<Blob> blobs;
  std::vector<char> visited(img.data.size(), 0);
  std::vector<int> stack;
  for (int v0 = 0; v0 < img.height; ++v0) {
    for (int u0 = 0; u0 < img.width; ++u0) {
      const size_t idx0 = size_t(v0) * img.width + u0;
      if (img.data[idx0] == 0 || visited[idx0]) continue;
      Blob b;
      stack.clear();
      stack.push_back(int(idx0));
      visited[idx0] = 1;
      while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const int u = idx % img.width;
        const int v = idx / img.width;
        const double w = img.data[idx];
        b.m00 += w;
        b.m10 += w * u;
        b.m01 += w * v;
        b.area += 1;
        for (int dv = -1; dv <= 1; ++dv) {
          for (int du = -1; du <= 1; ++du) {
            if (du == 0 && dv == 0) continue;
            const int un = u + du, vn = v + dv;
            if (!img.inside(un, vn)) continue;
            const size_t nidx = size_t(vn) * img.width + un;
            if (img.data[nidx] == 0 || visited[nidx]) continue;
            visited[nidx] = 1;
            stack.push_back(int(nidx));
          }
        }
      }
      if (b.area >= min_area) {
        b.centroid = {b.m10 / b.m00, b.m01 / b.m00};
        blobs.push_back(b);
      }
    }
  }
  return blobs;
}

FeatureObservation match_features(const std::vector<Eigen::Vector2d>& candidates,
                                  const FeatureObservation& previous,
                                  const FeatureObservation& predicted,
                                  double gate_px,
                                  const CameraIntrinsics& K) {
  struct Pair {
    double dist;
    int cand;
    int pred;
  };
  std::vector<Pair> pairs;
  for (int ci = 0; ci < int(candidates.size()); ++ci) {
    for (int pi = 0; pi < predicted.size(); ++pi) {
      const double d = (candidates[ci] - predicted.pixels[pi]).norm();
      if (d <= gate_px) {
        pairs.push_back({d, ci, pi});
      }
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.cand < b.cand;
  });
  std::vector<char> cand_used(candidates.size(), 0);
  std::vector<char> pred_used(predicted.size(), 0);
  std::vector<std::pair<int, Eigen::Vector2d>> matched;  // (id, pixel)
  for (const Pair& p : pairs) {
    if (cand_used[p.cand] || pred_used[p.pred]) continue;
    cand_used[p.cand] = 1;
    pred_used[p.pred] = 1;
    matched.emplace_back(predicted.ids[p.pred], candidates[p.cand]);
  }
  if (int(matched.size()) < 4) {
    throw TrackingLost("matched " + std::to_string(matched.size()) +
                       " of " + std::to_string(predicted.size()) +
                       " tracked features");
  }
  std::sort(matched.begin(), matched.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  FeatureObservation out;
  out.timestamp = previous.timestamp;
  for (const auto& [id, px] : matched) {
    out.ids.push_back(id);
    out.pixels.push_back(px);
    out.normalized.push_back(normalize_pixel(px, K));
  }
  return out;
}

namespace {

// In-plane frame of a coplanar model: columns u1,u2 span the plane,
// translation is the centroid. For the common Z=0 model this is the
// identity basis.
struct PlaneFrame {
  Eigen::Matrix3d basis;
  Eigen::Vector3d centroid;
};

PlaneFrame plane_frame(const MarkerModel& model) {
  PlaneFrame f;
  f.centroid = Eigen::Vector3d::Zero();
  for (const auto& p : model.points_target) f.centroid += p;
  f.centroid /= double(model.size());

  bool z_plane = true;
  for (const auto& p : model.points_target) {
    if (std::abs(p.z() - f.centroid.z()) > 1e-12) z_plane = false;
  }
  if (z_plane) {
    f.basis = Eigen::Matrix3d::Identity();
    return f;
  }
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const auto& p : model.points_target) {
    scatter += (p - f.centroid) * (p - f.centroid).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
  Eigen::Vector3d u1 = eig.eigenvectors().col(2);
  Eigen::Vector3d u2 = eig.eigenvectors().col(1);
  if (u1.cwiseAbs().maxCoeff() > 0 && u1(int(0)) < 0) u1 = -u1;
  Eigen::Vector3d u3 = u1.cross(u2);
  f.basis.col(0) = u1;
  f.basis.col(1) = u2;
  f.basis.col(2) = u3;
  return f;
}

// Normalized DLT homography mapping plane coordinates to normalized image
// coordinates.
Eigen::Matrix3d homography_dlt(const std::vector<Eigen::Vector2d>& obj,
                               const std::vector<Eigen::Vector2d>& img) {
  const int n = int(obj.size());
  auto condition = [](const std::vector<Eigen::Vector2d>& pts,
                      Eigen::Matrix3d& T) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (const auto& p : pts) c += p;
    c /= double(pts.size());
    double mean_dist = 0.0;
    for (const auto& p : pts) mean_dist += (p - c).norm();
    mean_dist /= double(pts.size());
    const double s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
    T << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
    return T;
  };
  Eigen::Matrix3d T_obj, T_img;
  condition(obj, T_obj);
  condition(img, T_img);

  Eigen::MatrixXd A(2 * n, 9);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d o = T_obj * Eigen::Vector3d(obj[i].x(), obj[i].y(), 1.0);
    const Eigen::Vector3d m = T_img * Eigen::Vector3d(img[i].x(), img[i].y(), 1.0);
    A.row(2 * i) << -o.x(), -o.y(), -1, 0, 0, 0, m.x() * o.x(), m.x() * o.y(),
        m.x();
    A.row(2 * i + 1) << 0, 0, 0, -o.x(), -o.y(), -1, m.y() * o.x(),
        m.y() * o.y(), m.y();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d H = T_img.inverse() * Hn * T_obj;
  if (std::abs(H(2, 2)) < 1e-15) {
    throw DegenerateConfiguration("homography is singular at the origin");
  }
  return H / H(2, 2);
}

// The two analytic rotations compatible with the homography's first-order
// behaviour at the plane origin.
std::array<Eigen::Matrix3d, 2> plane_rotations(const Eigen::Matrix2d& J,
                                               const Eigen::Vector2d& v) {
  const Eigen::Vector3d dir = Eigen::Vector3d(v.x(), v.y(), 1.0).normalized();
  const Eigen::Matrix3d Rv =
      Eigen::Quaterniond::FromTwoVectors(dir, Eigen::Vector3d::UnitZ())
          .toRotationMatrix()
          .transpose();  // maps e_z to the origin's viewing ray

  Eigen::Matrix2d B;
  B << Rv(0, 0) - v.x() * Rv(2, 0), Rv(0, 1) - v.x() * Rv(2, 1),
      Rv(1, 0) - v.y() * Rv(2, 0), Rv(1, 1) - v.y() * Rv(2, 1);
  const double det = B(0, 0) * B(1, 1) - B(0, 1) * B(1, 0);
  if (std::abs(det) < 1e-15) {
    throw DegenerateConfiguration("plane decomposition is singular");
  }
  const Eigen::Matrix2d A = B.inverse() * J;

  const double ata00 = A(0, 0) * A(0, 0) + A(0, 1) * A(0, 1);
  const double ata01 = A(0, 0) * A(1, 0) + A(0, 1) * A(1, 1);
  const double ata11 = A(1, 0) * A(1, 0) + A(1, 1) * A(1, 1);
  const double gamma = std::sqrt(
      0.5 * (ata00 + ata11 +
             std::sqrt((ata00 - ata11) * (ata00 - ata11) + 4.0 * ata01 * ata01)));
  if (!(gamma > 1e-15)) {
    throw DegenerateConfiguration("plane decomposition has zero scale");
  }
  const Eigen::Matrix2d Rt = A / gamma;

  const double b0 = std::sqrt(
      std::max(0.0, 1.0 - Rt(0, 0) * Rt(0, 0) - Rt(1, 0) * Rt(1, 0)));
  double b1 = std::sqrt(
      std::max(0.0, 1.0 - Rt(0, 1) * Rt(0, 1) - Rt(1, 1) * Rt(1, 1)));
  if (-Rt(0, 0) * Rt(0, 1) - Rt(1, 0) * Rt(1, 1) < 0) b1 = -b1;

  auto assemble = [&](double s0, double s1) {
    Eigen::Matrix3d M;
    M.col(0) = Eigen::Vector3d(Rt(0, 0), Rt(1, 0), s0);
    M.col(1) = Eigen::Vector3d(Rt(0, 1), Rt(1, 1), s1);
    M.col(2) = M.col(0).cross(M.col(1));
    return Eigen::Matrix3d(Rv * M);
  };
  return {assemble(b0, b1), assemble(-b0, -b1)};
}

// Least-squares translation given the rotation: each correspondence
// contributes X - x Z = 0 and Y - y Z = 0.
Eigen::Vector3d plane_translation(const std::vector<Eigen::Vector2d>& obj,
                                  const std::vector<Eigen::Vector2d>& img,
                                  const Eigen::Matrix3d& R) {
  const int n = int(obj.size());
  Eigen::MatrixXd A(2 * n, 3);
  Eigen::VectorXd b(2 * n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d rp = R * Eigen::Vector3d(obj[i].x(), obj[i].y(), 0.0);
    A.row(2 * i) << 1, 0, -img[i].x();
    A.row(2 * i + 1) << 0, 1, -img[i].y();
    b(2 * i) = img[i].x() * rp.z() - rp.x();
    b(2 * i + 1) = img[i].y() * rp.z() - rp.y();
  }
  return (A.transpose() * A).ldlt().solve(A.transpose() * b);
}

double reprojection_rms_px(const RigidTransform& pose,
                           const FeatureObservation& obs,
                           const MarkerModel& model,
                           const CameraIntrinsics& K) {
  double acc = 0.0;
  for (int i = 0; i < obs.size(); ++i) {
    const Eigen::Vector3d pc = pose.apply(model.points_target[obs.ids[i]]);
    if (pc.z() <= 1e-9) return std::numeric_limits<double>::infinity();
    const Eigen::Vector2d s = project_normalized(pc);
    const Eigen::Vector2d d = s - obs.normalized[i];
    acc += (d.x() * K.fx) * (d.x() * K.fx) + (d.y() * K.fy) * (d.y() * K.fy);
  }
  return std::sqrt(acc / double(obs.size()));
}

// Gauss-Newton on the reprojection error over (R, t); right-multiplied
// rotation increments.
void refine_pose(RigidTransform& pose, const FeatureObservation& obs,
                 const MarkerModel& model) {
  const int n = obs.size();
  Eigen::MatrixXd J(2 * n, 6);
  Eigen::VectorXd r(2 * n);
  for (int iter = 0; iter < 20; ++iter) {
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d p = model.points_target[obs.ids[i]];
      const Eigen::Vector3d pc = pose.apply(p);
      if (pc.z() <= 1e-9) return;  // leave candidate as-is; scored as invalid
      const double inv_z = 1.0 / pc.z();
      const Eigen::Vector2d s(pc.x() * inv_z, pc.y() * inv_z);
      r.segment<2>(2 * i) = s - obs.normalized[i];
      Eigen::Matrix<double, 2, 3> ds_dp;
      ds_dp << inv_z, 0.0, -pc.x() * inv_z * inv_z,  //
          0.0, inv_z, -pc.y() * inv_z * inv_z;
      J.block<2, 3>(2 * i, 0) = ds_dp * (-pose.rotation * skew(p));
      J.block<2, 3>(2 * i, 3) = ds_dp;
    }
    Eigen::Matrix<double, 6, 6> H = J.transpose() * J;
    H.diagonal().array() += 1e-12;
    const Eigen::Matrix<double, 6, 1> step =
        H.ldlt().solve(-J.transpose() * r);
    pose.rotation = pose.rotation * exp_rotation(step.head<3>());
    pose.translation += step.tail<3>();
    if (step.norm() < 1e-14) break;
  }
}

void check_not_collinear(const FeatureObservation& obs) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& s : obs.normalized) c += s;
  c /= double(obs.size());
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (const auto& s : obs.normalized) {
    scatter += (s - c) * (s - c).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter);
  if (eig.eigenvalues()(0) <= 1e-10 * std::max(eig.eigenvalues()(1), 1e-12)) {
    throw DegenerateConfiguration("image points are collinear");
  }
}

}  // namespace

PlanarPose estimate_planar_pose(const FeatureObservation& obs,
                                const MarkerModel& model,
                                const CameraIntrinsics& K) {
  if (obs.size() < 4) {
    throw DegenerateConfiguration("planar pose needs at least 4 points");
  }
  check_not_collinear(obs);

  const PlaneFrame frame = plane_frame(model);
  std::vector<Eigen::Vector2d> obj(obs.size());
  std::vector<Eigen::Vector2d> img(obs.size());
  for (int i = 0; i < obs.size(); ++i) {
    const Eigen::Vector3d q =
        frame.basis.transpose() *
        (model.points_target[obs.ids[i]] - frame.centroid);
    obj[i] = q.head<2>();
    img[i] = obs.normalized[i];
  }

  const Eigen::Matrix3d H = homography_dlt(obj, img);
  const Eigen::Vector2d v(H(0, 2), H(1, 2));
  Eigen::Matrix2d J;
  J << H(0, 0) - v.x() * H(2, 0), H(0, 1) - v.x() * H(2, 1),
      H(1, 0) - v.y() * H(2, 0), H(1, 1) - v.y() * H(2, 1);

  const auto rotations = plane_rotations(J, v);

  PlanarPose best;
  double best_rms = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const Eigen::Matrix3d& Rc : rotations) {
    const Eigen::Vector3d tc = plane_translation(obj, img, Rc);
    RigidTransform pose;
    pose.rotation = Rc * frame.basis.transpose();
    pose.translation = tc - Rc * (frame.basis.transpose() * frame.centroid);
    refine_pose(pose, obs, model);

    double depth = 0.0;
    bool in_front = true;
    for (int i = 0; i < obs.size(); ++i) {
      const double z = pose.apply(model.points_target[obs.ids[i]]).z();
      if (z <= 0.0) in_front = false;
      depth += z;
    }
    depth /= double(obs.size());
    if (!in_front) continue;

    const double rms = reprojection_rms_px(pose, obs, model, K);
    const double theta = extract_planar_theta(pose.rotation);
    const bool better =
        rms < best_rms - 1e-12 ||
        (std::abs(rms - best_rms) <= 1e-12 && std::abs(theta) < std::abs(best.theta));
    if (!found || better) {
      best.depth = depth;
      best.theta = theta;
      best.pose = pose;
      best.reproj_rms_px = rms;
      best_rms = rms;
      found = true;
    }
  }
  if (!found) {
    throw BehindCamera("both planar pose candidates place the marker behind the camera");
  }
  return best;
}

namespace {

// Row structure of a grid-like marker as imaged at the frontal pose: rows
// ordered top to bottom, entries left to right.
std::vector<std::vector<int>> model_grid_rows(const MarkerModel& model) {
  std::vector<int> order(model.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return model.points_target[a].y() < model.points_target[b].y();
  });
  const double row_tol = 1e-6;
  std::vector<std::vector<int>> rows;
  for (int id : order) {
    if (rows.empty() ||
        model.points_target[id].y() -
                model.points_target[rows.back().front()].y() >
            row_tol) {
      rows.emplace_back();
    }
    rows.back().push_back(id);
  }
  for (auto& row : rows) {
    // +X_T images left of -X_T (mirrored), so left-to-right means
    // descending X_T.
    std::sort(row.begin(), row.end(), [&](int a, int b) {
      return model.points_target[a].x() > model.points_target[b].x();
    });
  }
  return rows;
}

}  // namespace

FeatureObservation initialize_correspondence(
    const std::vector<Eigen::Vector2d>& candidates, const MarkerModel& model,
    const CameraIntrinsics& K, double rms_threshold_px) {
  model.validate();
  const int n = model.size();
  const int m = int(candidates.size());
  if (m < n) {
    throw NoConsistentAssignment("need " + std::to_string(n) +
                                 " candidates, got " + std::to_string(m));
  }
  if (m > 16) {
    throw NoConsistentAssignment("too many candidate blobs to enumerate");
  }
  const auto rows = model_grid_rows(model);

  // Enumerate n-subsets of the candidates in lexicographic order.
  std::vector<int> pick(n);
  std::iota(pick.begin(), pick.end(), 0);
  FeatureObservation best;
  double best_rms = std::numeric_limits<double>::infinity();
  bool any = false;
  while (true) {
    // Order the subset like the model grid: rows by pixel y, then pixel x.
    std::vector<int> subset = pick;
    std::sort(subset.begin(), subset.end(), [&](int a, int b) {
      return candidates[a].y() < candidates[b].y();
    });
    FeatureObservation obs;
    obs.ids.resize(n);
    obs.pixels.resize(n);
    int cursor = 0;
    for (const auto& row : rows) {
      std::vector<int> row_cands(subset.begin() + cursor,
                                 subset.begin() + cursor + int(row.size()));
      std::sort(row_cands.begin(), row_cands.end(), [&](int a, int b) {
        return candidates[a].x() < candidates[b].x();
      });
      for (size_t k = 0; k < row.size(); ++k) {
        obs.ids[size_t(cursor) + k] = row[k];
        obs.pixels[size_t(cursor) + k] = candidates[row_cands[k]];
      }
      cursor += int(row.size());
    }
    // Re-sort by id to satisfy the observation layout.
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::sort(perm.begin(), perm.end(),
              [&](int a, int b) { return obs.ids[a] < obs.ids[b]; });
    FeatureObservation ordered;
    for (int idx : perm) {
      ordered.ids.push_back(obs.ids[idx]);
      ordered.pixels.push_back(obs.pixels[idx]);
      ordered.normalized.push_back(normalize_pixel(obs.pixels[idx], K));
    }

    try {
      const PlanarPose pose = estimate_planar_pose(ordered, model, K);
      if (pose.reproj_rms_px < best_rms - 1e-12) {
        best = ordered;
        best_rms = pose.reproj_rms_px;
        any = true;
      }
    } catch (const Error&) {
      // inconsistent subset; skip
    }

    // Next lexicographic subset.
    int i = n - 1;
    while (i >= 0 && pick[i] == m - n + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < n; ++j) pick[j] = pick[j - 1] + 1;
  }
  if (!any || best_rms > rms_threshold_px) {
    throw NoConsistentAssignment("best reprojection RMS " +
                                 std::to_string(best_rms) + " px exceeds " +
                                 std::to_string(rms_threshold_px));
  }
  return best;
}

PerceptionResult PerceptionPipeline::process(const GrayImage& frame,
                                             const Eigen::Vector2d& u,
                                             double fc, double timestamp) {
  const GrayImage thresholded = threshold_image(frame, params_.lambda);
  const auto blobs = detect_blobs(thresholded, params_.min_area);
  std::vector<Eigen::Vector2d> candidates;
  candidates.reserve(blobs.size());
  for (const auto& b : blobs) candidates.push_back(b.centroid);

  PerceptionResult result;
  bool matched = false;
  if (last_.has_value()) {
    const FeatureObservation predicted = predict_features(
        last_->observation, ControlInput{u.x(), u.y()}, fc,
        last_->pose.depth, last_->pose.theta, intrinsics_);
    try {
      result.observation = match_features(candidates, last_->observation,
                                          predicted, params_.gate_px,
                                          intrinsics_);
      matched = true;
    } catch (const TrackingLost&) {
      matched = false;
    }
  }
  if (!matched) {
    result.observation = initialize_correspondence(candidates, model_,
                                                   intrinsics_,
                                                   params_.init_rms_px);
    result.reinitialized = last_.has_value();
  }
  result.observation.timestamp = timestamp;
  result.pose = estimate_planar_pose(result.observation, model_, intrinsics_);
  last_ = result;
  return result;
}

}  // namespace vsdock
