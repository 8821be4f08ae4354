#pragma once

#include "egofuse/geom.h"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace egofuse {

/// The 19 fixed annotation classes plus the open-vocabulary bucket.
enum class ObjectCategory {
  Bed,
  Chair,
  Couch,
  Door,
  Floor,
  LampLight,
  Mirror,
  Table,
  WallArt,
  WindowOpening,
  Plant,
  StorageShelf,
  ScreenDisplay,
  Wall,
  Sink,
  Toilet,
  Refrigerator,
  WasherDryer,
  Stairs,
  Anything,
};

inline constexpr int kFixedCategoryCount = 19;

std::string_view categoryName(ObjectCategory c);
/// Throws ParseError on an unknown name.
ObjectCategory categoryFromName(std::string_view name);

/// Wall boxes built by the scenario generator use this thickness (meters).
inline constexpr double kWallThickness = 0.12;

struct Obb3 {
  std::int64_t id = 0;
  ObjectCategory category = ObjectCategory::Anything;
  std::optional<std::string> caption;
  Vec3 center = Vec3::Zero();
  Quat rotation = Quat::Identity();
  Vec3 halfExtents = Vec3::Constant(0.5);

  void validate() const;
  [[nodiscard]] Vec3 toLocal(const Vec3& world) const;
  /// |R^-1 (p - center)| <= halfExtents per axis.
  [[nodiscard]] bool contains(const Vec3& world) const;
  [[nodiscard]] double volume() const {
    return 8.0 * halfExtents.prod();
  }
};

struct Box2 {
  double minU = 0.0;
  double minV = 0.0;
  double maxU = 0.0;
  double maxV = 0.0;
};

struct SceneAnnotation {
  std::string venueId;
  std::vector<Obb3> boxes;
  std::string frame = "world";

  /// Validates every box and checks that ids are unique.
  void validate() const;
};

/// Corner i has local signs (bit0 ? + : -, bit1 ? + : -, bit2 ? + : -) on x, y, z.
std::array<Vec3, 8> obbCorners(const Obb3& box);
/// `nPerEdge` uniform samples on each of the 12 edges, endpoints included, so
/// corners appear once per incident edge. Throws InvalidArgument for n < 2.
std::vector<Vec3> obbEdgeSamples(const Obb3& box, int nPerEdge);

struct VisibilityOptions {
  int nPerEdge = 8;
  double insideFraction = 0.85;
  int minPoints = 2;
};

struct VisibilityVerdict {
  bool visible = false;
  bool projectable = false;     // rule (i)
  bool enoughPoints = false;    // rule (ii)
  bool mostlyInImage = false;   // rule (iii)
  std::vector<std::string> reasons; // one entry per failed rule
  double fractionInside = 0.0;  // in-image edge samples over all samples
  int pointsInside = 0;
};

/// Three-rule visibility of a box in one camera frame. Edge samples behind
/// the camera count as outside the image for rule (iii).
VisibilityVerdict computeVisibility(
    const Obb3& box, const CameraModel& cam, const RigidTransform& worldFromCamera,
    const std::vector<Vec3>& cloud, const VisibilityOptions& opts = {});

/// Axis-aligned hull of the in-front edge-sample projections, clipped to
/// [0,width] x [0,height]; nullopt when no sample is in front.
std::optional<Box2> compute2dbb(
    const Obb3& box, const CameraModel& cam, const RigidTransform& worldFromCamera,
    int nPerEdge = 8);

/// Exact intersection volume of two oriented boxes.
double intersectionVolume(const Obb3& a, const Obb3& b);
double iou3d(const Obb3& a, const Obb3& b);

/// Boxes mapped by `worldAlignment`; ids, categories and captions kept.
SceneAnnotation transferAnnotations(
    const SceneAnnotation& basemap, const std::string& targetFrame,
    const RigidTransform& worldAlignment = RigidTransform());

/// Id of the candidate with the highest IoU at or above the threshold.
/// Throws AmbiguousMatch when the top two passing candidates tie within 1e-9.
std::optional<std::int64_t> gateShapeTransfer(
    const Obb3& source, const std::vector<Obb3>& candidates, double iouThreshold = 0.95);

/// Row-major boolean raster for one frame, sized by the shared camera.
struct MaskFrame {
  RigidTransform worldFromCamera;
  std::vector<std::uint8_t> mask; // width * height, nonzero = instance
};

struct InstanceMasks {
  CameraModel cam;
  std::vector<MaskFrame> frames;
  int minHits = 1;
};

/// Cloud points inside the box. With masks, a point also needs at least
/// `minHits` frames in which it projects into the image onto a set pixel.
std::vector<Vec3> filterInstancePoints(
    const Obb3& box, const std::vector<Vec3>& cloud,
    const std::optional<InstanceMasks>& masks = std::nullopt);

struct ViewSelection {
  std::vector<TimeNs> timestamps; // in selection order
  std::vector<Vec3> directions;   // unit camera-to-centroid, world frame
  int candidateCount = 0;
  bool insufficient = false;      // fewer candidates than requested
  std::vector<std::string> warnings;
};

/// Greedy farthest-point selection over viewing directions. Candidates are
/// poses whose camera sees the object centroid inside the image. The first
/// pick maximizes the clipped area of the projected object points.
ViewSelection selectViews(
    const std::vector<Vec3>& objectPoints, const Trajectory& cameraPoses, const CameraModel& cam,
    int k = 16);

/// Angle between two directions, stable near 0 and pi.
double angleBetween(const Vec3& a, const Vec3& b);

// OBB file: JSON array of {id, category, caption?, center, rotation [w,x,y,z], half_extents}.
std::string obbsToJson(const std::vector<Obb3>& boxes);
std::vector<Obb3> obbsFromJson(const std::string& text);
std::vector<Obb3> readObbs(const std::filesystem::path& path);
void writeObbs(const std::filesystem::path& path, const std::vector<Obb3>& boxes);

/// CSV `x,y,z`, header optional on read, always written.
std::vector<Vec3> pointCloudFromCsv(const std::string& text);
std::string pointCloudToCsv(const std::vector<Vec3>& points);
std::vector<Vec3> readPointCloud(const std::filesystem::path& path);
void writePointCloud(const std::filesystem::path& path, const std::vector<Vec3>& points);

/// One 2DBB output record; box fields are null when the box is not projectable.
struct BoxObservation {
  TimeNs t = 0;
  std::int64_t boxId = 0;
  VisibilityVerdict verdict;
  std::optional<Box2> box;
};

BoxObservation observeBox(
    TimeNs t, const Obb3& box, const CameraModel& cam, const RigidTransform& worldFromCamera,
    const std::vector<Vec3>& cloud, const VisibilityOptions& opts = {});
/// Single JSON line without the trailing newline.
std::string observationToJsonLine(const BoxObservation& obs);

} // namespace egofuse
