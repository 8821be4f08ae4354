#include "egofuse/rig.h"

#include <cmath>
#include <functional>
#include <map>
#include <set>

namespace egofuse {

namespace {

// Identity groups of the desk rig; each scales the bones of its group
// relative to their base length.
enum IdentityGroup : int {
  kSpine = 0,
  kNeckHead,
  kShoulder,
  kUpperArm,
  kForearm,
  kHand,
  kHip,
  kThigh,
  kShin,
  kFoot,
  kIdentityGroups,
};

struct JointDef {
  const char* name;
  int parent;
  Vec3 dir;
  double length;
  int group;
  double tubeRadius; // radius of the mesh tube along the bone ending here
};

const std::vector<JointDef>& deskJoints() {
  static const std::vector<JointDef> defs = {
      {"pelvis", -1, Vec3::UnitZ(), 0.0, -1, 0.0},
      {"spine1", 0, Vec3::UnitZ(), 0.12, kSpine, 0.11},
      {"spine2", 1, Vec3::UnitZ(), 0.12, kSpine, 0.11},
      {"spine3", 2, Vec3::UnitZ(), 0.12, kSpine, 0.11},
      {"neck", 3, Vec3::UnitZ(), 0.10, kNeckHead, 0.05},
      {"head", 4, Vec3::UnitZ(), 0.10, kNeckHead, 0.05},
      {"l_shoulder", 3, Vec3::UnitY(), 0.17, kShoulder, 0.05},
      {"l_elbow", 6, -Vec3::UnitZ(), 0.28, kUpperArm, 0.045},
      {"l_wrist", 7, -Vec3::UnitZ(), 0.25, kForearm, 0.04},
      {"l_hand", 8, -Vec3::UnitZ(), 0.08, kHand, 0.035},
      {"r_shoulder", 3, -Vec3::UnitY(), 0.17, kShoulder, 0.05},
      {"r_elbow", 10, -Vec3::UnitZ(), 0.28, kUpperArm, 0.045},
      {"r_wrist", 11, -Vec3::UnitZ(), 0.25, kForearm, 0.04},
      {"r_hand", 12, -Vec3::UnitZ(), 0.08, kHand, 0.035},
      {"l_hip", 0, Vec3::UnitY(), 0.09, kHip, 0.07},
      {"l_knee", 14, -Vec3::UnitZ(), 0.42, kThigh, 0.07},
      {"l_heel", 15, -Vec3::UnitZ(), 0.44, kShin, 0.05},
      {"l_toe", 16, Vec3(1.0, 0.0, -0.3).normalized(), 0.15, kFoot, 0.04},
      {"r_hip", 0, -Vec3::UnitY(), 0.09, kHip, 0.07},
      {"r_knee", 18, -Vec3::UnitZ(), 0.42, kThigh, 0.07},
      {"r_heel", 19, -Vec3::UnitZ(), 0.44, kShin, 0.05},
      {"r_toe", 20, Vec3(1.0, 0.0, -0.3).normalized(), 0.15, kFoot, 0.04},
  };
  return defs;
}

// Euler XYZ limit boxes per joint name prefix.
std::array<DofLimit, 3> limitsFor(const std::string& name) {
  auto sym = [](double a, double b, double c) {
    return std::array<DofLimit, 3>{DofLimit{-a, a}, DofLimit{-b, b}, DofLimit{-c, c}};
  };
  if (name.rfind("spine", 0) == 0) {
    return sym(0.5, 0.6, 0.6);
  }
  if (name == "neck" || name == "head") {
    return sym(0.8, 0.8, 0.8);
  }
  if (name.find("shoulder") != std::string::npos) {
    return sym(2.0, 2.0, 2.0);
  }
  if (name.find("elbow") != std::string::npos) {
    return {DofLimit{-0.5, 0.5}, DofLimit{-2.5, 0.1}, DofLimit{-1.5, 1.5}};
  }
  if (name.find("wrist") != std::string::npos) {
    return sym(1.0, 1.0, 1.0);
  }
  if (name.find("hand") != std::string::npos) {
    return sym(0.8, 0.8, 0.8);
  }
  if (name.find("hip") != std::string::npos) {
    return {DofLimit{-1.0, 1.0}, DofLimit{-1.8, 0.8}, DofLimit{-0.8, 0.8}};
  }
  if (name.find("knee") != std::string::npos) {
    return {DofLimit{-0.3, 0.3}, DofLimit{-0.1, 2.5}, DofLimit{-0.3, 0.3}};
  }
  if (name.find("heel") != std::string::npos) {
    return sym(0.9, 0.9, 0.9);
  }
  return sym(0.6, 0.6, 0.6);
}

RigModel deskSkeleton(const std::string& name) {
  RigModel rig;
  rig.name = name;
  rig.identityDim = kIdentityGroups;
  for (const auto& d : deskJoints()) {
    RigJoint j;
    j.name = d.name;
    j.parent = d.parent;
    j.restDirection = d.dir;
    j.baseLength = d.length;
    j.lengthCoeffs.assign(kIdentityGroups, 0.0);
    if (d.group >= 0) {
      j.lengthCoeffs[d.group] = d.length;
    }
    j.rotates = d.parent >= 0;
    rig.joints.push_back(std::move(j));
    if (d.parent >= 0) {
      const auto lim = limitsFor(d.name);
      rig.limits.insert(rig.limits.end(), lim.begin(), lim.end());
    }
  }
  // Two off-axis markers per joint make every joint frame observable.
  for (int j = 0; j < static_cast<int>(rig.joints.size()); ++j) {
    rig.landmarks.push_back({j, Vec3(0.05, 0.02, 0.01)});
    rig.landmarks.push_back({j, Vec3(-0.01, 0.05, -0.02)});
  }
  auto idx = [&](const char* n) {
    for (int j = 0; j < static_cast<int>(rig.joints.size()); ++j) {
      if (rig.joints[j].name == n) {
        return j;
      }
    }
    return -1;
  };
  rig.named.root = 0;
  rig.named.head = idx("head");
  rig.named.leftWrist = idx("l_wrist");
  rig.named.rightWrist = idx("r_wrist");
  rig.named.leftHeel = idx("l_heel");
  rig.named.rightHeel = idx("r_heel");
  rig.named.leftToe = idx("l_toe");
  rig.named.rightToe = idx("r_toe");

  auto cap = [&](const char* joint, Vec3 a, Vec3 b, double r) {
    rig.collision.push_back({idx(joint), a, b, r, -1.0});
  };
  cap("spine1", Vec3(0, 0, 0.0), Vec3(0, 0, 0.24), 0.10);
  cap("head", Vec3(0, 0, 0.02), Vec3(0, 0, 0.12), 0.09);
  cap("l_shoulder", Vec3(0, 0, -0.03), Vec3(0, 0, -0.25), 0.045);
  cap("r_shoulder", Vec3(0, 0, -0.03), Vec3(0, 0, -0.25), 0.045);
  cap("l_elbow", Vec3(0, 0, -0.02), Vec3(0, 0, -0.23), 0.04);
  cap("r_elbow", Vec3(0, 0, -0.02), Vec3(0, 0, -0.23), 0.04);
  cap("l_hip", Vec3(0, 0, -0.05), Vec3(0, 0, -0.38), 0.07);
  cap("r_hip", Vec3(0, 0, -0.05), Vec3(0, 0, -0.38), 0.07);
  cap("l_knee", Vec3(0, 0, -0.03), Vec3(0, 0, -0.37), 0.05);
  cap("r_knee", Vec3(0, 0, -0.03), Vec3(0, 0, -0.37), 0.05);
  rig.collision.back().taperRadius = 0.04;
  rig.collision[rig.collision.size() - 2].taperRadius = 0.04;
  return rig;
}

// Skinning weights of a tube station at fraction t along bone parent->child.
std::vector<SkinInfluence> stationWeights(const RigModel& rig, int parent, int child, double t) {
  const int grand = rig.joints[parent].parent;
  if (t <= 0.25 && grand >= 0) {
    return {{parent, 0.5 + 2.0 * t}, {grand, 0.5 - 2.0 * t}};
  }
  if (t >= 0.75) {
    return {{parent, 0.5 + 2.0 * (1.0 - t)}, {child, 0.5 - 2.0 * (1.0 - t)}};
  }
  return {{parent, 1.0}};
}

void addTube(
    RigModel& rig,
    const Vec3& from,
    const Vec3& to,
    double radius,
    int ringSize,
    const std::vector<double>& stations,
    const std::function<std::vector<SkinInfluence>(double)>& weights) {
  const Vec3 d = (to - from).normalized();
  Vec3 a = std::abs(d.z()) < 0.9 ? d.cross(Vec3::UnitZ()) : d.cross(Vec3::UnitX());
  a.normalize();
  const Vec3 b = d.cross(a);
  const int first = rig.vertexCount();
  for (double t : stations) {
    const Vec3 c = from + t * (to - from);
    for (int k = 0; k < ringSize; ++k) {
      const double ang = 2.0 * kPi * k / ringSize;
      rig.templateVertices.push_back(c + radius * (std::cos(ang) * a + std::sin(ang) * b));
      rig.skinning.push_back(weights(t));
    }
  }
  for (std::size_t s = 0; s + 1 < stations.size(); ++s) {
    const int r0 = first + static_cast<int>(s) * ringSize;
    const int r1 = r0 + ringSize;
    for (int k = 0; k < ringSize; ++k) {
      const int k1 = (k + 1) % ringSize;
      rig.triangles.push_back({r0 + k, r0 + k1, r1 + k});
      rig.triangles.push_back({r0 + k1, r1 + k1, r1 + k});
    }
  }
}

void buildMesh(RigModel& rig, int ringSize, const std::vector<double>& stations) {
  std::vector<Vec3> rest(rig.joints.size(), Vec3::Zero());
  for (std::size_t j = 1; j < rig.joints.size(); ++j) {
    const auto& jt = rig.joints[j];
    rest[j] = rest[jt.parent] + jt.restDirection * jt.baseLength;
  }
  std::vector<int> childCount(rig.joints.size(), 0);
  for (std::size_t j = 1; j < rig.joints.size(); ++j) {
    ++childCount[rig.joints[j].parent];
  }
  const auto& defs = deskJoints();
  for (int j = 1; j < static_cast<int>(rig.joints.size()); ++j) {
    const int p = rig.joints[j].parent;
    addTube(rig, rest[p], rest[j], defs[j].tubeRadius, ringSize, stations, [&](double t) {
      return stationWeights(rig, p, j, t);
    });
    if (childCount[j] == 0) {
      // Leaf segment carried entirely by the leaf joint.
      const double len = rig.joints[j].name == "head" ? 0.18 : 0.6 * rig.joints[j].baseLength;
      const double radius = rig.joints[j].name == "head" ? 0.09 : 0.8 * defs[j].tubeRadius;
      const Vec3 tip = rest[j] + len * rig.joints[j].restDirection;
      addTube(rig, rest[j], tip, radius, ringSize, stations, [j](double) {
        return std::vector<SkinInfluence>{{j, 1.0}};
      });
    }
  }
  std::set<std::pair<int, int>> edgeSet;
  for (const auto& t : rig.triangles) {
    for (int e = 0; e < 3; ++e) {
      int a = t[e];
      int b = t[(e + 1) % 3];
      edgeSet.insert({std::min(a, b), std::max(a, b)});
    }
  }
  for (const auto& [a, b] : edgeSet) {
    rig.edges.push_back({a, b});
  }
}

} // namespace

RigModel makeDeskRig() {
  RigModel rig = deskSkeleton("desk22");
  buildMesh(rig, 6, {0.2, 0.5, 0.8});
  rig.finalize();
  return rig;
}

PoseFrame deskSpreadPose(const RigModel& rig) {
  PoseFrame f = zeroFrame(rig);
  auto setX = [&](const char* joint, double angle) {
    f.pose[rig.dofStart[static_cast<std::size_t>(rig.jointIndex(joint))]] = angle;
  };
  setX("l_shoulder", 0.6);
  setX("r_shoulder", -0.6);
  setX("l_hip", 0.2);
  setX("r_hip", -0.2);
  return f;
}

RigModel makeDeskTargetRig() {
  RigModel rig = deskSkeleton("desk22_target");
  buildMesh(rig, 8, {0.2, 0.4, 0.6, 0.8});
  rig.finalize();
  return rig;
}

} // namespace egofuse
