#include "egofuse/io.h"

#include "egofuse/error.h"

#include <charconv>
#include <fstream>
#include <sstream>

namespace egofuse {

std::string_view errorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
      return "InvalidArgument";
    case ErrorCode::OutOfRange:
      return "OutOfRange";
    case ErrorCode::DimensionMismatch:
      return "DimensionMismatch";
    case ErrorCode::ParseError:
      return "ParseError";
    case ErrorCode::InvariantViolation:
      return "InvariantViolation";
    case ErrorCode::Io:
      return "Io";
    case ErrorCode::DegenerateDesign:
      return "DegenerateDesign";
    case ErrorCode::NonPositiveHeight:
      return "NonPositiveHeight";
    case ErrorCode::DegenerateMotion:
      return "DegenerateMotion";
    case ErrorCode::InsufficientOverlap:
      return "InsufficientOverlap";
    case ErrorCode::FrameMisalignment:
      return "FrameMisalignment";
    case ErrorCode::NegativeVelocity:
      return "NegativeVelocity";
    case ErrorCode::AmbiguousMatch:
      return "AmbiguousMatch";
    case ErrorCode::EmptyInput:
      return "EmptyInput";
  }
  return "Unknown";
}

std::string formatDouble(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace io {

std::string readText(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  EGOFUSE_CHECK(in.good(), ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void writeText(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  EGOFUSE_CHECK(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

Json readJson(const std::filesystem::path& path) {
  const std::string text = readText(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void writeJson(const std::filesystem::path& path, const Json& j) {
  writeText(path, j.dump(1) + "\n");
}

Json toJson(const Vec3& v) {
  return Json::array({v.x(), v.y(), v.z()});
}

Vec3 vec3FromJson(const Json& j, const std::string& what) {
  EGOFUSE_CHECK(
      j.is_array() && j.size() == 3, ErrorCode::ParseError, what + ": expected 3-element array");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    EGOFUSE_CHECK(j[i].is_number(), ErrorCode::ParseError, what + ": non-numeric entry");
    v[i] = j[i].get<double>();
  }
  return v;
}

Json quatToJson(const Quat& q) {
  return Json::array({q.w(), q.x(), q.y(), q.z()});
}

Quat quatFromJson(const Json& j, const std::string& what) {
  EGOFUSE_CHECK(
      j.is_array() && j.size() == 4, ErrorCode::ParseError, what + ": expected [w,x,y,z]");
  for (int i = 0; i < 4; ++i) {
    EGOFUSE_CHECK(j[i].is_number(), ErrorCode::ParseError, what + ": non-numeric entry");
  }
  Quat q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
  EGOFUSE_CHECK(q.norm() > 1e-12, ErrorCode::ParseError, what + ": zero quaternion");
  return q;
}

Json poseToJson(const RigidTransform& t) {
  const Quat& q = t.rotation;
  return Json::array(
      {t.translation.x(), t.translation.y(), t.translation.z(), q.w(), q.x(), q.y(), q.z()});
}

RigidTransform poseFromJson(const Json& j, const std::string& what) {
  EGOFUSE_CHECK(
      j.is_array() && j.size() == 7,
      ErrorCode::ParseError,
      what + ": expected [tx,ty,tz,qw,qx,qy,qz]");
  double v[7];
  for (int i = 0; i < 7; ++i) {
    EGOFUSE_CHECK(j[i].is_number(), ErrorCode::ParseError, what + ": non-numeric entry");
    v[i] = j[i].get<double>();
  }
  Quat q(v[3], v[4], v[5], v[6]);
  EGOFUSE_CHECK(q.norm() > 1e-12, ErrorCode::ParseError, what + ": zero quaternion");
  // Stored values are already normalized; keep them bit-exact when they are.
  RigidTransform t;
  t.rotation = std::abs(q.squaredNorm() - 1.0) < 1e-15 ? q : q.normalized();
  t.translation = Vec3(v[0], v[1], v[2]);
  return t;
}

std::vector<double> doublesFromJson(const Json& j, const std::string& what) {
  EGOFUSE_CHECK(j.is_array(), ErrorCode::ParseError, what + ": expected array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& e : j) {
    EGOFUSE_CHECK(e.is_number(), ErrorCode::ParseError, what + ": non-numeric entry");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::string> splitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parseDouble(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && *begin == ' ') {
    ++begin;
  }
  auto res = std::from_chars(begin, end, v);
  EGOFUSE_CHECK(
      res.ec == std::errc() && res.ptr == end,
      ErrorCode::ParseError,
      what + ": bad number '" + s + "'");
  return v;
}

long long parseInt(const std::string& s, const std::string& what) {
  long long v = 0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && *begin == ' ') {
    ++begin;
  }
  auto res = std::from_chars(begin, end, v);
  EGOFUSE_CHECK(
      res.ec == std::errc() && res.ptr == end,
      ErrorCode::ParseError,
      what + ": bad integer '" + s + "'");
  return v;
}

} // namespace io
} // namespace egofuse
