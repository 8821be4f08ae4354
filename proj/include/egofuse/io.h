#pragma once

#include "egofuse/geom.h"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace egofuse::io {

using Json = nlohmann::json;

std::string readText(const std::filesystem::path& path);
void writeText(const std::filesystem::path& path, const std::string& text);

Json readJson(const std::filesystem::path& path);
void writeJson(const std::filesystem::path& path, const Json& j);

Json toJson(const Vec3& v);
Vec3 vec3FromJson(const Json& j, const std::string& what);

/// [tx,ty,tz,qw,qx,qy,qz]
Json poseToJson(const RigidTransform& t);
RigidTransform poseFromJson(const Json& j, const std::string& what);

/// [w,x,y,z]
Json quatToJson(const Quat& q);
Quat quatFromJson(const Json& j, const std::string& what);

std::vector<double> doublesFromJson(const Json& j, const std::string& what);

/// Splits a CSV line on commas; no quoting support.
std::vector<std::string> splitCsvLine(const std::string& line);
double parseDouble(const std::string& s, const std::string& what);
long long parseInt(const std::string& s, const std::string& what);

} // namespace egofuse::io
