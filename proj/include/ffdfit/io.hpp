#pragma once

#include "ffdfit/geometry.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace ffdfit {

// Fixed significant-digit rendering used by every text writer ("%.9g").
std::string format_real(double value);

// ASCII OBJ subset: `v` and `f` directives; polygons are fan-split.
TriangleMesh load_mesh(const std::filesystem::path& path);
TriangleMesh parse_obj(std::istream& in);

// Dispatches on extension: .ply is ASCII PLY, .xyz/.txt/.pts are "x y z" lines.
PointCloud read_point_cloud(const std::filesystem::path& path);
void write_point_cloud(const std::filesystem::path& path, const PointCloud& pc);

PointCloud parse_xyz(std::istream& in);
PointCloud parse_ply(std::istream& in);
void write_xyz(std::ostream& out, const PointCloud& pc);
void write_ply(std::ostream& out, const PointCloud& pc);

// Header "R ax ay az bx by bz" then R^3 '0'/'1' characters, x fastest.
void write_voxel_grid(std::ostream& out, const VoxelGrid& grid);

// One line "scale tx ty tz".
void write_transform(std::ostream& out, const NormalizationTransform& t);
NormalizationTransform parse_transform(std::istream& in);

// Throws FileNotFound ("no such file: ...") when the path is missing.
void require_file(const std::filesystem::path& path);

}  // namespace ffdfit
