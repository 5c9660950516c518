#include "ffdfit/io.hpp"

#include "ffdfit/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

namespace ffdfit {
namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

std::ifstream open_input(const std::filesystem::path& path) {
  require_file(path);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

double parse_real(std::string_view token, std::size_t line) {
  double value = 0.0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || !std::isfinite(value)) {
    throw ParseError("invalid number '" + std::string(token) + "'", line);
  }
  return value;
}

Vec3 parse_xyz_fields(std::istringstream& fields, std::size_t line) {
  Vec3 p;
  for (int axis = 0; axis < 3; ++axis) {
    std::string token;
    if (!(fields >> token)) throw ParseError("expected three coordinates", line);
    p[axis] = parse_real(token, line);
  }
  return p;
}

// OBJ vertex reference "a", "a/b", "a//c" or "a/b/c"; negative indices are relative.
long parse_obj_index(const std::string& token, std::size_t vertex_count, std::size_t line) {
  const std::string head = token.substr(0, token.find('/'));
  long value = 0;
  auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), value);
  if (ec != std::errc{} || ptr != head.data() + head.size() || value == 0) {
    throw ParseError("invalid face index '" + token + "'", line);
  }
  if (value < 0) value += static_cast<long>(vertex_count) + 1;
  return value - 1;
}

}  // namespace

std::string format_real(double value) { return fmt::format("{:.9g}", value == 0.0 ? 0.0 : value); }

void require_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FileNotFound("no such file: " + path.string());
}

TriangleMesh load_mesh(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext != ".obj") throw UnsupportedFormat("unsupported mesh format '" + ext + "' (expected .obj)");
  auto in = open_input(path);
  return parse_obj(in);
}

TriangleMesh parse_obj(std::istream& in) {
  struct PendingFace {
    std::vector<long> indices;
    std::size_t line;
  };
  TriangleMesh mesh;
  std::vector<PendingFace> polygons;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    std::istringstream fields(text);
    std::string directive;
    if (!(fields >> directive) || directive[0] == '#') continue;
    if (directive == "v") {
      mesh.vertices.push_back(parse_xyz_fields(fields, line));
    } else if (directive == "f") {
      PendingFace face{{}, line};
      std::string token;
      while (fields >> token) {
        face.indices.push_back(parse_obj_index(token, mesh.vertices.size(), line));
      }
      if (face.indices.size() < 3) throw ParseError("face needs at least 3 vertices", line);
      polygons.push_back(std::move(face));
    }
  }

  const auto count = static_cast<long>(mesh.vertices.size());
  for (const auto& poly : polygons) {
    for (long index : poly.indices) {
      if (index < 0 || index >= count) {
        throw ParseError(fmt::format("face index {} out of range ({} vertices)", index + 1, count),
                         poly.line);
      }
    }
    for (std::size_t t = 1; t + 1 < poly.indices.size(); ++t) {
      Face f{static_cast<std::size_t>(poly.indices[0]), static_cast<std::size_t>(poly.indices[t]),
             static_cast<std::size_t>(poly.indices[t + 1])};
      if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
        throw ParseError("degenerate face repeats a vertex index", poly.line);
      }
      mesh.faces.push_back(f);
    }
  }
  return mesh;
}

PointCloud read_point_cloud(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".ply") {
    auto in = open_input(path);
    return parse_ply(in);
  }
  if (ext == ".xyz" || ext == ".txt" || ext == ".pts") {
    auto in = open_input(path);
    return parse_xyz(in);
  }
  throw UnsupportedFormat("unsupported point cloud format '" + ext + "' (expected .xyz or .ply)");
}

void write_point_cloud(const std::filesystem::path& path, const PointCloud& pc) {
  const std::string ext = lower_extension(path);
  auto out = open_output(path);
  if (ext == ".ply") {
    write_ply(out, pc);
  } else {
    write_xyz(out, pc);
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

PointCloud parse_xyz(std::istream& in) {
  std::vector<Vec3> points;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    std::istringstream fields(text);
    std::string first;
    if (!(fields >> first) || first[0] == '#') continue;
    fields.clear();
    fields.seekg(0);
    points.push_back(parse_xyz_fields(fields, line));
  }
  if (points.empty()) throw ParseError("point cloud file contains no points");
  return PointCloud(std::move(points));
}

PointCloud parse_ply(std::istream& in) {
  std::string text;
  std::size_t line = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, text)) return false;
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    return true;
  };

  if (!next_line() || text != "ply") throw ParseError("missing 'ply' magic", line ? line : 1);
  std::size_t vertex_count = 0;
  std::vector<std::size_t> skip_counts;  // element counts preceding "vertex"
  std::vector<std::string> properties;
  bool in_vertex = false, seen_vertex = false, header_done = false;
  while (next_line()) {
    std::istringstream fields(text);
    std::string keyword;
    fields >> keyword;
    if (keyword == "format") {
      std::string kind;
      fields >> kind;
      if (kind != "ascii") throw UnsupportedFormat("only ASCII PLY is supported");
    } else if (keyword == "element") {
      std::string name;
      std::size_t count = 0;
      fields >> name >> count;
      in_vertex = name == "vertex";
      if (in_vertex) {
        vertex_count = count;
        seen_vertex = true;
      } else if (!seen_vertex) {
        skip_counts.push_back(count);
      }
    } else if (keyword == "property") {
      if (in_vertex) {
        std::string type, name;
        fields >> type;
        if (type == "list") throw ParseError("list property on vertex element", line);
        fields >> name;
        properties.push_back(name);
      }
    } else if (keyword == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw ParseError("missing end_header", line);
  if (!seen_vertex || vertex_count == 0) throw ParseError("PLY has no vertices", line);

  std::array<std::size_t, 3> column{};
  const char* axes[] = {"x", "y", "z"};
  for (int axis = 0; axis < 3; ++axis) {
    auto it = std::find(properties.begin(), properties.end(), axes[axis]);
    if (it == properties.end()) throw ParseError(std::string("missing property ") + axes[axis], line);
    column[axis] = static_cast<std::size_t>(it - properties.begin());
  }

  for (std::size_t count : skip_counts) {
    for (std::size_t i = 0; i < count; ++i) {
      if (!next_line()) throw ParseError("unexpected end of file", line);
    }
  }

  std::vector<Vec3> points;
  points.reserve(vertex_count);
  std::vector<std::string> tokens(properties.size());
  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (!next_line()) throw ParseError("unexpected end of file in vertex data", line);
    std::istringstream fields(text);
    for (auto& token : tokens) {
      if (!(fields >> token)) throw ParseError("too few values in vertex row", line);
    }
    points.emplace_back(parse_real(tokens[column[0]], line), parse_real(tokens[column[1]], line),
                        parse_real(tokens[column[2]], line));
  }
  return PointCloud(std::move(points));
}

void write_xyz(std::ostream& out, const PointCloud& pc) {
  for (const auto& p : pc) {
    out << format_real(p.x()) << ' ' << format_real(p.y()) << ' ' << format_real(p.z()) << '\n';
  }
}

void write_ply(std::ostream& out, const PointCloud& pc) {
  out << "ply\nformat ascii 1.0\nelement vertex " << pc.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  write_xyz(out, pc);
}

void write_voxel_grid(std::ostream& out, const VoxelGrid& grid) {
  out << grid.resolution;
  for (int axis = 0; axis < 3; ++axis) out << ' ' << format_real(grid.extent.min[axis]);
  for (int axis = 0; axis < 3; ++axis) out << ' ' << format_real(grid.extent.max[axis]);
  out << '\n';
  for (auto cell : grid.occupancy) out << (cell ? '1' : '0');
  out << '\n';
}

void write_transform(std::ostream& out, const NormalizationTransform& t) {
  out << format_real(t.scale) << ' ' << format_real(t.translation.x()) << ' '
      << format_real(t.translation.y()) << ' ' << format_real(t.translation.z()) << '\n';
}

NormalizationTransform parse_transform(std::istream& in) {
  std::string text;
  if (!std::getline(in, text)) throw ParseError("empty transform file", 1);
  std::istringstream fields(text);
  std::string token;
  if (!(fields >> token)) throw ParseError("expected scale", 1);
  NormalizationTransform t;
  t.scale = parse_real(token, 1);
  if (!(t.scale > 0.0)) throw ParseError("scale must be positive", 1);
  t.translation = parse_xyz_fields(fields, 1);
  return t;
}

}  // namespace ffdfit
