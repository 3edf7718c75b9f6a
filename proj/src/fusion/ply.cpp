#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "semfusion/core/errors.hpp"
#include "semfusion/fusion/mesh.hpp"

namespace semfusion::fusion {
namespace {

struct Property {
  std::string name;
  size_t size = 0;  // bytes of the scalar type
  bool is_list = false;
};

size_t scalar_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "int32" || type == "uint32" ||
      type == "float" || type == "float32")
    return 4;
  if (type == "double" || type == "float64") return 8;
  return 0;
}

[[noreturn]] void fail(const std::filesystem::path& path, size_t offset, const std::string& what) {
  std::ostringstream msg;
  msg << path.string() << ": " << what << " (byte " << offset << ")";
  throw DataError(msg.str());
}

template <typename T>
T read_raw(std::istream& in, const std::filesystem::path& path, size_t& offset,
           const char* context) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) fail(path, offset, std::string("unexpected end of file reading ") + context);
  offset += sizeof(T);
  return value;
}

}  // namespace

void Mesh::validate() const {
  if (has_colors() && colors.size() != vertices.size())
    throw DataError("mesh: colors/vertices length mismatch");
  if (has_labels() && labels.size() != vertices.size())
    throw DataError("mesh: labels/vertices length mismatch");
  for (const auto& v : vertices) {
    if (!v.allFinite()) throw DataError("mesh: non-finite vertex");
  }
  const auto n = static_cast<int32_t>(vertices.size());
  for (size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    for (int i : tri) {
      if (i < 0 || i >= n)
        throw DataError("mesh: triangle " + std::to_string(t) + " index out of range");
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw DataError("mesh: triangle " + std::to_string(t) + " repeats a vertex");
  }
}

void write_ply(const Mesh& mesh, const std::filesystem::path& path) {
  mesh.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");

  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (mesh.has_colors())
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (mesh.has_labels()) out << "property ushort class_id\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\n";
  out << "end_header\n";

  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Eigen::Vector3f& v = mesh.vertices[i];
    out.write(reinterpret_cast<const char*>(v.data()), 3 * sizeof(float));
    if (mesh.has_colors()) {
      const Rgb8& c = mesh.colors[i];
      out.write(reinterpret_cast<const char*>(&c), 3);
    }
    if (mesh.has_labels())
      out.write(reinterpret_cast<const char*>(&mesh.labels[i]), sizeof(uint16_t));
  }
  const uint8_t three = 3;
  for (const auto& tri : mesh.triangles) {
    out.write(reinterpret_cast<const char*>(&three), 1);
    out.write(reinterpret_cast<const char*>(tri.data()), 3 * sizeof(int32_t));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

Mesh read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());

  size_t offset = 0;
  auto read_line = [&](std::string& line) {
    if (!std::getline(in, line)) fail(path, offset, "unexpected end of header");
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };

  std::string line;
  read_line(line);
  if (line != "ply") fail(path, 0, "missing ply magic");
  read_line(line);
  if (line != "format binary_little_endian 1.0")
    fail(path, offset - line.size() - 1, "unsupported format '" + line + "'");

  size_t vertex_count = 0, face_count = 0;
  std::vector<Property> vertex_props;
  std::string current_element;
  while (true) {
    read_line(line);
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "end_header") break;
    if (word == "comment" || word == "obj_info" || word.empty()) continue;
    if (word == "element") {
      size_t count = 0;
      ls >> current_element >> count;
      if (current_element == "vertex") vertex_count = count;
      else if (current_element == "face") face_count = count;
      else fail(path, offset - line.size() - 1, "unsupported element '" + current_element + "'");
      continue;
    }
    if (word == "property") {
      std::string type;
      ls >> type;
      Property prop;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> prop.name;
        if (current_element != "face" || count_type != "uchar" || scalar_size(item_type) != 4)
          fail(path, offset - line.size() - 1, "unsupported list property '" + line + "'");
        prop.is_list = true;
      } else {
        prop.size = scalar_size(type);
        ls >> prop.name;
        if (prop.size == 0)
          fail(path, offset - line.size() - 1, "unknown property type '" + type + "'");
        if (current_element == "vertex") vertex_props.push_back(prop);
      }
      continue;
    }
    fail(path, offset - line.size() - 1, "unrecognized header line '" + line + "'");
  }

  Mesh mesh;
  mesh.vertices.resize(vertex_count);
  bool want_colors = false, want_labels = false;
  for (const auto& p : vertex_props) {
    if (p.name == "red") want_colors = true;
    if (p.name == "class_id") want_labels = true;
  }
  if (want_colors) mesh.colors.resize(vertex_count);
  if (want_labels) mesh.labels.resize(vertex_count);

  for (size_t i = 0; i < vertex_count; ++i) {
    for (const auto& p : vertex_props) {
      if (p.name == "x" || p.name == "y" || p.name == "z") {
        if (p.size != 4) fail(path, offset, "coordinate property must be float");
        const float v = read_raw<float>(in, path, offset, "vertex");
        const int axis = p.name == "x" ? 0 : (p.name == "y" ? 1 : 2);
        mesh.vertices[i][axis] = v;
      } else if (want_colors && (p.name == "red" || p.name == "green" || p.name == "blue")) {
        if (p.size != 1) fail(path, offset, "color property must be uchar");
        const auto v = read_raw<uint8_t>(in, path, offset, "color");
        if (p.name == "red") mesh.colors[i].r = v;
        else if (p.name == "green") mesh.colors[i].g = v;
        else mesh.colors[i].b = v;
      } else if (want_labels && p.name == "class_id") {
        if (p.size != 2) fail(path, offset, "class_id property must be ushort");
        mesh.labels[i] = read_raw<uint16_t>(in, path, offset, "label");
      } else {
        in.ignore(static_cast<std::streamsize>(p.size));
        if (!in) fail(path, offset, "unexpected end of file skipping property " + p.name);
        offset += p.size;
      }
    }
  }

  mesh.triangles.resize(face_count);
  for (size_t f = 0; f < face_count; ++f) {
    const size_t face_start = offset;
    const auto n = read_raw<uint8_t>(in, path, offset, "face size");
    if (n != 3) fail(path, face_start, "face " + std::to_string(f) + " is not a triangle");
    for (int k = 0; k < 3; ++k) {
      const auto idx = read_raw<int32_t>(in, path, offset, "face index");
      if (idx < 0 || static_cast<size_t>(idx) >= vertex_count)
        fail(path, face_start, "face " + std::to_string(f) + " index out of range");
      mesh.triangles[f][k] = idx;
    }
  }
  return mesh;
}

}  // namespace semfusion::fusion
