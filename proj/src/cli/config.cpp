#include "semfusion/cli/config.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "semfusion/core/errors.hpp"

namespace semfusion::cli {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + v + "' is not a number");
  }
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const int64_t x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + v + "' is not an integer");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

struct Field {
  const char* key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

const std::vector<Field>& fields() {
  using C = PipelineConfig;
  static const std::vector<Field> table = {
      {"dataset.root", [](C& c, const std::string& v) { c.dataset = v; },
       [](const C& c) { return c.dataset.string(); }},
      {"dataset.depth_scale",
       [](C& c, const std::string& v) { c.depth_scale = parse_double("dataset.depth_scale", v); },
       [](const C& c) { return fmt(c.depth_scale); }},
      {"dataset.keyframe_stride",
       [](C& c, const std::string& v) {
         c.keyframe_stride = static_cast<int>(parse_int("dataset.keyframe_stride", v));
       },
       [](const C& c) { return std::to_string(c.keyframe_stride); }},
      {"dataset.max_frames",
       [](C& c, const std::string& v) {
         c.max_frames = static_cast<int>(parse_int("dataset.max_frames", v));
       },
       [](const C& c) { return std::to_string(c.max_frames); }},

      {"segment2d.theta_edge_deg",
       [](C& c, const std::string& v) {
         c.segment.theta_edge_deg = parse_double("segment2d.theta_edge_deg", v);
       },
       [](const C& c) { return fmt(c.segment.theta_edge_deg); }},
      {"segment2d.delta_depth",
       [](C& c, const std::string& v) {
         c.segment.delta_depth = parse_double("segment2d.delta_depth", v);
       },
       [](const C& c) { return fmt(c.segment.delta_depth); }},
      {"segment2d.min_area",
       [](C& c, const std::string& v) {
         c.segment.min_area = static_cast<int>(parse_int("segment2d.min_area", v));
       },
       [](const C& c) { return std::to_string(c.segment.min_area); }},

      {"propagation.t_iou",
       [](C& c, const std::string& v) { c.semmap.t_iou = parse_double("propagation.t_iou", v); },
       [](const C& c) { return fmt(c.semmap.t_iou); }},
      {"propagation.t_p1",
       [](C& c, const std::string& v) { c.semmap.t_p1 = parse_double("propagation.t_p1", v); },
       [](const C& c) { return fmt(c.semmap.t_p1); }},
      {"propagation.t_p2",
       [](C& c, const std::string& v) { c.semmap.t_p2 = parse_double("propagation.t_p2", v); },
       [](const C& c) { return fmt(c.semmap.t_p2); }},
      {"propagation.delta_up",
       [](C& c, const std::string& v) {
         c.semmap.delta_up = parse_double("propagation.delta_up", v);
       },
       [](const C& c) { return fmt(c.semmap.delta_up); }},
      {"propagation.delta_down",
       [](C& c, const std::string& v) {
         c.semmap.delta_down = parse_double("propagation.delta_down", v);
       },
       [](const C& c) { return fmt(c.semmap.delta_down); }},
      {"propagation.max_support",
       [](C& c, const std::string& v) {
         c.semmap.max_support = static_cast<int>(parse_int("propagation.max_support", v));
       },
       [](const C& c) { return std::to_string(c.semmap.max_support); }},
      {"propagation.splat_radius",
       [](C& c, const std::string& v) {
         c.semmap.splat_radius = static_cast<int>(parse_int("propagation.splat_radius", v));
       },
       [](const C& c) { return std::to_string(c.semmap.splat_radius); }},
      {"propagation.enable",
       [](C& c, const std::string& v) { c.propagation = parse_bool("propagation.enable", v); },
       [](const C& c) { return c.propagation ? "true" : "false"; }},

      {"fusion.voxel_size",
       [](C& c, const std::string& v) {
         c.fusion.voxel_size = static_cast<float>(parse_double("fusion.voxel_size", v));
       },
       [](const C& c) { return fmt(c.fusion.voxel_size); }},
      {"fusion.truncation",
       [](C& c, const std::string& v) {
         c.fusion.truncation = static_cast<float>(parse_double("fusion.truncation", v));
       },
       [](const C& c) { return fmt(c.fusion.truncation); }},
      {"fusion.max_weight",
       [](C& c, const std::string& v) {
         c.fusion.max_weight = static_cast<float>(parse_double("fusion.max_weight", v));
       },
       [](const C& c) { return fmt(c.fusion.max_weight); }},
      {"fusion.max_depth",
       [](C& c, const std::string& v) {
         c.fusion.max_depth = static_cast<float>(parse_double("fusion.max_depth", v));
       },
       [](const C& c) { return fmt(c.fusion.max_depth); }},
      {"fusion.threads",
       [](C& c, const std::string& v) {
         c.fusion.threads = static_cast<int>(parse_int("fusion.threads", v));
       },
       [](const C& c) { return std::to_string(c.fusion.threads); }},

      {"project.eps_occ_scale",
       [](C& c, const std::string& v) {
         c.eps_occ_scale = parse_double("project.eps_occ_scale", v);
       },
       [](const C& c) { return fmt(c.eps_occ_scale); }},
      {"project.feature_level",
       [](C& c, const std::string& v) {
         c.feature_level = static_cast<int>(parse_int("project.feature_level", v));
       },
       [](const C& c) { return std::to_string(c.feature_level); }},
      {"project.feature_provider",
       [](C& c, const std::string& v) { c.feature_provider = v; },
       [](const C& c) { return c.feature_provider; }},
      {"project.feature_dir", [](C& c, const std::string& v) { c.feature_dir = v; },
       [](const C& c) { return c.feature_dir.string(); }},
      {"project.num_classes",
       [](C& c, const std::string& v) {
         c.num_classes = static_cast<int>(parse_int("project.num_classes", v));
       },
       [](const C& c) { return std::to_string(c.num_classes); }},

      {"output.dir", [](C& c, const std::string& v) { c.out = v; },
       [](const C& c) { return c.out.string(); }},
      {"output.seed",
       [](C& c, const std::string& v) {
         c.seed = static_cast<uint64_t>(parse_int("output.seed", v));
       },
       [](const C& c) { return std::to_string(c.seed); }},
      {"output.brute_force_oracles",
       [](C& c, const std::string& v) {
         c.brute_force_oracles = parse_bool("output.brute_force_oracles", v);
       },
       [](const C& c) { return c.brute_force_oracles ? "true" : "false"; }},
  };
  return table;
}

}  // namespace

void apply_override(PipelineConfig& config, const std::string& key,
                    const std::string& value) {
  for (const Field& f : fields())
    if (key == f.key) {
      f.set(config, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  PipelineConfig config;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                          ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      apply_override(config, full, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  return config;
}

std::string dump_config(const PipelineConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : fields()) {
    const std::string key = f.key;
    const std::string sec = key.substr(0, key.find('.'));
    if (sec != section) {
      if (!section.empty()) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
    }
    out << key.substr(key.find('.') + 1) << " = " << f.get(config) << "\n";
  }
  return out.str();
}

std::string config_hash(const PipelineConfig& config) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : dump_config(config)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void PipelineConfig::validate() const {
  if (depth_scale <= 0.0) throw ConfigError("dataset.depth_scale: must be > 0");
  if (keyframe_stride < 1) throw ConfigError("dataset.keyframe_stride: must be >= 1");
  if (max_frames < 0) throw ConfigError("dataset.max_frames: must be >= 0");
  if (segment.theta_edge_deg <= 0.0 || segment.theta_edge_deg > 90.0)
    throw ConfigError("segment2d.theta_edge_deg: must be in (0, 90]");
  if (segment.delta_depth <= 0.0)
    throw ConfigError("segment2d.delta_depth: must be > 0");
  if (segment.min_area < 1) throw ConfigError("segment2d.min_area: must be >= 1");
  semmap.validate();
  fusion.validate();
  if (eps_occ_scale <= 0.0) throw ConfigError("project.eps_occ_scale: must be > 0");
  if (feature_level < 1 || feature_level > 4)
    throw ConfigError("project.feature_level: must be in [1, 4]");
  if (feature_provider != "class_prob" && feature_provider != "file")
    throw ConfigError("project.feature_provider: must be 'class_prob' or 'file'");
  if (feature_provider == "file" && feature_dir.empty())
    throw ConfigError("project.feature_dir: required when feature_provider = file");
  if (num_classes < 2 || num_classes > 65535)
    throw ConfigError("project.num_classes: must be in [2, 65535]");
}

}  // namespace semfusion::cli
