#include "ncdw/config.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "ncdw/delimited.hpp"
#include "ncdw/digest.hpp"
#include "ncdw/error.hpp"
#include "ncdw/linkage.hpp"

namespace ncdw {
namespace {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename T>
T scalar(const YAML::Node& node, std::string_view what) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw Error(ErrorKind::validation, fmt::format("bad value for '{}'", what));
  }
}

std::vector<YAML::Node> parse_documents(std::string_view text, std::string_view what) {
  try {
    return YAML::LoadAll(std::string(text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::parse, fmt::format("{}: {}", what, e.what()));
  }
}

SourceEntry source_from(const YAML::Node& n, const fs::path& base) {
  if (!n.IsMap()) throw Error(ErrorKind::validation, "source entry must be a mapping");
  SourceEntry e;
  SourceDescriptor& d = e.descriptor;
  if (!n["id"]) throw Error(ErrorKind::validation, "source entry without 'id'");
  d.source_id = scalar<std::string>(n["id"], "id");
  if (!n["kind"]) throw Error(ErrorKind::validation, fmt::format("source '{}' has no 'kind'", d.source_id));
  const auto kind_text = scalar<std::string>(n["kind"], "kind");
  const auto kind = parse_source_kind(kind_text);
  if (!kind) throw Error(ErrorKind::validation, fmt::format("source '{}': unknown kind '{}'", d.source_id, kind_text));
  d.kind = *kind;
  if (n["zone_offset_minutes"]) d.zone_offset_minutes = scalar<int>(n["zone_offset_minutes"], "zone_offset_minutes");
  if (n["file"]) e.file = resolve(base, scalar<std::string>(n["file"], "file"));
  if (const auto fields = n["fields"]) {
    if (!fields.IsMap()) throw Error(ErrorKind::validation, fmt::format("source '{}': 'fields' must be a mapping", d.source_id));
    for (const auto& kv : fields) {
      d.field_map[scalar<std::string>(kv.first, "fields")] = scalar<std::string>(kv.second, "fields");
    }
  }
  if (const auto units = n["units"]) {
    for (const auto& kv : units) d.units[scalar<std::string>(kv.first, "units")] = scalar<std::string>(kv.second, "units");
  }
  if (n["code_map"]) {
    d.code_map_path = resolve(base, scalar<std::string>(n["code_map"], "code_map"));
    d.code_map = load_code_map(d.code_map_path);
  }
  d.validate();
  return e;
}

CapacityInputs capacity_from(const YAML::Node& n) {
  CapacityInputs c = CapacityInputs::reference();
  if (!n || n.IsNull()) return c;
  if (!n.IsMap()) throw Error(ErrorKind::validation, "capacity inputs must be a mapping");
  if (const auto w = n["weekday_avgs"]) {
    if (!w.IsSequence() || w.size() != 7) throw Error(ErrorKind::validation, "weekday_avgs needs 7 values");
    for (std::size_t i = 0; i < 7; ++i) c.weekday_avgs[i] = scalar<double>(w[i], "weekday_avgs");
  }
  if (const auto cats = n["categories"]) {
    if (!cats.IsSequence()) throw Error(ErrorKind::validation, "categories must be a list");
    c.categories.clear();
    for (const auto& cat : cats) {
      c.categories.push_back(
          SeatCategory{scalar<double>(cat["seats"], "seats"), scalar<std::int64_t>(cat["hospitals"], "hospitals")});
    }
  }
  if (n["diagnostic_centers"]) c.diagnostic_centers = scalar<std::int64_t>(n["diagnostic_centers"], "diagnostic_centers");
  if (n["diagnostic_weight"]) c.diagnostic_weight = scalar<double>(n["diagnostic_weight"], "diagnostic_weight");
  if (n["record_size_kb"]) c.record_size_kb = scalar<double>(n["record_size_kb"], "record_size_kb");
  if (const auto h = n["horizons_days"]) {
    c.horizons_days.clear();
    for (const auto& v : h) c.horizons_days.push_back(scalar<std::int64_t>(v, "horizons_days"));
  }
  if (const auto r = n["r_bar"]) {
    if (r.IsNull()) {
      c.r_bar.reset();
    } else {
      c.r_bar = scalar<double>(r, "r_bar");
    }
  }
  if (n["rounding"]) {
    const std::string r = normalize_text(scalar<std::string>(n["rounding"], "rounding"));
    if (r == "ceiling") {
      c.rounding = LoadRounding::ceiling;
    } else if (r == "half_up") {
      c.rounding = LoadRounding::half_up;
    } else {
      throw Error(ErrorKind::validation, fmt::format("unknown rounding '{}' (ceiling, half_up)", r));
    }
  }
  c.validate();
  return c;
}

}  // namespace

std::vector<SourceEntry> parse_source_descriptors(std::string_view yaml, const fs::path& base_dir) {
  std::vector<SourceEntry> out;
  for (const auto& doc : parse_documents(yaml, "source descriptors")) {
    if (doc.IsNull()) continue;
    if (doc.IsMap() && doc["sources"]) {
      for (const auto& s : doc["sources"]) out.push_back(source_from(s, base_dir));
    } else if (doc.IsSequence()) {
      for (const auto& s : doc) out.push_back(source_from(s, base_dir));
    } else {
      out.push_back(source_from(doc, base_dir));
    }
  }
  std::set<std::string> ids;
  for (const auto& e : out) {
    if (!ids.insert(e.descriptor.source_id).second) {
      throw Error(ErrorKind::validation, fmt::format("duplicate source id '{}'", e.descriptor.source_id));
    }
  }
  return out;
}

std::vector<SourceEntry> load_source_descriptors(const fs::path& path) {
  return parse_source_descriptors(read_text(path), path.parent_path());
}

CapacityInputs parse_capacity_inputs(std::string_view yaml) {
  const auto docs = parse_documents(yaml, "capacity inputs");
  return capacity_from(docs.empty() ? YAML::Node() : docs.front());
}

CapacityInputs load_capacity_inputs(const fs::path& path) { return parse_capacity_inputs(read_text(path)); }

std::vector<std::uint8_t> read_link_secret(const LinkKeySource& source) {
  std::vector<std::uint8_t> secret;
  if (!source.file.empty()) {
    std::ifstream in(source.file, std::ios::binary);
    if (!in) throw Error(ErrorKind::key, fmt::format("cannot read link key file {}", source.file.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (auto hex = from_hex(trim(text)); hex && !hex->empty()) {
      secret = std::move(*hex);
    } else {
      std::string_view raw = text;
      while (!raw.empty() && (raw.back() == '\n' || raw.back() == '\r')) raw.remove_suffix(1);
      secret.assign(raw.begin(), raw.end());
    }
  } else {
    const char* env = std::getenv(source.env_var.c_str());
    if (!env || !*env) {
      throw Error(ErrorKind::key,
                  fmt::format("no link key: set {} (hex) or pass --link-key-file", source.env_var));
    }
    auto hex = from_hex(trim(env));
    if (!hex) throw Error(ErrorKind::key, fmt::format("{} is not valid hex", source.env_var));
    secret = std::move(*hex);
  }
  if (secret.size() < kMinSecretBytes) {
    throw Error(ErrorKind::key, fmt::format("link key must be at least {} bytes", kMinSecretBytes));
  }
  return secret;
}

void Config::validate() const {
  if (warehouse_root.empty()) throw Error(ErrorKind::validation, "config needs warehouse_root");
  std::set<std::string> ids;
  for (const auto& e : sources) {
    if (!ids.insert(e.descriptor.source_id).second) {
      throw Error(ErrorKind::validation, fmt::format("duplicate source id '{}'", e.descriptor.source_id));
    }
  }
  capacity.validate();
}

Config load_config(const fs::path& path) {
  const auto docs = parse_documents(read_text(path), path.string());
  if (docs.empty() || !docs.front().IsMap()) throw Error(ErrorKind::validation, "config must be a mapping");
  const YAML::Node& n = docs.front();
  const fs::path base = path.parent_path();
  Config c;
  if (n["warehouse_root"]) c.warehouse_root = resolve(base, scalar<std::string>(n["warehouse_root"], "warehouse_root"));
  c.staging_dir = n["staging_dir"] ? resolve(base, scalar<std::string>(n["staging_dir"], "staging_dir"))
                                   : c.warehouse_root / "staging";
  if (const auto s = n["sources"]) {
    if (s.IsScalar()) {
      c.sources = load_source_descriptors(resolve(base, s.as<std::string>()));
    } else {
      YAML::Emitter em;
      em << s;
      c.sources = parse_source_descriptors(em.c_str(), base);
    }
  }
  if (const auto cap = n["capacity"]) {
    c.capacity = cap.IsScalar() ? load_capacity_inputs(resolve(base, cap.as<std::string>())) : capacity_from(cap);
  }
  if (const auto k = n["link_key"]) {
    if (k["env"]) c.link_key.env_var = scalar<std::string>(k["env"], "link_key.env");
    if (k["file"]) c.link_key.file = resolve(base, scalar<std::string>(k["file"], "link_key.file"));
  }
  c.validate();
  return c;
}

}  // namespace ncdw
