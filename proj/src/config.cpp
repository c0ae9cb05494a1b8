#include "crowdhg/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "crowdhg/error.hpp"

namespace crowdhg::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// Drops a trailing '#' comment that is not inside a quoted string.
std::string strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return std::string(line.substr(0, i));
  }
  return std::string(line);
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

[[noreturn]] void bad_value(const std::string& key, const Entry& e, const std::string& what) {
  throw ValidationError(e.origin + ": " + key + " = " + e.value + ": " + what);
}

template <class T>
T parse_number(const std::string& key, const Entry& e, std::string_view text) {
  T out{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (!text.empty() && text.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || first == last) {
    bad_value(key, e, std::is_integral_v<T> ? "expected a nonnegative integer" : "expected a number");
  }
  return out;
}

std::string parse_string(const std::string& key, const Entry& e) {
  const std::string& v = e.value;
  if (v.size() >= 2 && v.front() == '"') {
    if (v.back() != '"') bad_value(key, e, "unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) ++i;
      out.push_back(v[i]);
    }
    return out;
  }
  if (v.empty()) bad_value(key, e, "expected a value");
  return v;
}

bool parse_bool(const std::string& key, const Entry& e) {
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  bad_value(key, e, "expected true or false");
}

std::vector<std::string> parse_list(const std::string& key, const Entry& e) {
  const std::string& v = e.value;
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') bad_value(key, e, "expected a list like [1, 2]");
  std::vector<std::string> items;
  const std::string inner = trim(std::string_view(v).substr(1, v.size() - 2));
  if (inner.empty()) return items;
  std::stringstream ss(inner);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) bad_value(key, e, "empty list element");
    items.push_back(item);
  }
  return items;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

std::string fmt_double(double v) { return nlohmann::json(v).dump(); }

struct Binding {
  std::function<void(RunConfig&, const std::string& key, const Entry&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Field>
Binding size_field(Field f) {
  return {[f](RunConfig& c, const std::string& k, const Entry& e) { f(c) = parse_number<std::size_t>(k, e, e.value); },
          [f](const RunConfig& c) { return std::to_string(f(c)); }};
}

template <class Field>
Binding u64_field(Field f) {
  return {
      [f](RunConfig& c, const std::string& k, const Entry& e) { f(c) = parse_number<std::uint64_t>(k, e, e.value); },
      [f](const RunConfig& c) { return std::to_string(f(c)); }};
}

template <class Field>
Binding double_field(Field f) {
  return {[f](RunConfig& c, const std::string& k, const Entry& e) { f(c) = parse_number<double>(k, e, e.value); },
          [f](const RunConfig& c) { return fmt_double(f(c)); }};
}

template <class Field>
Binding bool_field(Field f) {
  return {[f](RunConfig& c, const std::string& k, const Entry& e) { f(c) = parse_bool(k, e); },
          [f](const RunConfig& c) { return std::string(f(c) ? "true" : "false"); }};
}

template <class Field>
Binding path_field(Field f) {
  return {[f](RunConfig& c, const std::string& k, const Entry& e) { f(c) = parse_string(k, e); },
          [f](const RunConfig& c) { return quote(f(c).string()); }};
}

template <class Field>
Binding size_list_field(Field f) {
  return {[f](RunConfig& c, const std::string& k, const Entry& e) {
            std::vector<std::size_t> out;
            for (const auto& item : parse_list(k, e)) out.push_back(parse_number<std::size_t>(k, e, item));
            f(c) = out;
          },
          [f](const RunConfig& c) {
            std::string s = "[";
            const auto& v = f(c);
            for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
            return s + "]";
          }};
}

template <class Field>
Binding double_list_field(Field f) {
  return {[f](RunConfig& c, const std::string& k, const Entry& e) {
            std::vector<double> out;
            for (const auto& item : parse_list(k, e)) out.push_back(parse_number<double>(k, e, item));
            f(c) = out;
          },
          [f](const RunConfig& c) {
            std::string s = "[";
            const auto& v = f(c);
            for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt_double(v[i]);
            return s + "]";
          }};
}

template <class Field>
Binding units_field(Field f) {
  return {[f](RunConfig& c, const std::string& k, const Entry& e) {
            try {
              f(c) = losses::reproj_units_from_string(parse_string(k, e));
            } catch (const ValidationError& err) {
              bad_value(k, e, err.what());
            }
          },
          [f](const RunConfig& c) { return quote(losses::to_string(f(c))); }};
}

#define FIELD(expr) [](auto& c) -> auto& { return expr; }

const std::vector<std::pair<std::string, Binding>>& schema() {
  static const std::vector<std::pair<std::string, Binding>> table = {
      {"skeleton.path", path_field(FIELD(c.skeleton))},

      {"scene.persons", size_field(FIELD(c.scene.persons))},
      {"scene.groups", size_field(FIELD(c.scene.groups))},
      {"scene.pose_noise", double_field(FIELD(c.scene.pose_noise))},
      {"scene.shape_noise", double_field(FIELD(c.scene.shape_noise))},
      {"scene.depth_min", double_field(FIELD(c.scene.depth_min))},
      {"scene.depth_max", double_field(FIELD(c.scene.depth_max))},
      {"scene.group_radius", double_field(FIELD(c.scene.group_radius))},
      {"scene.min_separation", double_field(FIELD(c.scene.min_separation))},
      {"scene.occlusion_rate", double_field(FIELD(c.scene.occlusion_rate))},
      {"scene.geometric_occlusion", bool_field(FIELD(c.scene.geometric_occlusion))},
      {"scene.focal", double_field(FIELD(c.scene.camera.f))},
      {"scene.principal_x", double_field(FIELD(c.scene.camera.px))},
      {"scene.principal_y", double_field(FIELD(c.scene.camera.py))},
      {"scene.image_width", double_field(FIELD(c.scene.camera.width))},
      {"scene.image_height", double_field(FIELD(c.scene.camera.height))},
      {"scene.camera_height", double_field(FIELD(c.scene.camera_height))},
      {"scene.camera_pitch_deg", double_field(FIELD(c.scene.camera_pitch_deg))},
      {"scene.feature_dim", size_field(FIELD(c.scene.feature_dim))},
      {"scene.feature_seed", u64_field(FIELD(c.scene.feature_seed))},
      {"scene.seed", u64_field(FIELD(c.scene.seed))},

      {"gen.count", size_field(FIELD(c.gen_count))},
      {"gen.output", path_field(FIELD(c.gen_output))},

      {"model.feature_dim", size_field(FIELD(c.model.feature_dim))},
      {"model.group_sizes", size_list_field(FIELD(c.model.group_sizes))},
      {"model.iterations", size_field(FIELD(c.model.iterations))},
      {"model.hidden", size_field(FIELD(c.model.hidden))},
      {"model.mlp_layers", size_field(FIELD(c.model.mlp_layers))},
      {"model.share_scales", bool_field(FIELD(c.model.share_scales))},

      {"loss.reproj", double_field(FIELD(c.train.weights.reproj))},
      {"loss.param", double_field(FIELD(c.train.weights.param))},
      {"loss.joint", double_field(FIELD(c.train.weights.joint))},
      {"loss.crowd", double_field(FIELD(c.train.weights.crowd))},
      {"loss.reproj_units", units_field(FIELD(c.train.reproj_units))},

      {"train.dataset", path_field(FIELD(c.train_dataset))},
      {"train.val_dataset", path_field(FIELD(c.val_dataset))},
      {"train.epochs", size_field(FIELD(c.train.epochs))},
      {"train.steps", size_field(FIELD(c.train.steps))},
      {"train.batch_size", size_field(FIELD(c.train.batch_size))},
      {"train.learning_rate", double_field(FIELD(c.train.learning_rate))},
      {"train.lr_decay_every", size_field(FIELD(c.train.lr_decay_every))},
      {"train.lr_decay_factor", double_field(FIELD(c.train.lr_decay_factor))},
      {"train.seed", u64_field(FIELD(c.train.seed))},
      {"train.eval_every", size_field(FIELD(c.train.eval_every))},
      {"train.max_persons", size_field(FIELD(c.train.max_persons))},
      {"train.checkpoint", path_field(FIELD(c.train.checkpoint_path))},
      {"train.resume", path_field(FIELD(c.resume))},
      {"train.log", path_field(FIELD(c.train_log))},
      {"train.loss_csv", path_field(FIELD(c.loss_csv))},

      {"eval.checkpoint", path_field(FIELD(c.eval_checkpoint))},
      {"eval.dataset", path_field(FIELD(c.eval_dataset))},
      {"eval.report", path_field(FIELD(c.eval_report))},
      {"eval.topdown_csv", path_field(FIELD(c.eval_topdown))},
      {"metrics.f1_thresholds", double_list_field(FIELD(c.f1_thresholds))},

      {"infer.checkpoint", path_field(FIELD(c.infer_checkpoint))},
      {"infer.dataset", path_field(FIELD(c.infer_dataset))},
      {"infer.output", path_field(FIELD(c.infer_output))},

      {"adapt.checkpoint", path_field(FIELD(c.adapt_checkpoint))},
      {"adapt.dataset", path_field(FIELD(c.adapt_dataset))},
      {"adapt.output", path_field(FIELD(c.adapt_output))},
      {"adapt.iterations", size_field(FIELD(c.adapt.iterations))},
      {"adapt.learning_rate", double_field(FIELD(c.adapt.learning_rate))},
      {"adapt.reproj_weight", double_field(FIELD(c.adapt.reproj_weight))},
      {"adapt.crowd_weight", double_field(FIELD(c.adapt.crowd_weight))},
      {"adapt.divergence_factor", double_field(FIELD(c.adapt.divergence_factor))},
      {"adapt.reproj_units", units_field(FIELD(c.adapt.reproj_units))},
      {"adapt.max_persons", size_field(FIELD(c.adapt.max_persons))},

      {"gradcheck.persons", size_field(FIELD(c.gradcheck.persons))},
      {"gradcheck.seed", u64_field(FIELD(c.gradcheck.seed))},
      {"gradcheck.eps", double_field(FIELD(c.gradcheck.eps))},
      {"gradcheck.tolerance", double_field(FIELD(c.gradcheck.tolerance))},
      {"gradcheck.hidden", size_field(FIELD(c.gradcheck.hidden))},
      {"gradcheck.feature_dim", size_field(FIELD(c.gradcheck.feature_dim))},
      {"gradcheck.max_per_param", size_field(FIELD(c.gradcheck.max_per_param))},
  };
  return table;
}

#undef FIELD

}  // namespace

Document Document::parse(std::string_view text, const std::string& source) {
  Document doc;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string origin = source + ":" + std::to_string(line_no);
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(origin + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!valid_name(section)) throw ValidationError(origin + ": invalid section name '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(origin + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!valid_name(key)) throw ValidationError(origin + ": invalid key '" + key + "'");
    if (section.empty()) throw ValidationError(origin + ": key '" + key + "' outside of a [section]");
    const std::string full = section + "." + key;
    if (doc.entries_.count(full)) throw ValidationError(origin + ": duplicate key '" + full + "'");
    doc.entries_[full] = {value, origin};
  }
  return doc;
}

Document Document::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Document::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("--set " + assignment + ": expected section.key=value");
  const std::string key = trim(std::string_view(assignment).substr(0, eq));
  const auto dot = key.find('.');
  if (dot == std::string::npos || !valid_name(key.substr(0, dot)) || !valid_name(key.substr(dot + 1))) {
    throw ValidationError("--set " + assignment + ": key must look like section.key");
  }
  entries_[key] = {trim(std::string_view(assignment).substr(eq + 1)), "--set"};
}

RunConfig from_document(const Document& doc) {
  RunConfig cfg;
  const auto& table = schema();
  for (const auto& [key, entry] : doc.entries()) {
    const auto it = std::find_if(table.begin(), table.end(), [&](const auto& b) { return b.first == key; });
    if (it == table.end()) throw ValidationError(entry.origin + ": unknown config key '" + key + "'");
    it->second.set(cfg, key, entry);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& file, std::span<const std::string> overrides) {
  Document doc = file.empty() ? Document{} : Document::load(file);
  for (const auto& o : overrides) doc.set(o);
  RunConfig cfg = from_document(doc);
  cfg.validate();
  return cfg;
}

std::string to_text(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& [key, binding] : schema()) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      out += (out.empty() ? "[" : "\n[") + s + "]\n";
      section = s;
    }
    out += key.substr(dot + 1) + " = " + binding.get(cfg) + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  scene.validate();
  model.validate();
  train.validate();
  adapt.validate();
  if (gen_count == 0) throw ValidationError("gen.count must be positive");
  if (f1_thresholds.empty()) throw ValidationError("metrics.f1_thresholds must not be empty");
  for (double t : f1_thresholds) {
    if (!(t > 0) || !std::isfinite(t)) throw ValidationError("metrics.f1_thresholds must be positive");
  }
  if (gradcheck.persons == 0 || gradcheck.hidden == 0 || gradcheck.feature_dim == 0) {
    throw ValidationError("gradcheck: persons, hidden and feature_dim must be positive");
  }
  if (!(gradcheck.eps > 0) || !(gradcheck.tolerance > 0)) {
    throw ValidationError("gradcheck: eps and tolerance must be positive");
  }
}

body::Skeleton RunConfig::load_skeleton() const {
  if (skeleton.empty()) return body::Skeleton::standard();
  std::ifstream in(skeleton, std::ios::binary);
  if (!in) throw ValidationError("cannot open skeleton file " + skeleton.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(skeleton.string() + ": " + e.what());
  }
  return body::Skeleton::from_json(j);
}

}  // namespace crowdhg::config
