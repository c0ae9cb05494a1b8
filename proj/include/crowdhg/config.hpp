#pragma once

// Run configuration: a flat, sectioned key = value text file
//
//   # comment
//   [train]
//   steps = 2000
//   dataset = "data/train.jsonl"
//   [model]
//   group_sizes = [1, 3, 5]
//
// plus command-line overrides of the form section.key=value. Every key is
// checked against the known schema; unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crowdhg/reasoning.hpp"
#include "crowdhg/synth.hpp"
#include "crowdhg/trainer.hpp"

namespace crowdhg::config {

struct Entry {
  std::string value;   // raw text after '='
  std::string origin;  // "file:line" or "--set"
};

/// Parsed but untyped document, keyed by "section.key".
class Document {
 public:
  static Document parse(std::string_view text, const std::string& source);
  static Document load(const std::filesystem::path& path);

  /// Applies "section.key=value"; later assignments win.
  void set(const std::string& assignment);

  [[nodiscard]] const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

struct GradCheckConfig {
  std::size_t persons = 4;
  std::uint64_t seed = 5;
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::size_t hidden = 8;          // width of the probed model's MLPs
  std::size_t feature_dim = 6;     // q width of the probed model
  std::size_t max_per_param = 0;   // 0 probes every entry
};

struct RunConfig {
  std::filesystem::path skeleton;  // empty: built-in 15-joint figure

  synth::SceneSpec scene;
  std::size_t gen_count = 100;
  std::filesystem::path gen_output = "data/train.jsonl";

  reasoning::ReasoningConfig model;

  trainer::TrainConfig train;
  std::filesystem::path train_dataset = "data/train.jsonl";
  std::filesystem::path val_dataset;
  std::filesystem::path resume;
  std::filesystem::path train_log = "runs/train_log.jsonl";
  std::filesystem::path loss_csv = "runs/loss.csv";

  std::filesystem::path eval_checkpoint = "runs/model.json";
  std::filesystem::path eval_dataset = "data/val.jsonl";
  std::filesystem::path eval_report = "runs/metrics.json";
  std::filesystem::path eval_topdown = "runs/topdown.csv";
  std::vector<double> f1_thresholds{std::begin(metrics::kF1Thresholds), std::end(metrics::kF1Thresholds)};

  std::filesystem::path infer_checkpoint = "runs/model.json";
  std::filesystem::path infer_dataset = "data/val.jsonl";
  std::filesystem::path infer_output = "runs/predictions.json";

  trainer::AdaptConfig adapt;
  std::filesystem::path adapt_checkpoint = "runs/model.json";
  std::filesystem::path adapt_dataset = "data/unlabeled.jsonl";
  std::filesystem::path adapt_output = "runs/pseudo_gt.jsonl";

  GradCheckConfig gradcheck;

  /// Cross-field checks; throws ValidationError.
  void validate() const;
  [[nodiscard]] body::Skeleton load_skeleton() const;
};

/// Typed view of a document. Throws ValidationError naming the origin of
/// any unknown key or malformed value.
RunConfig from_document(const Document& doc);

/// Defaults, then the file (when given), then the overrides; validated.
RunConfig load_run_config(const std::filesystem::path& file, std::span<const std::string> overrides);

/// Every known key with its current value, in file syntax.
std::string to_text(const RunConfig& cfg);

}  // namespace crowdhg::config
