// crowdhg: dataset generation, training, evaluation, inference, 2D
// adaptation and gradient checking from one config file.
//
//   crowdhg <gen|train|eval|infer|adapt|gradcheck> [--config FILE] [--set section.key=value]...
//
// Exit codes: 0 success, 1 validation error, 2 numerical failure.
// CROWDHG_LOG sets log verbosity (trace, debug, info, warn, error, off).

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "crowdhg/config.hpp"
#include "crowdhg/error.hpp"
#include "crowdhg/gradcheck.hpp"

namespace {

using namespace crowdhg;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

const fs::path kDefaultCheckpoint = "runs/model.json";

void configure_logging() {
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("CROWDHG_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"; only accept it when asked for.
    if (level == spdlog::level::off && std::string(env) != "off") {
      throw ValidationError(fmt::format("CROWDHG_LOG: unknown level '{}'", env));
    }
    spdlog::set_level(level);
  }
}

/// Opens `path` for writing, creating parent directories; throws
/// ValidationError when the location is not writable.
std::ofstream open_output(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  if (path.empty()) throw ValidationError("output path is empty");
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::out | std::ios::binary | mode);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw ValidationError("failed writing " + path.string());
}

/// Probes writability up front so a long run cannot fail at its last step.
void check_writable(const fs::path& path) {
  const bool existed = fs::exists(path);
  { auto out = open_output(path, std::ios::app); }
  if (!existed) fs::remove(path);
}

synth::Dataset load_dataset(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("dataset not found: " + path.string());
  auto data = synth::read_dataset(path);
  spdlog::info("read {} scenes from {}", data.scenes.size(), path.string());
  return data;
}

void check_compatible(const trainer::Checkpoint& ckpt, const synth::Dataset& data, const fs::path& path) {
  if (!(ckpt.skeleton == data.skeleton)) {
    throw ValidationError(path.string() + ": dataset skeleton differs from the checkpoint's");
  }
  if (ckpt.model.feature_dim != data.feature_dim) {
    throw ValidationError(fmt::format("{}: dataset features have width {}, the model expects {}", path.string(),
                                      data.feature_dim, ckpt.model.feature_dim));
  }
}

// -- commands ------------------------------------------------------------------

int cmd_gen(const config::RunConfig& cfg) {
  const auto skel = cfg.load_skeleton();
  check_writable(cfg.gen_output);
  synth::Dataset data{skel, cfg.scene.feature_dim, synth::generate_dataset(cfg.scene, skel, cfg.gen_count)};
  synth::write_dataset(data, cfg.gen_output);
  const auto stats = synth::corpus_stats(data.scenes);
  std::cout << fmt::format("wrote {} scenes ({} persons) to {}\n", stats.scenes, stats.persons, cfg.gen_output.string());
  std::cout << fmt::format("visible joints:        {:.3f}\n", stats.visible_fraction);
  std::cout << fmt::format("within-group affinity: {:.4f}\n", stats.within_group_affinity);
  std::cout << fmt::format("cross-group affinity:  {:.4f}\n", stats.cross_group_affinity);
  std::cout << fmt::format("group separation:      {:.4f}\n", stats.separation());
  return kExitOk;
}

int cmd_train(const config::RunConfig& cfg) {
  trainer::TrainConfig tc = cfg.train;
  if (tc.checkpoint_path.empty()) tc.checkpoint_path = kDefaultCheckpoint;

  const auto train_data = load_dataset(cfg.train_dataset);
  synth::Dataset val_data;
  if (!cfg.val_dataset.empty()) val_data = load_dataset(cfg.val_dataset);

  trainer::Checkpoint start;
  if (!cfg.resume.empty()) {
    start = trainer::load_checkpoint(cfg.resume);
    spdlog::info("resuming {} at step {}", cfg.resume.string(), start.step);
  } else {
    start = trainer::init_checkpoint(cfg.model, train_data.skeleton, cfg.train.seed);
  }
  check_compatible(start, train_data, cfg.train_dataset);
  if (!cfg.val_dataset.empty()) check_compatible(start, val_data, cfg.val_dataset);

  // A resumed run continues its logs; a fresh run starts them over.
  const auto mode = cfg.resume.empty() ? std::ios::trunc : std::ios::app;
  check_writable(tc.checkpoint_path);
  auto log = open_output(cfg.train_log, mode);
  const bool csv_header = cfg.resume.empty() || !fs::exists(cfg.loss_csv) || fs::file_size(cfg.loss_csv) == 0;
  auto csv = open_output(cfg.loss_csv, mode);
  if (csv_header) csv << "step,total,reproj,param,joint,crowd,grad_norm,val_total\n";

  const trainer::LogSink sink = [&](const trainer::TrainLogRecord& r) {
    log << r.to_json().dump() << '\n';
    csv << fmt::format("{},{},{},{},{},{},{},{}\n", r.step, r.losses.total, r.losses.reproj, r.losses.param,
                       r.losses.joint, r.losses.crowd, r.grad_norm,
                       r.validation ? fmt::format("{}", r.validation->total) : std::string{});
    if (r.validation) {
      spdlog::info("step {:>6}  loss {:.5g}  val {:.5g}", r.step, r.losses.total, r.validation->total);
    } else {
      spdlog::debug("step {:>6}  loss {:.5g}  |g| {:.3g}", r.step, r.losses.total, r.grad_norm);
    }
  };
  const auto result = trainer::train(tc, std::move(start), train_data.scenes, val_data.scenes, sink);
  log.flush();
  csv.flush();
  const auto& last = result.log.empty() ? trainer::TrainLogRecord{} : result.log.back();
  std::cout << fmt::format("trained to step {} (final loss {:.6g}); checkpoint {}\n", result.checkpoint.step,
                           last.losses.total, tc.checkpoint_path.string());
  return kExitOk;
}

int cmd_eval(const config::RunConfig& cfg) {
  const auto ckpt = trainer::load_checkpoint(cfg.eval_checkpoint);
  const auto data = load_dataset(cfg.eval_dataset);
  check_compatible(ckpt, data, cfg.eval_dataset);
  for (const auto& s : data.scenes) {
    if (!s.has_3d()) throw ValidationError("scene " + s.id + " has no 3D ground truth to evaluate against");
  }
  check_writable(cfg.eval_report);
  check_writable(cfg.eval_topdown);

  const auto preds = trainer::infer(ckpt, data.scenes, cfg.train.max_persons);
  const auto report = trainer::compute_metrics(data.scenes, preds, ckpt.skeleton, cfg.f1_thresholds);
  write_text(cfg.eval_report, report.to_json().dump(2) + "\n");
  write_text(cfg.eval_topdown, trainer::topdown_csv(data.scenes, preds));

  std::cout << fmt::format("scenes {}  persons {} ({} occluded)\n", report.scenes, report.persons,
                           report.occluded_persons);
  std::cout << fmt::format("MPJPE (root-aligned) {:.2f} mm, absolute {:.2f} mm, occluded {:.2f} mm\n",
                           report.mpjpe_mm, report.mpjpe_abs_mm, report.mpjpe_occluded_mm);
  std::cout << fmt::format("PCOD {:.2f}%\n", report.pcod);
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    std::cout << fmt::format("F1@{:.1f}m {:.4f} (P {:.4f}, R {:.4f})\n", report.thresholds[i], report.f1[i],
                             report.precision[i], report.recall[i]);
  }
  std::cout << fmt::format("plane std {:.4f} m (GT {:.4f}), plane error {:.4f} m\n", report.plane_std,
                           report.gt_plane_std, report.plane_error);
  std::cout << fmt::format("reprojection {:.3f} px\n", report.reproj_px);
  std::cout << fmt::format("wrote {} and {}\n", cfg.eval_report.string(), cfg.eval_topdown.string());
  return kExitOk;
}

nlohmann::json predictions_json(const trainer::Checkpoint& ckpt, std::span<const synth::CrowdScene> scenes,
                                std::span<const trainer::ScenePredictions> preds) {
  const std::size_t joints = ckpt.skeleton.size();
  nlohmann::json out_scenes = nlohmann::json::array();
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    nlohmann::json persons = nlohmann::json::array();
    for (const auto& p : preds[s]) {
      std::vector<double> values(p.params.theta);
      values.insert(values.end(), p.params.beta.begin(), p.params.beta.end());
      values.insert(values.end(), p.params.t.begin(), p.params.t.end());
      persons.push_back({{"params", values},
                         {"camera", {{"fc", p.camera.fc}, {"tx", p.camera.tx}, {"ty", p.camera.ty}}},
                         {"joints3d", p.joints_abs}});
    }
    out_scenes.push_back({{"id", scenes[s].id}, {"persons", std::move(persons)}});
  }
  return {{"format", "crowdhg-predictions"},
          {"version", 1},
          {"joints", joints},
          {"layout", {{"rot6d", joints * 6}, {"beta", 10}, {"translation", 3}}},
          {"scenes", std::move(out_scenes)}};
}

int cmd_infer(const config::RunConfig& cfg) {
  const auto ckpt = trainer::load_checkpoint(cfg.infer_checkpoint);
  const auto data = load_dataset(cfg.infer_dataset);
  check_compatible(ckpt, data, cfg.infer_dataset);
  check_writable(cfg.infer_output);
  const auto preds = trainer::infer(ckpt, data.scenes, cfg.train.max_persons);
  write_text(cfg.infer_output, predictions_json(ckpt, data.scenes, preds).dump() + "\n");
  std::size_t persons = 0;
  for (const auto& p : preds) persons += p.size();
  std::cout << fmt::format("predicted {} persons in {} scenes ({} values each); wrote {}\n", persons,
                           preds.size(), ckpt.skeleton.size() * 6 + 13, cfg.infer_output.string());
  return kExitOk;
}

int cmd_adapt(const config::RunConfig& cfg) {
  const auto ckpt = trainer::load_checkpoint(cfg.adapt_checkpoint);
  const auto data = load_dataset(cfg.adapt_dataset);
  check_compatible(ckpt, data, cfg.adapt_dataset);
  check_writable(cfg.adapt_output);
  const auto result = trainer::adapt_to_2d(ckpt, data.scenes, cfg.adapt);
  synth::write_dataset({data.skeleton, data.feature_dim, result.pseudo_gt}, cfg.adapt_output);
  const double gain =
      result.reproj_before > 0 ? 100.0 * (result.reproj_before - result.reproj_after) / result.reproj_before : 0.0;
  std::cout << fmt::format("reprojection before {:.3f} px\n", result.reproj_before);
  std::cout << fmt::format("reprojection after  {:.3f} px ({:.1f}% lower, {} iterations)\n", result.reproj_after,
                           gain, cfg.adapt.iterations);
  std::cout << fmt::format("wrote {} pseudo-GT scenes to {}\n", result.pseudo_gt.size(), cfg.adapt_output.string());
  return kExitOk;
}

int cmd_gradcheck(const config::RunConfig& cfg) {
  const auto rows = trainer::run_gradcheck_suite(cfg.gradcheck, cfg.load_skeleton());
  std::cout << fmt::format("{:<32} {:>12} {:>8}  {:<6} {}\n", "component", "max rel err", "checked", "result",
                           "worst entry");
  bool ok = true;
  for (const auto& r : rows) {
    ok = ok && r.pass;
    std::cout << fmt::format("{:<32} {:>12.3e} {:>8}  {:<6} {}\n", r.component, r.max_rel_error, r.checked,
                             r.pass ? "PASS" : "FAIL", r.worst);
  }
  if (!ok) {
    for (const auto& r : rows) {
      if (!r.pass) std::cerr << fmt::format("gradient mismatch in {} at {}\n", r.component, r.worst);
    }
    return kExitNumerical;
  }
  std::cout << fmt::format("all {} checks below {:.0e}\n", rows.size(), cfg.gradcheck.tolerance);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale hypergraph reasoning for crowd 3D pose"};
  app.require_subcommand(1);
  fs::path config_file;
  std::vector<std::string> overrides;
  bool print_config = false;

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const config::RunConfig&);
  };
  const Command commands[] = {
      {"gen", "generate a synthetic crowd dataset", cmd_gen},
      {"train", "train a model and write a checkpoint", cmd_train},
      {"eval", "evaluate a checkpoint against 3D ground truth", cmd_eval},
      {"infer", "predict body parameters for every person", cmd_infer},
      {"adapt", "finetune on 2D poses and emit pseudo ground truth", cmd_adapt},
      {"gradcheck", "finite-difference check of every component", cmd_gradcheck},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config,-c", config_file, "config file")->check(CLI::ExistingFile);
    sub->add_option("--set,-s", overrides, "override, section.key=value (repeatable)");
    sub->add_flag("--print-config", print_config, "print the merged config and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    configure_logging();
    const auto cfg = config::load_run_config(config_file, overrides);
    if (print_config) {
      std::cout << config::to_text(cfg);
      return kExitOk;
    }
    for (const auto& c : commands) {
      if (app.got_subcommand(c.name)) return c.run(cfg);
    }
  } catch (const NumericalError& e) {
    spdlog::error("numerical failure: {}", e.what());
    return kExitNumerical;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  }
  return kExitValidation;
}
