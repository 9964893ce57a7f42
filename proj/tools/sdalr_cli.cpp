#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "sdalr/config.hpp"
#include "sdalr/error.hpp"
#include "sdalr/experiments.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sdalr;

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kDataError = 2, kTrainingFailure = 3 };

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

// "adaptation.beta=0.4" -> sets that path; the value is parsed as JSON when
// possible and taken as a string otherwise.
void apply_override(json& j, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key.path=value, got " + text);
  const auto key = text.substr(0, eq);
  const auto raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  std::string path = "/" + key;
  for (auto& ch : path) {
    if (ch == '.') ch = '/';
  }
  j[json::json_pointer(path)] = value;
}

ExperimentSpec resolve(const Common& c) {
  json j = c.config.empty() ? to_json(ExperimentSpec{}) : read_json_file(c.config);
  if (c.config.empty()) j.erase("tasks");
  for (const auto& o : c.overrides) apply_override(j, o);
  return experiment_from_json(j);
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "experiment config (JSON, comments allowed)");
  cmd->add_option("--set", c.overrides, "override a config value, e.g. --set adaptation.beta=0.4");
}

void print_table(const ReportTable& table, const std::string& format) {
  if (format == "csv") {
    std::cout << table.to_csv();
  } else if (format == "md") {
    std::cout << table.to_markdown();
  } else {
    std::cout << table.to_text();
  }
}

DomainDataset domain_of(const ExperimentSpec& spec, const std::string& id) { return load_domain(spec.dataset, id); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source-free domain adaptation for bearing fault diagnosis"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error")->capture_default_str();

  Common common;
  std::string out, domain, checkpoint, task_text, run_dir, format = "text", axis, variant_name;
  bool overwrite = false;
  int seeds = 0, jobs = 1, seed = 0;
  std::optional<double> threshold;

  auto* train_cmd = app.add_subcommand("train-source", "train a source model and save a checkpoint");
  add_common(train_cmd, common);
  train_cmd->add_option("--domain", domain, "source domain id")->required();
  train_cmd->add_option("-o,--out", out, "checkpoint path")->required();

  auto* adapt_cmd = app.add_subcommand("adapt", "adapt a source checkpoint to a target domain");
  add_common(adapt_cmd, common);
  adapt_cmd->add_option("--source", checkpoint, "source checkpoint")->required();
  adapt_cmd->add_option("--target", domain, "target domain id")->required();
  adapt_cmd->add_option("-o,--out", out, "run directory")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "accuracy and confusion of a checkpoint on a domain");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--domain", domain)->required();
  eval_cmd->add_option("--confusion", out, "write the confusion matrix as CSV");

  auto add_batch = [&](CLI::App* cmd) {
    add_common(cmd, common);
    cmd->add_option("-o,--out", out, "run directory (overrides output_dir)");
    cmd->add_flag("--overwrite", overwrite, "replace an existing run directory");
    cmd->add_option("--seeds", seeds, "independent seeds per task")->check(CLI::PositiveNumber);
    cmd->add_option("-j,--jobs", jobs, "parallel worker processes")->check(CLI::PositiveNumber);
    cmd->add_option("--format", format, "text|md|csv")->check(CLI::IsMember({"text", "md", "csv"}));
  };
  auto* matrix_cmd = app.add_subcommand("matrix", "run the transfer-task matrix");
  add_batch(matrix_cmd);
  auto* ablation_cmd = app.add_subcommand("ablation", "run the four-row ablation ladder");
  add_batch(ablation_cmd);
  auto* sweep_cmd = app.add_subcommand("sweep", "sweep beta or the similarity threshold");
  add_batch(sweep_cmd);
  sweep_cmd->add_option("--axis", axis)->check(CLI::IsMember({"beta", "threshold"}));

  auto* pl_cmd = app.add_subcommand("pseudo-labels", "pseudo-label tools");
  pl_cmd->require_subcommand(1);
  auto* inspect_cmd = pl_cmd->add_subcommand("inspect", "write per-sample ballots and labels as CSV");
  add_common(inspect_cmd, common);
  inspect_cmd->add_option("--checkpoint", checkpoint)->required();
  inspect_cmd->add_option("--domain", domain)->required();
  inspect_cmd->add_option("-o,--out", out)->required();
  inspect_cmd->add_option("--threshold", threshold);

  auto* export_cmd = app.add_subcommand("export-embeddings", "write encoder features as CSV");
  add_common(export_cmd, common);
  export_cmd->add_option("--checkpoint", checkpoint)->required();
  export_cmd->add_option("--domain", domain)->required();
  export_cmd->add_option("-o,--out", out)->required();

  auto* report_cmd = app.add_subcommand("report", "rebuild tables from a finished run directory");
  report_cmd->add_option("run_dir", run_dir)->required();
  report_cmd->add_option("--format", format)->check(CLI::IsMember({"text", "md", "csv"}));

  auto* worker_cmd = app.add_subcommand("worker");
  worker_cmd->group("");
  worker_cmd->add_option("--run-dir", run_dir)->required();
  worker_cmd->add_option("--variant", variant_name)->required();
  worker_cmd->add_option("--task", task_text)->required();
  worker_cmd->add_option("--seed", seed)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*train_cmd) {
      const auto spec = resolve(common);
      const auto data = domain_of(spec, domain);
      auto result = train_source(data, spec.encoder, spec.adaptation);
      result.model.meta.dataset = spec.dataset.kind;
      result.model.meta.domain = domain;
      save_checkpoint(result.model, out);
      std::printf("source %s: val accuracy %.2f%% (%zu train / %zu val), saved %s\n", domain.c_str(),
                  100.0 * result.val_accuracy, result.train_size, result.val_size, out.c_str());
    } else if (*adapt_cmd) {
      const auto spec = resolve(common);
      const auto target = domain_of(spec, domain);
      const auto source = load_checkpoint(checkpoint, spec.encoder);
      auto result = adapt_target(source, target, spec.adaptation, out);
      result.record.task = source.meta.domain + "->" + domain;
      write_json_file(fs::path(out) / "run_record.json", result.record);
      save_checkpoint(result.model, fs::path(out) / "model.pt");
      if (result.record.final_accuracy) {
        std::printf("%s: source-only %.2f%% -> adapted %.2f%%\n", result.record.task.c_str(),
                    100.0 * result.record.source_only_accuracy.value_or(0.0), 100.0 * result.record.final_accuracy.value());
      }
    } else if (*eval_cmd) {
      const auto spec = resolve(common);
      auto model = load_checkpoint(checkpoint);
      const auto data = domain_of(spec, domain);
      const auto r = evaluate(model, data);
      std::printf("accuracy %.2f%% on %s (%zu samples)\n", 100.0 * r.accuracy, domain.c_str(), data.size());
      for (std::size_t c = 0; c < r.per_class_accuracy.size(); ++c) {
        std::printf("  class %zu: %.2f%%\n", c, 100.0 * r.per_class_accuracy[c]);
      }
      if (!out.empty()) write_confusion_csv(r, out);
    } else if (*matrix_cmd || *ablation_cmd || *sweep_cmd) {
      auto spec = resolve(common);
      if (!out.empty()) spec.output_dir = out;
      if (seeds > 0) spec.seeds = seeds;
      if (!axis.empty()) spec.sweep.axis = axis == "beta" ? SweepAxis::Beta : SweepAxis::Threshold;
      spec.validate();
      RunOptions options{overwrite, jobs, fs::canonical("/proc/self/exe")};
      if (*matrix_cmd) {
        print_table(run_matrix(spec, options), format);
      } else if (*ablation_cmd) {
        print_table(run_ablation(spec, options), format);
      } else {
        const auto curve = run_sweep(spec, options);
        std::cout << (format == "csv" ? curve.to_csv() : curve.average_csv());
      }
    } else if (*inspect_cmd) {
      const auto spec = resolve(common);
      auto model = load_checkpoint(checkpoint);
      const auto data = domain_of(spec, domain);
      VotingOptions options;
      options.threshold = threshold.value_or(spec.adaptation.threshold);
      options.voting = spec.adaptation.voting;
      options.augmentation = spec.adaptation.augmentation;
      options.seed = spec.adaptation.seed;
      const auto assignment = assign_labels(model, data, options);
      write_pseudo_label_csv(assignment, data, out);
      std::printf("%zu/%zu reliable", assignment.reliable_count(), assignment.size());
      if (data.labeled()) {
        if (const auto acc = assignment.reliable_accuracy(data.labels())) std::printf(", %.2f%% correct", 100.0 * *acc);
      }
      std::printf("\n");
    } else if (*export_cmd) {
      const auto spec = resolve(common);
      auto model = load_checkpoint(checkpoint);
      export_embeddings(model, domain_of(spec, domain), out);
    } else if (*report_cmd) {
      print_table(report_from_run_directory(run_dir), format);
    } else if (*worker_cmd) {
      auto spec = experiment_from_json(read_json_file(fs::path(run_dir) / "config.json"));
      spec.output_dir = run_dir;
      const auto v = read_json_file(fs::path(run_dir) / variant_name / "variant.json");
      Variant variant{variant_name, v.at("adaptation").get<AdaptationConfig>()};
      run_task(spec, variant, TransferTask::parse(task_text), seed);
    }
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfigError;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kDataError;
  } catch (const TrainingError& e) {
    spdlog::error("training failure: {}", e.what());
    return kTrainingFailure;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kTrainingFailure;
  }
  return kOk;
}
