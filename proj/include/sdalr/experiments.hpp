#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdalr/config.hpp"
#include "sdalr/pseudo_labeler.hpp"
#include "sdalr/training.hpp"

namespace sdalr {

/// Accuracy table: rows are method variants, columns are transfer tasks.
struct ReportTable {
  struct Row {
    std::string name;
    std::vector<double> cells;   ///< accuracy in percent, one per column
    std::vector<double> stddev;  ///< across seeds; empty for single-seed runs
    double average() const;
  };

  std::string title;
  std::vector<std::string> columns;
  std::vector<Row> rows;

  std::string to_csv() const;
  std::string to_markdown() const;
  std::string to_text() const;
  /// Writes `<stem>.csv`, `<stem>.md` and `<stem>.txt` into `dir`.
  void write(const std::filesystem::path& dir, const std::string& stem) const;
};

struct SweepPoint {
  double value = 0.0;
  std::vector<double> task_accuracy;  ///< percent, in task order
  double average() const;
};

struct SweepCurve {
  std::string axis;
  std::vector<std::string> tasks;
  std::vector<SweepPoint> points;

  /// One row per (point, task): axis,value,task,accuracy.
  std::string to_csv() const;
  /// One row per point: axis,value,average.
  std::string average_csv() const;
};

struct RunOptions {
  bool overwrite = false;
  /// Concurrent worker processes for independent tasks; 1 runs in-process.
  int jobs = 1;
  /// Executable that understands the `worker` subcommand (jobs > 1 only).
  std::filesystem::path worker_executable;
};

/// Named variant of the adaptation config: ablation row or sweep point.
struct Variant {
  std::string name;
  AdaptationConfig config;
};

/// The four-step ablation ladder: {lsc+im}, +car, +voting, +uem.
std::vector<Variant> ablation_ladder(const AdaptationConfig& base);

DomainDataset load_domain(const DatasetSpec& spec, const std::string& domain_id);

/// Creates the run directory and writes the resolved config. Refuses to reuse
/// an existing run directory unless `overwrite` is set.
void prepare_run_directory(const ExperimentSpec& spec, bool overwrite);

/// Trained source model for `domain` and `seed`, cached as a checkpoint under
/// `<output_dir>/sources/`.
ModelState source_model(const ExperimentSpec& spec, const std::string& domain, int seed);

/// One adaptation run; artifacts under `<output_dir>/<variant>/<task>/seed<k>/`.
RunRecord run_task(const ExperimentSpec& spec, const Variant& variant, const TransferTask& task, int seed);

ReportTable run_matrix(const ExperimentSpec& spec, const RunOptions& options = {});
ReportTable run_ablation(const ExperimentSpec& spec, const RunOptions& options = {});
SweepCurve run_sweep(const ExperimentSpec& spec, const RunOptions& options = {});

/// Rebuilds the table of a finished run directory from its persisted records.
ReportTable report_from_run_directory(const std::filesystem::path& run_dir);

/// CSV: sample_id,true_label,pseudo_label,f0..f{D-1}. Without an assignment
/// the pseudo labels are computed with default voting options.
void export_embeddings(ModelState& model, const DomainDataset& dataset, const std::filesystem::path& out,
                       const PseudoLabelAssignment* assignment = nullptr);

/// CSV audit of ballots, similarities and final labels per sample.
void write_pseudo_label_csv(const PseudoLabelAssignment& assignment, const DomainDataset& dataset,
                            const std::filesystem::path& out);

void write_confusion_csv(const EvalResult& result, const std::filesystem::path& out);

}  // namespace sdalr
