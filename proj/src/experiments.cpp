#include "sdalr/experiments.hpp"

#include <spawn.h>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "sdalr/error.hpp"

extern char** environ;

namespace fs = std::filesystem;
using nlohmann::json;

namespace sdalr {
namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string task_dir_name(const TransferTask& t) { return t.source_domain + "_to_" + t.target_domain; }

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

fs::path task_directory(const ExperimentSpec& spec, const std::string& variant, const TransferTask& task, int seed) {
  return spec.output_dir / variant / task_dir_name(task) / ("seed" + std::to_string(seed));
}

AdaptationConfig seeded(const AdaptationConfig& base, int seed) {
  AdaptationConfig c = base;
  c.seed = base.seed + static_cast<std::uint64_t>(seed);
  return c;
}

void write_variant(const ExperimentSpec& spec, const Variant& v) {
  json j = {{"name", v.name}, {"adaptation", v.config}};
  j["config_hash"] = fnv1a_hex(json(v.config).dump());
  write_json_file(spec.output_dir / v.name / "variant.json", j);
}

struct Job {
  const Variant* variant;
  TransferTask task;
  int seed;
};

void run_workers(const ExperimentSpec& spec, const std::vector<Job>& jobs, const RunOptions& options) {
  std::vector<pid_t> running;
  auto reap_one = [&]() {
    int status = 0;
    const pid_t pid = ::wait(&status);
    running.erase(std::remove(running.begin(), running.end(), pid), running.end());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      throw TrainingError("worker process " + std::to_string(pid) + " failed");
    }
  };
  for (const auto& job : jobs) {
    while (static_cast<int>(running.size()) >= options.jobs) reap_one();
    std::vector<std::string> args = {options.worker_executable.string(),
                                     "worker",
                                     "--run-dir",
                                     spec.output_dir.string(),
                                     "--variant",
                                     job.variant->name,
                                     "--task",
                                     job.task.name(),
                                     "--seed",
                                     std::to_string(job.seed)};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    pid_t pid = 0;
    if (posix_spawn(&pid, argv[0], nullptr, nullptr, argv.data(), environ) != 0) {
      throw TrainingError("cannot spawn worker " + args[0]);
    }
    running.push_back(pid);
  }
  while (!running.empty()) reap_one();
}

// Runs every (variant, task, seed) combination; returns final accuracies in
// percent indexed [variant][task][seed].
std::vector<std::vector<std::vector<double>>> execute(const ExperimentSpec& spec, const std::vector<Variant>& variants,
                                                      const RunOptions& options) {
  // Fail on missing data before any training starts.
  for (const auto& t : spec.tasks) {
    (void)load_domain(spec.dataset, t.source_domain);
    (void)load_domain(spec.dataset, t.target_domain);
  }

  std::vector<Job> jobs;
  for (const auto& v : variants) {
    write_variant(spec, v);
    for (const auto& t : spec.tasks) {
      for (int s = 0; s < spec.seeds; ++s) jobs.push_back({&v, t, s});
    }
  }

  if (options.jobs > 1 && !options.worker_executable.empty()) {
    // Sources are trained up front so workers only ever read the cache.
    std::set<std::pair<std::string, int>> sources;
    for (const auto& j : jobs) sources.insert({j.task.source_domain, j.seed});
    for (const auto& [domain, seed] : sources) (void)source_model(spec, domain, seed);
    run_workers(spec, jobs, options);
  } else {
    for (const auto& j : jobs) run_task(spec, *j.variant, j.task, j.seed);
  }

  std::vector<std::vector<std::vector<double>>> acc(
      variants.size(), std::vector<std::vector<double>>(spec.tasks.size()));
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
      for (int s = 0; s < spec.seeds; ++s) {
        const auto path = task_directory(spec, variants[v].name, spec.tasks[t], s) / "run_record.json";
        const auto record = read_json_file(path).get<RunRecord>();
        if (!record.final_accuracy) throw DataError("run record without final accuracy: " + path.string());
        acc[v][t].push_back(100.0 * *record.final_accuracy);
      }
    }
  }
  return acc;
}

ReportTable make_table(const std::string& title, const ExperimentSpec& spec, const std::vector<Variant>& variants,
                       const std::vector<std::vector<std::vector<double>>>& acc) {
  ReportTable table;
  table.title = title;
  for (const auto& t : spec.tasks) table.columns.push_back(t.name());
  for (std::size_t v = 0; v < variants.size(); ++v) {
    ReportTable::Row row{variants[v].name, {}, {}};
    for (const auto& seeds : acc[v]) {
      row.cells.push_back(mean_of(seeds));
      if (spec.seeds > 1) row.stddev.push_back(stddev_of(seeds));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace

double ReportTable::Row::average() const { return mean_of(cells); }

std::string ReportTable::to_csv() const {
  std::ostringstream out;
  out << "method";
  for (const auto& c : columns) out << ',' << c;
  out << ",average\n";
  for (const auto& r : rows) {
    out << r.name;
    for (double v : r.cells) out << ',' << std::setprecision(17) << v;
    out << ',' << std::setprecision(17) << r.average() << '\n';
  }
  return out.str();
}

std::string ReportTable::to_markdown() const {
  std::ostringstream out;
  if (!title.empty()) out << "### " << title << "\n\n";
  out << "| Method |";
  for (const auto& c : columns) out << ' ' << c << " |";
  out << " Average |\n|---|";
  for (std::size_t i = 0; i <= columns.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& r : rows) {
    out << "| " << r.name << " |";
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
      out << ' ' << fixed(r.cells[i]);
      if (i < r.stddev.size()) out << " ± " << fixed(r.stddev[i]);
      out << " |";
    }
    out << ' ' << fixed(r.average()) << " |\n";
  }
  return out.str();
}

std::string ReportTable::to_text() const {
  std::vector<std::string> header = {"Method"};
  header.insert(header.end(), columns.begin(), columns.end());
  header.push_back("Average");
  std::vector<std::vector<std::string>> cells = {header};
  for (const auto& r : rows) {
    std::vector<std::string> line = {r.name};
    for (double v : r.cells) line.push_back(fixed(v));
    line.push_back(fixed(r.average()));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::ostringstream out;
  if (!title.empty()) out << title << '\n';
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      out << (i == 0 ? std::left : std::right) << std::setw(static_cast<int>(width[i])) << line[i]
          << (i + 1 < line.size() ? "  " : "\n");
    }
  }
  return out.str();
}

void ReportTable::write(const fs::path& dir, const std::string& stem) const {
  write_text(dir / (stem + ".csv"), to_csv());
  write_text(dir / (stem + ".md"), to_markdown());
  write_text(dir / (stem + ".txt"), to_text());
}

double SweepPoint::average() const { return mean_of(task_accuracy); }

std::string SweepCurve::to_csv() const {
  std::ostringstream out;
  out << "axis,value,task,accuracy\n";
  for (const auto& p : points) {
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      out << axis << ',' << p.value << ',' << tasks[t] << ',' << std::setprecision(17) << p.task_accuracy[t] << '\n';
    }
  }
  return out.str();
}

std::string SweepCurve::average_csv() const {
  std::ostringstream out;
  out << "axis,value,average\n";
  for (const auto& p : points) out << axis << ',' << p.value << ',' << std::setprecision(17) << p.average() << '\n';
  return out.str();
}

std::vector<Variant> ablation_ladder(const AdaptationConfig& base) {
  std::vector<Variant> rows;
  AdaptationConfig c = base;
  c.losses.lsc = true;
  c.losses.im = true;
  c.losses.car = false;
  c.voting = false;
  c.losses.uem = false;
  rows.push_back({"ablation1_lsc+im", c});
  c.losses.car = true;
  rows.push_back({"ablation2_+car", c});
  c.voting = true;
  rows.push_back({"ablation3_+car+voting", c});
  c.losses.uem = true;
  rows.push_back({"ablation4_+car+voting+uem", c});
  return rows;
}

DomainDataset load_domain(const DatasetSpec& spec, const std::string& domain_id) {
  static std::mutex mutex;
  static std::map<std::string, DomainDataset> cache;
  json key = {{"kind", spec.kind}, {"root", spec.root.string()}, {"domain", domain_id}, {"seed", spec.synth_seed}};
  key["synth"] = spec.synth;
  std::lock_guard lock(mutex);
  const auto k = key.dump();
  if (auto it = cache.find(k); it != cache.end()) return it->second;

  DomainDataset data;
  if (spec.kind == "pu") {
    data = load_pu(spec.root, domain_id, spec.loader);
  } else if (spec.kind == "jnu") {
    data = load_jnu(spec.root, domain_id, spec.loader);
  } else if (spec.kind == "synth") {
    auto it = std::find_if(spec.synth_domains.begin(), spec.synth_domains.end(),
                           [&](const auto& d) { return d.id == domain_id; });
    if (it == spec.synth_domains.end()) throw ConfigError("unknown synthetic domain " + domain_id);
    const auto seed = spec.synth_seed ^ std::stoull(fnv1a_hex(domain_id), nullptr, 16);
    data = synth_domain(spec.synth, it->shift, seed, domain_id);
  } else {
    throw ConfigError("unknown dataset kind " + spec.kind);
  }
  cache.emplace(k, data);
  return data;
}

void prepare_run_directory(const ExperimentSpec& spec, bool overwrite) {
  const auto& dir = spec.output_dir;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!overwrite) {
      throw ConfigError("run directory " + dir.string() + " already exists; pass --overwrite to replace it");
    }
    if (!fs::exists(dir / "config.json")) {
      throw ConfigError("refusing to overwrite " + dir.string() + ": not a run directory");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  auto j = to_json(spec);
  j["config_hash"] = experiment_hash(spec);
  write_json_file(dir / "config.json", j);
}

ModelState source_model(const ExperimentSpec& spec, const std::string& domain, int seed) {
  const auto dir = spec.output_dir / "sources";
  const auto ckpt = dir / (domain + "_seed" + std::to_string(seed) + ".pt");
  const auto data = load_domain(spec.dataset, domain);
  if (fs::exists(ckpt)) return load_checkpoint(ckpt, spec.encoder, data.class_count());

  auto trained = train_source(data, spec.encoder, seeded(spec.adaptation, seed));
  trained.model.meta.dataset = spec.dataset.kind;
  trained.model.meta.domain = domain;
  save_checkpoint(trained.model, ckpt);
  write_json_file(dir / (domain + "_seed" + std::to_string(seed) + ".json"),
                  {{"domain", domain},
                   {"seed", seed},
                   {"val_accuracy", trained.val_accuracy},
                   {"train_size", trained.train_size},
                   {"val_size", trained.val_size},
                   {"loss_trace", trained.loss_trace},
                   {"config_hash", trained.model.config_hash()}});
  return std::move(trained.model);
}

RunRecord run_task(const ExperimentSpec& spec, const Variant& variant, const TransferTask& task, int seed) {
  const auto dir = task_directory(spec, variant.name, task, seed);
  spdlog::info("[{}] {} seed {}", variant.name, task.name(), seed);
  ModelState source = source_model(spec, task.source_domain, seed);
  const auto full_target = load_domain(spec.dataset, task.target_domain);
  const auto config = seeded(variant.config, seed);

  DomainDataset adapt_on = full_target;
  std::optional<DomainDataset> holdout;
  if (spec.evaluate_split) {
    std::vector<std::size_t> idx(full_target.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(config.seed ^ 0xE7A1ull);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_hold = idx.size() / 5;
    std::vector<std::size_t> hold(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::vector<std::size_t> rest(idx.begin() + static_cast<std::ptrdiff_t>(n_hold), idx.end());
    std::sort(hold.begin(), hold.end());
    std::sort(rest.begin(), rest.end());
    holdout = full_target.subset(hold);
    adapt_on = full_target.subset(rest);
  }

  auto result = adapt_target(source, adapt_on, config, dir);
  result.record.task = task.name();
  if (holdout) {
    const auto eval = evaluate(result.model, *holdout);
    result.record.final_accuracy = eval.accuracy;
    result.record.confusion = eval.confusion;
  }
  write_json_file(dir / "run_record.json", result.record);
  if (result.record.final_accuracy) {
    EvalResult confusion;
    confusion.confusion = result.record.confusion;
    write_confusion_csv(confusion, dir / "confusion.csv");
  }
  save_checkpoint(result.model, dir / "model.pt");
  return result.record;
}

ReportTable run_matrix(const ExperimentSpec& spec, const RunOptions& options) {
  prepare_run_directory(spec, options.overwrite);
  const std::vector<Variant> variants = {{"sdalr", spec.adaptation}};
  auto table = make_table("Diagnosis accuracy (%) on " + spec.dataset.kind, spec, variants,
                          execute(spec, variants, options));
  table.write(spec.output_dir, "table");
  return table;
}

ReportTable run_ablation(const ExperimentSpec& spec, const RunOptions& options) {
  prepare_run_directory(spec, options.overwrite);
  auto ladder = ablation_ladder(spec.adaptation);
  if (!spec.ablation_rows.empty()) {
    std::vector<Variant> picked;
    for (int r : spec.ablation_rows) picked.push_back(ladder.at(static_cast<std::size_t>(r - 1)));
    ladder = std::move(picked);
  }
  auto table = make_table("Ablation accuracy (%) on " + spec.dataset.kind, spec, ladder,
                          execute(spec, ladder, options));
  table.write(spec.output_dir, "table");
  return table;
}

SweepCurve run_sweep(const ExperimentSpec& spec, const RunOptions& options) {
  if (spec.sweep.axis == SweepAxis::None) throw ConfigError("sweep.axis must be beta or threshold");
  prepare_run_directory(spec, options.overwrite);
  const bool beta = spec.sweep.axis == SweepAxis::Beta;
  const auto values = spec.sweep.points();
  std::vector<Variant> variants;
  for (double v : values) {
    AdaptationConfig c = spec.adaptation;
    (beta ? c.beta : c.threshold) = v;
    variants.push_back({std::string(beta ? "beta_" : "threshold_") + fixed(v), c});
  }
  const auto acc = execute(spec, variants, options);

  SweepCurve curve;
  curve.axis = beta ? "beta" : "threshold";
  for (const auto& t : spec.tasks) curve.tasks.push_back(t.name());
  for (std::size_t v = 0; v < values.size(); ++v) {
    SweepPoint p{values[v], {}};
    for (const auto& seeds : acc[v]) p.task_accuracy.push_back(mean_of(seeds));
    curve.points.push_back(std::move(p));
  }
  write_text(spec.output_dir / "sweep.csv", curve.to_csv());
  write_text(spec.output_dir / "sweep_average.csv", curve.average_csv());
  make_table("Sweep accuracy (%) on " + spec.dataset.kind, spec, variants, acc).write(spec.output_dir, "table");
  return curve;
}

ReportTable report_from_run_directory(const fs::path& run_dir) {
  const auto config = read_json_file(run_dir / "config.json");
  auto spec = experiment_from_json(config);
  spec.output_dir = run_dir;

  std::vector<Variant> variants;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "variant.json")) {
      variants.push_back({entry.path().filename().string(), spec.adaptation});
    }
  }
  if (variants.empty()) throw DataError("no finished runs under " + run_dir.string());
  std::sort(variants.begin(), variants.end(), [](const auto& a, const auto& b) { return a.name < b.name; });

  std::vector<std::vector<std::vector<double>>> acc(variants.size(),
                                                    std::vector<std::vector<double>>(spec.tasks.size()));
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
      for (int s = 0; s < spec.seeds; ++s) {
        const auto path = task_directory(spec, variants[v].name, spec.tasks[t], s) / "run_record.json";
        if (!fs::exists(path)) throw DataError("missing run record " + path.string());
        const auto record = read_json_file(path).get<RunRecord>();
        if (!record.final_accuracy) throw DataError("run record without final accuracy: " + path.string());
        acc[v][t].push_back(100.0 * *record.final_accuracy);
      }
    }
  }
  return make_table("Report for " + run_dir.filename().string(), spec, variants, acc);
}

void export_embeddings(ModelState& model, const DomainDataset& dataset, const fs::path& out,
                       const PseudoLabelAssignment* assignment) {
  std::optional<PseudoLabelAssignment> computed;
  if (!assignment) {
    computed = assign_labels(model, dataset, VotingOptions{});
    assignment = &*computed;
  }
  const auto emb = embed(model, dataset);
  auto f = emb.features.contiguous();
  const auto N = f.size(0), D = f.size(1);
  const double* p = f.data_ptr<double>();

  std::ostringstream csv;
  csv << "sample_id,true_label,pseudo_label";
  for (std::int64_t d = 0; d < D; ++d) csv << ",f" << d;
  csv << '\n' << std::setprecision(9);
  for (std::int64_t i = 0; i < N; ++i) {
    const auto& s = dataset[static_cast<std::size_t>(i)];
    csv << i << ',' << (s.label ? std::to_string(*s.label) : "") << ','
        << assignment->labels[static_cast<std::size_t>(i)];
    for (std::int64_t d = 0; d < D; ++d) csv << ',' << p[i * D + d];
    csv << '\n';
  }
  write_text(out, csv.str());
}

void write_pseudo_label_csv(const PseudoLabelAssignment& assignment, const DomainDataset& dataset,
                            const fs::path& out) {
  static const char* kBallotNames[] = {"ballot_original", "ballot_flip", "ballot_random_zero", "ballot_cyclic_shift"};
  std::ostringstream csv;
  csv << "sample_id,true_label,top_similarity";
  for (std::size_t k = 0; k < assignment.ballots_per_sample; ++k) csv << ',' << kBallotNames[k];
  csv << ",final_label\n" << std::setprecision(9);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const auto& s = dataset[i];
    csv << i << ',' << (s.label ? std::to_string(*s.label) : "") << ',' << assignment.top_similarity[i];
    for (int b : assignment.ballots_of(i)) csv << ',' << b;
    csv << ',' << assignment.labels[i] << '\n';
  }
  write_text(out, csv.str());
}

void write_confusion_csv(const EvalResult& result, const fs::path& out) {
  std::ostringstream csv;
  csv << "true\\predicted";
  for (std::size_t c = 0; c < result.confusion.size(); ++c) csv << ',' << c;
  csv << '\n';
  for (std::size_t r = 0; r < result.confusion.size(); ++r) {
    csv << r;
    for (auto v : result.confusion[r]) csv << ',' << v;
    csv << '\n';
  }
  write_text(out, csv.str());
}

}  // namespace sdalr
