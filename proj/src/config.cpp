#include "sdalr/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sdalr/error.hpp"

namespace sdalr {

using nlohmann::json;

namespace {

// Reads known keys into a struct and rejects anything it did not ask for.
class StrictReader {
 public:
  StrictReader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(context_ + " must be a JSON object");
  }

  template <typename T>
  StrictReader& get(const char* key, T& out) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->template get<T>();
      } catch (const json::exception& e) {
        throw ConfigError(context_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  ~StrictReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key " + context_ + "." + item.key());
    }
  }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

const char* axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::Beta: return "beta";
    case SweepAxis::Threshold: return "threshold";
    case SweepAxis::None: break;
  }
  return "none";
}

SweepAxis axis_from(const std::string& s) {
  if (s == "beta") return SweepAxis::Beta;
  if (s == "threshold") return SweepAxis::Threshold;
  if (s == "none" || s.empty()) return SweepAxis::None;
  throw ConfigError("unknown sweep axis '" + s + "' (expected beta, threshold or none)");
}

}  // namespace

void to_json(json& j, const AugmentationParams& p) {
  j = {{"zero_fraction", p.zero_fraction}, {"flip_negates", p.flip_negates}};
}
void from_json(const json& j, AugmentationParams& p) {
  StrictReader(j, "augmentation").get("zero_fraction", p.zero_fraction).get("flip_negates", p.flip_negates);
}

void to_json(json& j, const LossSwitches& s) {
  j = {{"lsc", s.lsc}, {"im", s.im}, {"uem", s.uem}, {"car", s.car}};
}
void from_json(const json& j, LossSwitches& s) {
  StrictReader(j, "losses").get("lsc", s.lsc).get("im", s.im).get("uem", s.uem).get("car", s.car);
}

void to_json(json& j, const LoaderOptions& o) {
  j = {{"window_len", o.window_len},
       {"per_class_cap", o.per_class_cap},
       {"pu_channel", o.pu_channel},
       {"text_column", o.text_column}};
}
void from_json(const json& j, LoaderOptions& o) {
  StrictReader(j, "loader")
      .get("window_len", o.window_len)
      .get("per_class_cap", o.per_class_cap)
      .get("pu_channel", o.pu_channel)
      .get("text_column", o.text_column);
}

void to_json(json& j, const DomainShift& s) {
  j = {{"speed_factor", s.speed_factor}, {"noise_scale", s.noise_scale}};
}
void from_json(const json& j, DomainShift& s) {
  StrictReader(j, "shift").get("speed_factor", s.speed_factor).get("noise_scale", s.noise_scale);
}

void to_json(json& j, const SynthConfig& c) {
  j = {{"class_count", c.class_count},     {"samples_per_class", c.samples_per_class},
       {"window_len", c.window_len},       {"sample_rate", c.sample_rate},
       {"fault_freqs", c.fault_freqs},     {"resonance_freqs", c.resonance_freqs},
       {"decay", c.decay},                 {"noise_std", c.noise_std},
       {"freq_jitter", c.freq_jitter},     {"amplitude_jitter", c.amplitude_jitter}};
}
void from_json(const json& j, SynthConfig& c) {
  StrictReader(j, "synth")
      .get("class_count", c.class_count)
      .get("samples_per_class", c.samples_per_class)
      .get("window_len", c.window_len)
      .get("sample_rate", c.sample_rate)
      .get("fault_freqs", c.fault_freqs)
      .get("resonance_freqs", c.resonance_freqs)
      .get("decay", c.decay)
      .get("noise_std", c.noise_std)
      .get("freq_jitter", c.freq_jitter)
      .get("amplitude_jitter", c.amplitude_jitter);
}

void to_json(json& j, const EncoderConfig& c) {
  j = {{"in_channels", c.in_channels}, {"base_channels", c.base_channels}, {"window_len", c.window_len},
       {"feature_dim", c.feature_dim}, {"dropout", c.dropout},             {"bn_eps", c.bn_eps},
       {"bn_momentum", c.bn_momentum}};
}
void from_json(const json& j, EncoderConfig& c) {
  StrictReader(j, "encoder")
      .get("in_channels", c.in_channels)
      .get("base_channels", c.base_channels)
      .get("window_len", c.window_len)
      .get("feature_dim", c.feature_dim)
      .get("dropout", c.dropout)
      .get("bn_eps", c.bn_eps)
      .get("bn_momentum", c.bn_momentum);
}

void to_json(json& j, const AdaptationConfig& c) {
  j = {{"alpha", c.alpha},
       {"beta", c.beta},
       {"threshold", c.threshold},
       {"batch_size", c.batch_size},
       {"source_lr", c.source_lr},
       {"source_epochs", c.source_epochs},
       {"source_val_fraction", c.source_val_fraction},
       {"target_lr", c.target_lr},
       {"target_epochs", c.target_epochs},
       {"momentum", c.momentum},
       {"weight_decay", c.weight_decay},
       {"schedule_gamma", c.schedule_gamma},
       {"schedule_power", c.schedule_power},
       {"refresh_every", c.refresh_every},
       {"voting", c.voting},
       {"losses", c.losses},
       {"car_normalize", c.car_normalize},
       {"freeze_classifier", c.freeze_classifier},
       {"augmentation", c.augmentation},
       {"strict_determinism", c.strict_determinism},
       {"seed", c.seed}};
}
void from_json(const json& j, AdaptationConfig& c) {
  StrictReader(j, "adaptation")
      .get("alpha", c.alpha)
      .get("beta", c.beta)
      .get("threshold", c.threshold)
      .get("batch_size", c.batch_size)
      .get("source_lr", c.source_lr)
      .get("source_epochs", c.source_epochs)
      .get("source_val_fraction", c.source_val_fraction)
      .get("target_lr", c.target_lr)
      .get("target_epochs", c.target_epochs)
      .get("momentum", c.momentum)
      .get("weight_decay", c.weight_decay)
      .get("schedule_gamma", c.schedule_gamma)
      .get("schedule_power", c.schedule_power)
      .get("refresh_every", c.refresh_every)
      .get("voting", c.voting)
      .get("losses", c.losses)
      .get("car_normalize", c.car_normalize)
      .get("freeze_classifier", c.freeze_classifier)
      .get("augmentation", c.augmentation)
      .get("strict_determinism", c.strict_determinism)
      .get("seed", c.seed);
}

std::vector<double> SweepSpec::points() const {
  if (!values.empty()) return values;
  std::vector<double> out;
  if (axis == SweepAxis::Beta) {
    for (int i = 1; i <= 10; ++i) out.push_back(i / 10.0);
  } else if (axis == SweepAxis::Threshold) {
    for (int i = 0; i < 10; ++i) out.push_back((50 + 5 * i) / 100.0);
  }
  return out;
}

std::vector<std::string> dataset_domains(const DatasetSpec& spec) {
  if (spec.kind == "pu") return {"A1", "A2", "A3"};
  if (spec.kind == "jnu") return {"B1", "B2", "B3"};
  if (spec.kind == "synth") {
    std::vector<std::string> ids;
    for (const auto& d : spec.synth_domains) ids.push_back(d.id);
    return ids;
  }
  throw ConfigError("unknown dataset kind '" + spec.kind + "' (expected pu, jnu or synth)");
}

std::vector<TransferTask> default_tasks(const DatasetSpec& spec) {
  const auto d = dataset_domains(spec);
  std::vector<TransferTask> tasks;
  for (const auto& s : d) {
    for (const auto& t : d) {
      if (s != t) tasks.emplace_back(s, t);
    }
  }
  return tasks;
}

void ExperimentSpec::validate() const {
  const auto domains = dataset_domains(dataset);
  if (dataset.kind != "synth" && dataset.root.empty()) throw ConfigError("dataset.root is required for " + dataset.kind);
  if (dataset.kind == "synth") {
    (void)resolved(dataset.synth);
    if (dataset.synth.window_len != encoder.window_len) {
      throw ConfigError("encoder.window_len must equal synth.window_len");
    }
    std::set<std::string> ids;
    for (const auto& d : dataset.synth_domains) {
      if (!ids.insert(d.id).second) throw ConfigError("duplicate synthetic domain id " + d.id);
    }
  } else if (static_cast<int>(dataset.loader.window_len) != encoder.window_len) {
    throw ConfigError("encoder.window_len must equal loader.window_len");
  }
  if (tasks.empty()) throw ConfigError("no transfer tasks configured");
  for (const auto& t : tasks) {
    for (const auto& id : {t.source_domain, t.target_domain}) {
      if (std::find(domains.begin(), domains.end(), id) == domains.end()) {
        throw ConfigError("task " + t.name() + " references unknown domain " + id);
      }
    }
  }
  for (double v : sweep.points()) {
    if (sweep.axis == SweepAxis::Beta && !(v > 0)) throw ConfigError("beta sweep values must be positive");
    if (sweep.axis == SweepAxis::Threshold && !(v > 0 && v < 1)) {
      throw ConfigError("threshold sweep values must lie in (0, 1)");
    }
  }
  for (int r : ablation_rows) {
    if (r < 1 || r > 4) throw ConfigError("ablation rows are numbered 1..4");
  }
  if (seeds < 1) throw ConfigError("seeds must be at least 1");
  adaptation.validate();
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return json::parse(buffer.str(), nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ExperimentSpec experiment_from_json(const json& j) {
  ExperimentSpec spec;
  std::vector<std::string> tasks;
  json dataset = json::object(), sweep = json::object();
  std::string output_dir = spec.output_dir.string();
  {
    StrictReader r(j, "config");
    r.get("dataset", dataset)
        .get("tasks", tasks)
        .get("encoder", spec.encoder)
        .get("adaptation", spec.adaptation)
        .get("sweep", sweep)
        .get("ablation_rows", spec.ablation_rows)
        .get("output_dir", output_dir)
        .get("seeds", spec.seeds)
        .get("evaluate_split", spec.evaluate_split);
    std::string hash;
    r.get("config_hash", hash);  // written into resolved configs; ignored on read
  }
  spec.output_dir = output_dir;

  std::string root;
  json domains = json::array();
  {
    StrictReader r(dataset, "dataset");
    r.get("kind", spec.dataset.kind)
        .get("root", root)
        .get("loader", spec.dataset.loader)
        .get("synth", spec.dataset.synth)
        .get("synth_domains", domains)
        .get("synth_seed", spec.dataset.synth_seed);
  }
  spec.dataset.root = root;
  if (!domains.empty()) {
    spec.dataset.synth_domains.clear();
    for (const auto& d : domains) {
      SynthDomainSpec sd;
      StrictReader(d, "dataset.synth_domains[]")
          .get("id", sd.id)
          .get("speed_factor", sd.shift.speed_factor)
          .get("noise_scale", sd.shift.noise_scale);
      spec.dataset.synth_domains.push_back(sd);
    }
  }

  std::string axis = "none";
  StrictReader(sweep, "sweep").get("axis", axis).get("values", spec.sweep.values);
  spec.sweep.axis = axis_from(axis);

  if (tasks.empty()) {
    spec.tasks = default_tasks(spec.dataset);
  } else {
    for (const auto& t : tasks) spec.tasks.push_back(TransferTask::parse(t));
  }
  spec.validate();
  return spec;
}

ExperimentSpec load_experiment(const std::filesystem::path& path) { return experiment_from_json(read_json_file(path)); }

json to_json(const ExperimentSpec& spec) {
  json domains = json::array();
  for (const auto& d : spec.dataset.synth_domains) {
    domains.push_back({{"id", d.id}, {"speed_factor", d.shift.speed_factor}, {"noise_scale", d.shift.noise_scale}});
  }
  json tasks = json::array();
  for (const auto& t : spec.tasks) tasks.push_back(t.name());
  return {{"dataset",
           {{"kind", spec.dataset.kind},
            {"root", spec.dataset.root.string()},
            {"loader", spec.dataset.loader},
            {"synth", resolved(spec.dataset.synth)},
            {"synth_domains", domains},
            {"synth_seed", spec.dataset.synth_seed}}},
          {"tasks", tasks},
          {"encoder", spec.encoder},
          {"adaptation", spec.adaptation},
          {"sweep", {{"axis", axis_name(spec.sweep.axis)}, {"values", spec.sweep.values}}},
          {"ablation_rows", spec.ablation_rows},
          {"output_dir", spec.output_dir.string()},
          {"seeds", spec.seeds},
          {"evaluate_split", spec.evaluate_split}};
}

std::string experiment_hash(const ExperimentSpec& spec) {
  auto j = to_json(spec);
  j.erase("output_dir");
  return fnv1a_hex(j.dump());
}

void to_json(json& j, const LossBundle& b) {
  j = {{"l_lsc", b.l_lsc}, {"l_uem", b.l_uem}, {"l_ent", b.l_ent},       {"l_div", b.l_div},
       {"l_im", b.l_im},   {"l_car", b.l_car}, {"l_total", b.l_total},   {"reliable", b.reliable},
       {"unreliable", b.unreliable}};
}

namespace {
template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}
}  // namespace

void to_json(json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch},
       {"mean", r.mean},
       {"steps", r.steps},
       {"lr", r.lr},
       {"refreshed", r.refreshed},
       {"reliable_fraction", r.reliable_fraction},
       {"balanced_size", r.balanced_size},
       {"pseudo_label_accuracy", optional_json(r.pseudo_label_accuracy)},
       {"target_accuracy", optional_json(r.target_accuracy)}};
}

void to_json(json& j, const RunRecord& r) {
  j = {{"task", r.task},
       {"config_hash", r.config_hash},
       {"source_only_accuracy", optional_json(r.source_only_accuracy)},
       {"epochs", r.epochs},
       {"final_accuracy", optional_json(r.final_accuracy)},
       {"confusion", r.confusion},
       {"wall_seconds", r.wall_seconds}};
}

void from_json(const json& j, RunRecord& r) {
  r.task = j.value("task", "");
  r.config_hash = j.value("config_hash", "");
  if (j.contains("source_only_accuracy") && !j["source_only_accuracy"].is_null()) {
    r.source_only_accuracy = j["source_only_accuracy"].get<double>();
  }
  if (j.contains("final_accuracy") && !j["final_accuracy"].is_null()) {
    r.final_accuracy = j["final_accuracy"].get<double>();
  }
  if (j.contains("confusion")) r.confusion = j["confusion"].get<std::vector<std::vector<std::int64_t>>>();
  r.wall_seconds = j.value("wall_seconds", 0.0);
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace sdalr
