#include "sdalr/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include <spdlog/spdlog.h>

#include "sdalr/error.hpp"
#include "sdalr/mat_file.hpp"

namespace fs = std::filesystem;

namespace sdalr {

std::vector<SignalSample> window_recording(std::span<const float> raw, std::size_t window_len,
                                           std::size_t per_class_cap) {
  if (window_len == 0) throw DataError("window length must be positive");
  if (raw.size() < window_len) {
    throw DataError("recording too short: " + std::to_string(raw.size()) + " < window " +
                    std::to_string(window_len));
  }
  const std::size_t count = std::min(raw.size() / window_len, per_class_cap);
  std::vector<SignalSample> out(count);
  for (std::size_t w = 0; w < count; ++w) {
    auto first = raw.begin() + static_cast<std::ptrdiff_t>(w * window_len);
    out[w].waveform.assign(first, first + static_cast<std::ptrdiff_t>(window_len));
  }
  return out;
}

std::string pu_condition(const std::string& domain) {
  if (domain == "A1") return "N15_M01_F10";
  if (domain == "A2") return "N15_M07_F04";
  if (domain == "A3") return "N15_M07_F10";
  throw ConfigError("unknown domain '" + domain + "' for PU (expected A1, A2 or A3)");
}

int jnu_speed(const std::string& domain) {
  if (domain == "B1") return 600;
  if (domain == "B2") return 800;
  if (domain == "B3") return 1000;
  throw ConfigError("unknown domain '" + domain + "' for JNU (expected B1, B2 or B3)");
}

namespace {

bool parse_float(std::string_view token, float& value) {
  while (!token.empty() && (token.front() == ' ' || token.front() == '\t')) token.remove_prefix(1);
  while (!token.empty() && (token.back() == ' ' || token.back() == '\t' || token.back() == '\r')) {
    token.remove_suffix(1);
  }
  if (token.empty()) return false;
  if (token.front() == '+') token.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  return ec == std::errc() && ptr == token.data() + token.size();
}

std::vector<float> read_measurement(const fs::path& file, const LoaderOptions& options) {
  const auto ext = file.extension().string();
  if (ext == ".mat") {
    std::vector<mat::Array> vars;
    try {
      vars = mat::read_file(file);
    } catch (const std::exception& e) {
      throw DataError("unreadable file " + file.string() + ": " + e.what());
    }
    auto channel = mat::find_channel(vars, options.pu_channel);
    if (!channel) {
      throw DataError("channel '" + options.pu_channel + "' not found in " + file.string());
    }
    return {channel->begin(), channel->end()};
  }
  return read_text_column(file, options.text_column);
}

bool is_measurement_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".mat" || ext == ".csv" || ext == ".txt";
}

}  // namespace

std::vector<float> read_text_column(const fs::path& file, std::size_t column,
                                    std::size_t* skipped) {
  std::ifstream in(file);
  if (!in) throw DataError("unreadable file " + file.string());
  std::vector<float> values;
  std::size_t bad = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::replace_if(
        line.begin(), line.end(), [](char c) { return c == ',' || c == ';' || c == '\t' || c == '\r'; },
        ' ');
    std::istringstream fields(line);
    std::string tok;
    bool found = false;
    float v = 0.0f;
    for (std::size_t col = 0; fields >> tok; ++col) {
      if (col == column) {
        found = parse_float(tok, v);
        break;
      }
    }
    if (found) {
      values.push_back(v);
    } else {
      ++bad;
    }
  }
  if (bad > 0) spdlog::warn("{}: skipped {} unparseable line(s)", file.string(), bad);
  if (skipped) *skipped = bad;
  return values;
}

DomainDataset load_pu(const fs::path& root, const std::string& domain,
                      const LoaderOptions& options) {
  const std::string condition = pu_condition(domain);
  if (!fs::is_directory(root)) throw DataError("dataset root not found: " + root.string());

  std::vector<SignalSample> samples;
  for (std::size_t cls = 0; cls < kPuBearingCodes.size(); ++cls) {
    const std::string code(kPuBearingCodes[cls]);
    const fs::path dir = root / code;
    if (!fs::is_directory(dir)) throw DataError("missing bearing " + code + " under " + root.string());

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (entry.is_regular_file() && is_measurement_file(entry.path()) &&
          name.find(condition) != std::string::npos) {
        files.push_back(entry.path());
      }
    }
    if (files.empty()) {
      throw DataError("missing bearing " + code + " measurements for condition " + condition);
    }
    std::sort(files.begin(), files.end());

    std::vector<float> raw;
    for (const auto& f : files) {
      auto part = read_measurement(f, options);
      raw.insert(raw.end(), part.begin(), part.end());
    }
    auto windows = window_recording(raw, options.window_len, options.per_class_cap);
    for (auto& w : windows) {
      w.label = static_cast<int>(cls);
      w.domain_id = domain;
      w.source_file = (dir / code).string();
      samples.push_back(std::move(w));
    }
  }
  return DomainDataset(domain, static_cast<int>(kPuBearingCodes.size()), std::move(samples));
}

DomainDataset load_jnu(const fs::path& root, const std::string& domain,
                       const LoaderOptions& options) {
  const int speed = jnu_speed(domain);
  if (!fs::is_directory(root)) throw DataError("dataset root not found: " + root.string());

  std::vector<SignalSample> samples;
  for (std::size_t cls = 0; cls < kJnuStates.size(); ++cls) {
    const std::string state(kJnuStates[cls]);
    const fs::path file = root / (state + "_" + std::to_string(speed) + ".csv");
    if (!fs::is_regular_file(file)) {
      throw DataError("missing state " + state + " file " + file.string());
    }
    auto raw = read_text_column(file, options.text_column);
    auto windows = window_recording(raw, options.window_len, options.per_class_cap);
    for (auto& w : windows) {
      w.label = static_cast<int>(cls);
      w.domain_id = domain;
      w.source_file = file.string();
      samples.push_back(std::move(w));
    }
  }
  return DomainDataset(domain, static_cast<int>(kJnuStates.size()), std::move(samples));
}

}  // namespace sdalr
