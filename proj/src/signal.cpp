#include "sdalr/signal.hpp"

#include <cmath>
#include <string>

#include "sdalr/error.hpp"

namespace sdalr {

DomainDataset::DomainDataset(std::string domain_id, int class_count,
                             std::vector<SignalSample> samples)
    : domain_id_(std::move(domain_id)), class_count_(class_count), samples_(std::move(samples)) {
  if (class_count_ < 1) throw DataError("class count must be positive");
  const std::size_t len = samples_.empty() ? 0 : samples_.front().waveform.size();
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (s.waveform.size() != len || len == 0) {
      throw DataError("sample " + std::to_string(i) + " has window length " +
                      std::to_string(s.waveform.size()) + ", expected " + std::to_string(len));
    }
    for (float v : s.waveform) {
      if (!std::isfinite(v)) throw DataError("sample " + std::to_string(i) + " has a non-finite value");
    }
    if (s.label && (*s.label < 0 || *s.label >= class_count_)) {
      throw DataError("sample " + std::to_string(i) + " label " + std::to_string(*s.label) +
                      " outside [0, " + std::to_string(class_count_) + ")");
    }
  }
}

std::size_t DomainDataset::window_length() const {
  return samples_.empty() ? 0 : samples_.front().waveform.size();
}

bool DomainDataset::labeled() const {
  for (const auto& s : samples_) {
    if (!s.label) return false;
  }
  return true;
}

std::vector<int> DomainDataset::labels() const {
  std::vector<int> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) {
    if (!s.label) throw DataError("dataset " + domain_id_ + " is unlabeled");
    out.push_back(*s.label);
  }
  return out;
}

std::vector<std::size_t> DomainDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(class_count_), 0);
  for (const auto& s : samples_) {
    if (s.label) ++counts[static_cast<std::size_t>(*s.label)];
  }
  return counts;
}

DomainDataset DomainDataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<SignalSample> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(samples_.at(i));
  return DomainDataset(domain_id_, class_count_, std::move(picked));
}

TransferTask::TransferTask(std::string source, std::string target)
    : source_domain(std::move(source)), target_domain(std::move(target)) {
  if (source_domain.empty() || target_domain.empty()) {
    throw ConfigError("transfer task needs both a source and a target domain");
  }
  if (source_domain == target_domain) {
    throw ConfigError("transfer task source and target are both " + source_domain);
  }
}

TransferTask TransferTask::parse(const std::string& text) {
  auto pos = text.find("->");
  std::size_t skip = 2;
  if (pos == std::string::npos) {
    pos = text.find(':');
    skip = 1;
  }
  if (pos == std::string::npos) throw ConfigError("cannot parse transfer task '" + text + "'");
  return TransferTask(text.substr(0, pos), text.substr(pos + skip));
}

}  // namespace sdalr
