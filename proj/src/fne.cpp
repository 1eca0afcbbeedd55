#include "fnmme/fne.hpp"

#include <cmath>

#include "fnmme/errors.hpp"

namespace fnmme::fne {

void validate(const FneConfig& cfg) {
  if (!std::isfinite(cfg.theta_pos) || !std::isfinite(cfg.theta_neg) ||
      !(cfg.theta_neg < cfg.theta_pos)) {
    throw ValidationError("FNE thresholds require theta_neg < theta_pos, got theta_neg=" +
                          std::to_string(cfg.theta_neg) +
                          " theta_pos=" + std::to_string(cfg.theta_pos));
  }
}

RawFeatureVector spatial_pool(const ActivationSet& acts) {
  validate(acts);
  RawFeatureVector out;
  out.image_id = acts.image_id;
  std::size_t dim = 0;
  for (const auto& layer : acts.layers) dim += layer.feature_count();
  out.values.reserve(dim);

  for (const auto& layer : acts.layers) {
    if (layer.kind == LayerKind::fc) {
      out.values.insert(out.values.end(), layer.values.begin(), layer.values.end());
      continue;
    }
    const std::size_t channels = layer.shape[2];
    const std::size_t positions = std::size_t{layer.shape[0]} * layer.shape[1];
    std::vector<double> sums(channels, 0.0);
    for (std::size_t p = 0; p < positions; ++p) {
      const float* row = layer.values.data() + p * channels;
      for (std::size_t c = 0; c < channels; ++c) sums[c] += row[c];
    }
    for (double s : sums) out.values.push_back(s / static_cast<double>(positions));
  }
  return out;
}

void StatsAccumulator::add(std::span<const double> values) {
  if (count_ == 0) {
    mean_.assign(values.size(), 0.0);
    m2_.assign(values.size(), 0.0);
  } else if (values.size() != mean_.size()) {
    throw DimensionError("feature vector of length " + std::to_string(values.size()) +
                         " does not match length " + std::to_string(mean_.size()));
  }
  ++count_;
  const double n = static_cast<double>(count_);
  for (std::size_t j = 0; j < values.size(); ++j) {
    const double delta = values[j] - mean_[j];
    mean_[j] += delta / n;
    m2_[j] += delta * (values[j] - mean_[j]);
  }
}

FneStats StatsAccumulator::finish() const {
  if (count_ < 2) {
    throw InsufficientDataError("FNE statistics need at least 2 training vectors, got " +
                                std::to_string(count_));
  }
  FneStats stats;
  stats.fitted_on = static_cast<std::uint32_t>(count_);
  stats.mean.resize(mean_.size());
  stats.std.resize(mean_.size());
  for (std::size_t j = 0; j < mean_.size(); ++j) {
    stats.mean[j] = static_cast<float>(mean_[j]);
    stats.std[j] = static_cast<float>(std::sqrt(std::max(0.0, m2_[j] / static_cast<double>(count_))));
  }
  return stats;
}

FneStats fit_stats(std::span<const RawFeatureVector> train) {
  StatsAccumulator acc;
  for (const auto& v : train) acc.add(v.values);
  return acc.finish();
}

std::vector<double> standardize(const RawFeatureVector& raw, const FneStats& stats) {
  if (raw.values.size() != stats.dimension() || stats.std.size() != stats.dimension()) {
    throw DimensionError("raw features of length " + std::to_string(raw.values.size()) +
                         " cannot be standardized with statistics of dimension " +
                         std::to_string(stats.dimension()));
  }
  std::vector<double> z(raw.values.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double sd = stats.std[j];
    z[j] = sd > kStdEpsilon ? (raw.values[j] - static_cast<double>(stats.mean[j])) / sd : 0.0;
  }
  return z;
}

FneVector discretize(std::span<const double> z, const FneConfig& cfg, std::string image_id) {
  validate(cfg);
  FneVector out;
  out.image_id = std::move(image_id);
  out.values.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (z[j] > cfg.theta_pos) {
      out.values[j] = 1;
    } else if (z[j] < cfg.theta_neg) {
      out.values[j] = -1;
    } else {
      out.values[j] = 0;
    }
  }
  return out;
}

FneVector fne_embed(const ActivationSet& acts, const FneStats& stats, const FneConfig& cfg) {
  const auto raw = spatial_pool(acts);
  const auto z = standardize(raw, stats);
  return discretize(z, cfg, acts.image_id);
}

}  // namespace fnmme::fne
