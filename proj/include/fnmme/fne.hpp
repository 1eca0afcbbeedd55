#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fnmme/activation.hpp"

/// Full-Network Embedding: spatial pooling of every layer, train-set
/// standardization and ternary discretization.
namespace fnmme::fne {

struct RawFeatureVector {
  std::string image_id;
  std::vector<double> values;
};

/// Per-feature population statistics over the training images.
struct FneStats {
  std::vector<float> mean;
  std::vector<float> std;
  std::uint32_t fitted_on = 0;

  std::size_t dimension() const { return mean.size(); }
  bool operator==(const FneStats&) const = default;
};

struct FneConfig {
  float theta_pos = 0.15f;
  float theta_neg = -0.25f;

  bool operator==(const FneConfig&) const = default;
};

/// Throws ValidationError unless theta_neg < theta_pos and both are finite.
void validate(const FneConfig& cfg);

struct FneVector {
  std::string image_id;
  std::vector<std::int8_t> values;
};

/// Standard deviations at or below this are treated as constant features.
inline constexpr double kStdEpsilon = 1e-8;

RawFeatureVector spatial_pool(const ActivationSet& acts);

/// Streaming mean/variance accumulator (Welford) for fit_stats.
class StatsAccumulator {
 public:
  void add(std::span<const double> values);
  std::size_t count() const { return count_; }
  std::size_t dimension() const { return mean_.size(); }
  FneStats finish() const;

 private:
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

FneStats fit_stats(std::span<const RawFeatureVector> train);

std::vector<double> standardize(const RawFeatureVector& raw, const FneStats& stats);

/// +1 above theta_pos, -1 below theta_neg, 0 otherwise (boundaries included).
FneVector discretize(std::span<const double> z, const FneConfig& cfg,
                     std::string image_id = {});

FneVector fne_embed(const ActivationSet& acts, const FneStats& stats, const FneConfig& cfg);

}  // namespace fnmme::fne
