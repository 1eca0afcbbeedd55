#pragma once

#include <cstddef>
#include <cstdint>

#include "fnmme/mmspace.hpp"

namespace fnmme {

/// Training hyperparameters. Defaults follow the Flickr setup; MSCOCO used
/// learning_rate 0.00025 and vocab_size 2000.
struct TrainConfig {
  double learning_rate = 0.0002;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 25;
  double clip_threshold = 2.0;
  double alpha = 0.2;
  std::uint64_t seed = 1234;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t vocab_size = 1000;
  std::size_t word_dim = 300;
  std::size_t hidden_dim = 2048;
  mmspace::LossReduction reduction = mmspace::LossReduction::sum;
  /// Caption-encoding workers; 1 gives the sequential reduction order.
  std::size_t threads = 1;

  bool operator==(const TrainConfig&) const = default;
};

/// Throws ValidationError on non-positive or otherwise unusable values.
void validate(const TrainConfig& cfg);

}  // namespace fnmme
