#include "fnmme/config.hpp"

#include <cmath>
#include <string>

#include "fnmme/errors.hpp"

namespace fnmme {

void validate(const TrainConfig& cfg) {
  auto positive = [](double v, const char* name) {
    if (!std::isfinite(v) || !(v > 0)) {
      throw ValidationError(std::string(name) + " must be positive, got " + std::to_string(v));
    }
  };
  auto at_least_one = [](std::size_t v, const char* name) {
    if (v < 1) throw ValidationError(std::string(name) + " must be at least 1");
  };
  if (!std::isfinite(cfg.learning_rate) || cfg.learning_rate < 0) {
    throw ValidationError("learning_rate must be finite and non-negative");
  }
  if (!std::isfinite(cfg.alpha) || cfg.alpha < 0) {
    throw ValidationError("alpha must be finite and non-negative");
  }
  positive(cfg.clip_threshold, "clip_threshold");
  positive(cfg.adam_epsilon, "adam_epsilon");
  if (!(cfg.adam_beta1 >= 0 && cfg.adam_beta1 < 1) || !(cfg.adam_beta2 >= 0 && cfg.adam_beta2 < 1)) {
    throw ValidationError("ADAM betas must lie in [0, 1)");
  }
  at_least_one(cfg.batch_size, "batch_size");
  at_least_one(cfg.max_epochs, "max_epochs");
  at_least_one(cfg.vocab_size, "vocab_size");
  at_least_one(cfg.word_dim, "word_dim");
  at_least_one(cfg.hidden_dim, "hidden_dim");
  at_least_one(cfg.threads, "threads");
}

}  // namespace fnmme
