#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fnmme {

enum class LayerKind : std::uint8_t { conv = 0, fc = 1 };

/// Raw activations of one CNN layer for one image.
///
/// Conv layers have shape {H, W, C} and fc layers {N}. Values are stored
/// row-major, so for conv layers the channel index varies fastest.
struct LayerActivation {
  std::string name;
  LayerKind kind = LayerKind::fc;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;

  /// Number of pooled features this layer contributes (C or N).
  std::size_t feature_count() const;
  std::size_t element_count() const;

  bool operator==(const LayerActivation&) const = default;
};

struct ActivationSet {
  std::string image_id;
  std::vector<LayerActivation> layers;

  bool operator==(const ActivationSet&) const = default;
};

/// Throws ValidationError if shapes are inconsistent with kinds or value counts.
void validate(const ActivationSet& set);

/// Throws ValidationError unless both sets have the same layer names, kinds
/// and feature counts in the same order.
void check_same_layout(const ActivationSet& reference, const ActivationSet& other);

}  // namespace fnmme
