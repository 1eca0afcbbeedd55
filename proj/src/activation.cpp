#include "fnmme/activation.hpp"

#include "fnmme/errors.hpp"

namespace fnmme {

std::size_t LayerActivation::feature_count() const {
  if (shape.empty()) return 0;
  return shape.back();
}

std::size_t LayerActivation::element_count() const {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void validate(const ActivationSet& set) {
  if (set.layers.empty()) {
    throw ValidationError("activation set '" + set.image_id + "' has no layers");
  }
  for (const auto& layer : set.layers) {
    const std::size_t rank = layer.kind == LayerKind::conv ? 3 : 1;
    if (layer.shape.size() != rank) {
      throw ValidationError("layer '" + layer.name + "' has shape of rank " +
                            std::to_string(layer.shape.size()) + ", expected " +
                            std::to_string(rank));
    }
    for (auto d : layer.shape) {
      if (d == 0) throw ValidationError("layer '" + layer.name + "' has a zero dimension");
    }
    if (layer.values.size() != layer.element_count()) {
      throw ValidationError("layer '" + layer.name + "' holds " +
                            std::to_string(layer.values.size()) + " values, shape implies " +
                            std::to_string(layer.element_count()));
    }
  }
}

void check_same_layout(const ActivationSet& reference, const ActivationSet& other) {
  if (reference.layers.size() != other.layers.size()) {
    throw ValidationError("image '" + other.image_id + "' has " +
                          std::to_string(other.layers.size()) + " layers, expected " +
                          std::to_string(reference.layers.size()));
  }
  for (std::size_t i = 0; i < reference.layers.size(); ++i) {
    const auto& a = reference.layers[i];
    const auto& b = other.layers[i];
    if (a.name != b.name || a.kind != b.kind || a.feature_count() != b.feature_count()) {
      throw ValidationError("image '" + other.image_id + "' layer " + std::to_string(i) + " ('" +
                            b.name + "') does not match reference layer '" + a.name + "'");
    }
  }
}

}  // namespace fnmme
