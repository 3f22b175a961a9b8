#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "klfuse/expfam.hpp"

namespace klfuse {

// One dataset's mean-field posterior: an ordered list of factors, plus the
// optional mixture weights the local inference attached to them.
struct PosteriorBundle {
  std::string id;
  std::vector<ExpFamComponent> components;
  std::vector<double> weights;  // empty when the producer had none

  int size() const { return static_cast<int>(components.size()); }
};

// The fused model: component list plus, per component, the number of
// datasets currently assigned to it.
struct GlobalModel {
  std::vector<ExpFamComponent> components;
  std::vector<int> usage;

  int size() const { return static_cast<int>(components.size()); }
};

// All components across all bundles must share one family and dimension.
inline void require_uniform(const std::vector<PosteriorBundle>& bundles) {
  if (bundles.empty()) throw std::invalid_argument("no bundles given");
  const ExpFamComponent* first = nullptr;
  for (const auto& b : bundles) {
    if (b.components.empty())
      throw std::invalid_argument("bundle '" + b.id + "' has no components");
    for (const auto& c : b.components) {
      if (!first)
        first = &c;
      else
        require_compatible(*first, c);
    }
  }
}

}  // namespace klfuse
