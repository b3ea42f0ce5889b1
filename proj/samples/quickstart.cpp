// Trains a single tree, a forest and a boosted model on the two-moons set
// and prints test accuracy and model size for each.

#include <iostream>

#include "slm/ensemble.hpp"
#include "slm/generators.hpp"
#include "slm/serialize.hpp"
#include "slm/split.hpp"

namespace {

double test_accuracy(const slm::EnsembleModel& model, const slm::Dataset& test) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i)
    hits += slm::predict_model(model, test.features.row(i)).label == test.labels[i];
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

}  // namespace

int main() {
  const auto data = slm::gen_moons(2, 500, 0.3, 1);
  const auto [train, test] = slm::train_test_split(data, {0.6, 1, true});

  slm::TreeParams tree;
  tree.max_depth = 5;
  tree.min_samples = 20;

  const auto single = slm::fit_tree_model(train, tree, 1);

  slm::ForestParams forest;
  forest.tree = tree;
  forest.tree.projection.a_int = 25;  // large enough that candidates are sampled, not enumerated
  forest.seed = 1;
  const auto fitted_forest = slm::fit_forest(train, forest, &test);

  slm::BoostParams boost;
  boost.tree = tree;
  boost.tree.max_depth = 3;
  boost.seed = 1;
  const auto fitted_boost = slm::fit_boost(train, boost);

  for (const auto* m : {&single, &fitted_forest.model, &fitted_boost.model})
    std::cout << slm::to_string(m->kind) << ": accuracy " << test_accuracy(*m, test) << ", "
              << slm::param_count(*m) << " parameters\n";

  // Models round-trip through the text format.
  const auto reloaded = slm::load_model_text(slm::save_model(single));
  std::cout << "reloaded tree identical: " << std::boolalpha << (reloaded == single) << '\n';
}
