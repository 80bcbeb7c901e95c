// Writes a synthetic bundle for a suite (or the planted two-condition
// fixture) so the analysis pipeline can run without a language model.

#include <iostream>

#include <CLI11.hpp>

#include "trajgeom/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic trajectory bundles"};
  std::string suite_dir;
  std::string out;
  bool planted = false;
  trajgeom::synth::SimulateOptions sim;
  trajgeom::synth::PlantedOptions pl;
  app.add_option("--suite", suite_dir, "Suite directory")->check(CLI::ExistingDirectory);
  app.add_flag("--planted", planted, "Write the planted two-condition fixture instead");
  app.add_option("--out", out, "Bundle directory")->required();
  app.add_option("--seed", sim.seed)->capture_default_str();
  app.add_option("--layers", sim.n_layers)->capture_default_str();
  app.add_option("--dim", sim.hidden_dim)->capture_default_str();
  app.add_option("--accuracy", sim.answer_accuracy, "Correct-answer rate for Q/A suites")
      ->capture_default_str();
  app.add_option("--per-condition", pl.per_condition, "Planted sequences per condition")
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    if (planted == !suite_dir.empty()) {
      std::cerr << "give exactly one of --suite or --planted\n";
      return 1;
    }
    if (planted) {
      pl.seed = sim.seed;
      pl.n_layers = sim.n_layers;
      pl.hidden_dim = sim.hidden_dim;
      const auto b = trajgeom::synth::planted_bundle(pl);
      std::vector<trajgeom::store::SequenceTensors> t;
      for (std::size_t i = 0; i < b.size(); ++i) {
        t.push_back(b.tensors(i));
      }
      trajgeom::store::write_bundle(out, b.manifest(), t);
      std::cout << "wrote " << b.size() << " planted sequences to " << out << '\n';
    } else {
      const auto s = trajgeom::suite::read_suite(suite_dir);
      const auto b = trajgeom::synth::simulate_bundle(s, sim);
      std::vector<trajgeom::store::SequenceTensors> t;
      for (std::size_t i = 0; i < b.size(); ++i) {
        t.push_back(b.tensors(i));
      }
      trajgeom::store::write_bundle(out, b.manifest(), t);
      std::cout << "wrote " << b.size() << " sequences to " << out << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
