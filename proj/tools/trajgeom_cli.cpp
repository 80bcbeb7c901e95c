// trajgeom: generate | validate | analyze | report
//
// Exit codes: 0 success, 1 usage, 2 validation failure, 3 infeasible
// generation constraints.

#include <iostream>

#include <CLI11.hpp>

#include "trajgeom/pipeline.hpp"

namespace {

namespace pl = trajgeom::pipeline;

constexpr int kUsage = 1;
constexpr int kValidation = 2;
constexpr int kInfeasible = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory-geometry toolkit for in-context-learning suites"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out = "out";
  app.add_option("--seed", seed, "Root seed (overrides the config)");
  app.add_option("--config", config_path, "Run config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", out, "Output directory")->capture_default_str();

  pl::GenerateRequest req;
  std::optional<std::string> condition;
  auto* gen = app.add_subcommand("generate", "Write a prompt suite");
  gen->add_option("kind", req.kind, "grid | latent | fewshot | riddle | text")->required();
  gen->add_option("--condition", condition, "short | long | long-repeat | zero-shot");
  gen->add_option("--n", req.n, "Instances per condition (prompts per k for few-shot)");
  gen->add_option("--length", req.length, "Context length in tokens");
  gen->add_option("--k", req.k, "Shot count");
  gen->add_option("--pool", req.pool, "Few-shot TSV pool or riddle pool")->check(CLI::ExistingFile);
  gen->add_option("--source", req.source, "Text passages, one per line")->check(CLI::ExistingFile);

  std::string validate_path;
  auto* val = app.add_subcommand("validate", "Validate a bundle or suite directory");
  val->add_option("path", validate_path)->required()->check(CLI::ExistingDirectory);

  std::string bundle_path;
  std::optional<std::string> run_id;
  std::optional<std::size_t> threads;
  auto* ana = app.add_subcommand("analyze", "Geometry, behaviour and statistics for a bundle");
  ana->add_option("bundle", bundle_path)->required()->check(CLI::ExistingDirectory);
  ana->add_option("--run-id", run_id, "Prefix of the output files");
  ana->add_option("--threads", threads, "Worker threads (0 = all cores)");

  std::string report_in;
  std::string format = "csv";
  auto* rep = app.add_subcommand("report", "Render analysis output as tables or plots");
  rep->add_option("input", report_in, "Directory holding <run-id>.*.json")
      ->required()
      ->check(CLI::ExistingDirectory);
  rep->add_option("--run-id", run_id, "Run id of the analysis files");
  rep->add_option("--format", format, "csv | json | svg")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    pl::RunConfig config = config_path.empty() ? pl::RunConfig{} : pl::load_config(config_path);
    if (seed) {
      config.seed = *seed;
    }
    if (run_id) {
      config.run_id = *run_id;
    }
    if (threads) {
      config.threads = *threads;
    }
    if (*gen) {
      if (condition) {
        req.condition = trajgeom::store::parse_condition(*condition);
      }
      const auto s = pl::cmd_generate(req, config, out);
      std::cout << "wrote " << s.entries.size() << " " << s.kind << " entries to " << out << '\n';
    } else if (*val) {
      const auto r = pl::cmd_validate(validate_path);
      std::cout << r.kind << " ok: " << r.n_items << " entries\n";
    } else if (*ana) {
      const auto r = pl::cmd_analyze(bundle_path, config, out);
      std::cout << "analyzed " << r.geometry.at("n_sequences").get<std::size_t>()
                << " sequences (" << r.geometry.at("exclusions").size() << " excluded), "
                << r.stats.at("tests").size() << " tests -> " << out << '\n';
    } else if (*rep) {
      for (const auto& p : pl::cmd_report(report_in, config.run_id, format, out)) {
        std::cout << p.string() << '\n';
      }
    }
  } catch (const pl::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const pl::ValidationError& e) {
    std::cerr << "validation failed: " << e.what() << '\n';
    for (const auto& d : e.details()) {
      std::cerr << "  " << d << '\n';
    }
    return kValidation;
  } catch (const trajgeom::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kInfeasible;
  } catch (const trajgeom::ParseError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kValidation;
  } catch (const trajgeom::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  }
  return 0;
}
