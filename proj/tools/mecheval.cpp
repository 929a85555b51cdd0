// mecheval: pair generation, patching profiles, rule verdicts, standard
// accuracy, reports and oracle cross-checks.
//
// Exit codes: 0 ok, 1 usage, 2 config, 3 model load, 4 pipeline, 5 input data.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "mecheval/mecheval.hpp"

namespace fs = std::filesystem;
using namespace mecheval;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kModelLoad: return 3;
    case ErrorKind::kPipeline: return 4;
    case ErrorKind::kInput: return 5;
  }
  return 4;
}

struct Overrides {
  std::optional<double> tau_gap, alpha, top_frac;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> patch_span, output_dir;
  std::optional<std::size_t> workers;

  void attach(CLI::App* app) {
    app->add_option("--tau-gap", tau_gap, "R1 gap threshold");
    app->add_option("--alpha", alpha, "R2 recovery-fraction threshold");
    app->add_option("--top-frac", top_frac, "top-layer fraction for R3");
    app->add_option("--seed", seed, "pair-generation seed");
    app->add_option("--patch-span", patch_span, "patch every span position (span) or the first (first)");
    app->add_option("--output-dir", output_dir, "output directory");
    app->add_option("--workers", workers, "worker threads (0: all cores)");
  }

  void apply(RunConfig& c) const {
    if (tau_gap) c.thresholds.tau_gap = *tau_gap;
    if (alpha) c.thresholds.alpha = *alpha;
    if (top_frac) c.thresholds.top_layer_fraction = *top_frac;
    if (seed) c.pairs.seed = *seed;
    if (patch_span) c.patch_span = parse_patch_span_mode(*patch_span);
    if (output_dir) c.output_dir = *output_dir;
    if (workers) c.workers = *workers;
  }
};

RunConfig load_config(const std::string& path, const Overrides& o) {
  RunConfig c = load_run_config(path);
  o.apply(c);
  c.validate();
  return c;
}

fs::path profiles_path(const RunConfig& c, const std::string& flag) {
  return flag.empty() ? fs::path(c.output_dir) / "profiles.jsonl" : fs::path(flag);
}

void print_aggregate(const std::string& name, const AggregateVerdict& a) {
  std::cout << name << ": R1 " << a.n_r1 << "/" << a.n_examples << ", R2 " << a.n_r2 << ", R3 " << a.n_r3
            << " (pass rate " << format_percent(a.pass_rate_overall, 1) << "), modal layer "
            << (a.modal_layer ? std::to_string(*a.modal_layer) : "none") << "\n";
}

int oracle_check(const std::optional<RunConfig>& config, std::size_t random_models, std::uint64_t seed) {
  oracle::DifferentialReport total;
  const RuleThresholds t = config ? config->thresholds : RuleThresholds{};
  if (config) {
    for (const auto& entry : config->models) {
      const fs::path dir(entry.path);
      ModelConfig mc;
      try {
        mc = load_model_config((dir / "config.json").string());
      } catch (const Error& e) {
        fail(ErrorKind::kModelLoad, e.what());
      }
      const auto archive = TensorArchive::load((dir / "model.safetensors").string());
      const auto tokenizer = load_tokenizer(dir);
      const auto pairs = prepare_pairs(*config, *tokenizer);
      const auto r = oracle::differential_check(archive, mc, pairs, t, config->patch_span, config->worker_count());
      std::cout << entry.name << ": " << r.n_examples << " examples, " << r.disagreements.size()
                << " disagreements, " << r.n_ambiguous << " of " << r.n_decisions << " decisions skipped as near-threshold, max abs error " << r.max_abs_error << "\n";
      total += r;
    }
  }
  if (random_models > 0) {
    const auto r = oracle::random_differential_check(random_models, 4, seed, t);
    std::cout << "random models: " << r.n_models << " models, " << r.n_examples << " examples, "
              << r.disagreements.size() << " disagreements, " << r.n_ambiguous << " of " << r.n_decisions << " decisions skipped as near-threshold, max abs error " << r.max_abs_error << "\n";
    total += r;
  }
  for (const auto& d : total.disagreements) std::cout << "  disagreement: " << d.id << " " << d.field << "\n";
  if (!total.clean()) fail(ErrorKind::kPipeline, std::to_string(total.disagreements.size()) + " oracle disagreements");
  std::cout << "oracle-check: no disagreements\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symbolic mechanistic evaluation of schema grounding"};
  app.require_subcommand(1);
  std::string config_path;
  Overrides overrides;

  auto with_config = [&](CLI::App* sub, bool required = true) {
    auto* opt = sub->add_option("--config", config_path, "run configuration (JSON)");
    if (required) opt->required()->check(CLI::ExistingFile);
    overrides.attach(sub);
  };

  auto* gen = app.add_subcommand("generate-pairs", "write pairs-<model>.jsonl for every configured model");
  with_config(gen);

  std::string pairs_file;
  auto* prof = app.add_subcommand("profile", "layer-sweep patching profiles -> profiles.jsonl");
  with_config(prof);
  prof->add_option("--pairs", pairs_file, "use this pairs file instead of the configured source")->check(CLI::ExistingFile);

  std::string profiles_file;
  auto* ver = app.add_subcommand("verify", "apply R1-R3 to stored profiles -> verdicts.jsonl");
  with_config(ver);
  ver->add_option("--profiles", profiles_file, "profiles file (default <output-dir>/profiles.jsonl)");

  auto* base = app.add_subcommand("baseline", "exact-match and field accuracy matrix -> baseline.{json,csv,md}");
  with_config(base);

  auto* rep = app.add_subcommand("report", "report.{json,md,csv} from stored profiles");
  with_config(rep);
  rep->add_option("--profiles", profiles_file, "profiles file (default <output-dir>/profiles.jsonl)");

  auto* all = app.add_subcommand("run", "every stage in order");
  with_config(all);

  std::size_t random_models = 100;
  std::uint64_t oracle_seed = 1;
  auto* orc = app.add_subcommand("oracle-check", "compare the engine against the brute-force reference");
  orc->add_option("--config", config_path, "also check the configured models on their pairs")
      ->check(CLI::ExistingFile);
  orc->add_option("--random-models", random_models, "random tiny models to check");
  orc->add_option("--random-seed", oracle_seed, "seed for the random models");
  overrides.attach(orc);

  std::string pools_path, out_dir, corpus_path, kind = "planted";
  oracle::PlantedSpec spec;
  auto* plant = app.add_subcommand("plant", "write a hand-constructed planted or bypass model directory");
  plant->add_option("--pools", pools_path, "word pools")->required()->check(CLI::ExistingFile);
  plant->add_option("--kind", kind, "planted or bypass")->check(CLI::IsMember({"planted", "bypass"}));
  plant->add_option("--corpus", corpus_path, "training examples whose instruction map the bypass model memorises")
      ->check(CLI::ExistingFile);
  plant->add_option("--layers", spec.n_layers, "number of blocks");
  plant->add_option("--d-model", spec.d_model, "residual width");
  plant->add_option("--planted-layer", spec.planted_layer, "hook layer the mover heads read");
  plant->add_option("--out", out_dir, "model directory")->required();

  std::size_t corpus_size = 500;
  std::uint64_t corpus_seed = 1;
  auto* corpus = app.add_subcommand("generate-corpus", "TinySQL-style fixture examples -> train.jsonl, test.jsonl");
  corpus->add_option("--pools", pools_path, "word pools")->required()->check(CLI::ExistingFile);
  corpus->add_option("--n", corpus_size, "number of examples");
  corpus->add_option("--seed", corpus_seed, "split and verb seed");
  corpus->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const RunConfig c = load_config(config_path, overrides);
      fs::create_directories(c.output_dir);
      for (const auto& entry : c.models) {
        const auto tokenizer = load_tokenizer(entry.path);
        const auto pairs = prepare_pairs(c, *tokenizer);
        const auto path = fs::path(c.output_dir) / ("pairs-" + entry.name + ".jsonl");
        write_jsonl(pairs, path.string());
        std::cout << "wrote " << pairs.size() << " pairs to " << path.string() << "\n";
      }
    } else if (*prof) {
      RunConfig c = load_config(config_path, overrides);
      if (!pairs_file.empty()) {
        c.pairs.source = "file";
        c.pairs.path = pairs_file;
      }
      const auto runs = run_profiles(c);
      for (const auto& m : runs) std::cout << m.name << ": " << m.profiles.size() << " profiles\n";
    } else if (*ver) {
      const RunConfig c = load_config(config_path, overrides);
      const auto runs = load_profiles(c, profiles_path(c, profiles_file));
      run_verify(runs, c.thresholds, c.output_dir);
      for (const auto& m : runs) print_aggregate(m.name, aggregate(verify(m.profiles, c.thresholds), m.profiles));
    } else if (*base) {
      const RunConfig c = load_config(config_path, overrides);
      std::cout << accuracy_markdown(run_baseline(c));
    } else if (*rep) {
      const RunConfig c = load_config(config_path, overrides);
      const auto runs = load_profiles(c, profiles_path(c, profiles_file));
      std::cout << category_table_markdown(run_report(c, runs));
    } else if (*all) {
      const RunConfig c = load_config(config_path, overrides);
      const EvalReport r = run(c);
      for (const auto& m : r.models) print_aggregate(m.name, m.aggregate);
      std::cout << category_table_markdown(r);
    } else if (*orc) {
      std::optional<RunConfig> c;
      if (!config_path.empty()) c = load_config(config_path, overrides);
      return oracle_check(c, random_models, oracle_seed);
    } else if (*plant) {
      const WordPools pools = load_pools(pools_path);
      if (kind == "planted") {
        oracle::build_planted_model(pools, spec).save(out_dir);
      } else {
        require(!corpus_path.empty(), ErrorKind::kConfig, "--corpus is required for a bypass model");
        oracle::build_bypass_model(pools, load_examples(corpus_path), spec).save(out_dir);
      }
      std::cout << "wrote " << kind << " model to " << out_dir << "\n";
    } else if (*corpus) {
      const FixtureCorpus fc = build_fixture_corpus(load_pools(pools_path), corpus_size, corpus_seed);
      fs::create_directories(out_dir);
      save_examples(fc.train, (fs::path(out_dir) / "train.jsonl").string());
      save_examples(fc.test, (fs::path(out_dir) / "test.jsonl").string());
      std::cout << "wrote " << fc.train.size() << " train and " << fc.test.size() << " test examples\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
