// Prints one PASS/FAIL/SKIP line per acceptance property; exits 1 on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "mecheval/mecheval.hpp"

using namespace mecheval;

namespace {

struct Outcome {
  enum { kPass, kFail, kSkip } status = kPass;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::kPass, std::move(d)}; }
Outcome fail_with(std::string d) { return {Outcome::kFail, std::move(d)}; }
Outcome judge(bool ok, std::string d) { return ok ? pass(std::move(d)) : fail_with(std::move(d)); }

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

WordPools pools() { return load_pools(std::string(MECHEVAL_DATA) + "/pools_compact.json"); }

std::vector<PromptPair> suite(const WordPools& p) { return generate_suite(p, 10, 2024, fixture_vocabulary(p)); }

FixtureCorpus corpus(const WordPools& p) { return build_fixture_corpus(p, 60, 3); }

Outcome p1() {
  const auto start = std::chrono::steady_clock::now();
  const auto p = pools();
  const auto pairs = suite(p);
  const auto pm = oracle::build_planted_model(p);
  const auto model = pm.model();
  const auto profiles = profile_pairs(model, pairs, {PatchSpanMode::kFullSpan, 0.9, default_workers()});
  const auto a = aggregate(verify(profiles, {}), profiles);
  double worst = 1.0;
  for (const auto& cell : threshold_sweep(profiles, ThresholdGrid{})) worst = std::min(worst, cell.pass_rate);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return judge(pairs.size() == 50 && a.pass_rate_overall == 1.0 && worst == 1.0 && secs < 60.0,
               std::to_string(pairs.size()) + " pairs, default R3 " + fmt(a.pass_rate_overall) + ", grid min " +
                   fmt(worst) + ", " + fmt(secs) + " s");
}

Outcome p2() {
  const auto p = pools();
  const auto c = corpus(p);
  const auto bm = oracle::build_bypass_model(p, c.train);
  const auto model = bm.model();
  const auto profiles = profile_pairs(model, suite(p), {PatchSpanMode::kFullSpan, 0.9, default_workers()});
  double worst_r1 = 0.0;
  for (double tau : {0.25, 0.3, 0.4, 0.5, 1.0}) {
    const auto a = aggregate(verify(profiles, {tau, 0.9, 0.9}), profiles);
    worst_r1 = std::max(worst_r1, static_cast<double>(a.n_r1) / static_cast<double>(a.n_examples));
  }
  const auto acc = evaluate_accuracy(model, bm.vocab, c.train, false, false, default_workers());
  return judge(worst_r1 <= 0.05 && acc.exact_match == 1.0,
               "max R1 rate " + fmt(worst_r1) + ", exact match " + fmt(acc.exact_match) + " on " +
                   std::to_string(acc.n_examples) + " examples");
}

Outcome p3() {
  double worst = 0.0;
  std::size_t positions = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto rm = oracle::random_tiny_model(seed);
    const Model m = Model::load(rm.archive, rm.config);
    for (const auto& pair : oracle::random_pairs(rm.config, 2, seed)) {
      const auto got = forward(m, pair.clean, false).logits;
      const auto want = oracle::reference_forward(rm.archive, rm.config, pair.clean).logits;
      for (std::size_t pos = 0; pos < pair.clean.size(); ++pos, ++positions) {
        double err = 0.0, scale = 0.0;
        for (std::size_t t = 0; t < rm.config.vocab_size; ++t) {
          err = std::max(err, std::fabs(got.row(pos)[t] - want[pos][t]));
          scale = std::max(scale, std::fabs(want[pos][t]));
        }
        worst = std::max(worst, scale > 0.0 ? err / scale : err);
      }
    }
  }
  return judge(worst <= 1e-4, "100 models, " + std::to_string(positions) + " positions, max relative error " + fmt(worst));
}

Outcome p4() {
  const auto p = pools();
  const auto pairs = suite(p);
  const auto c = corpus(p);
  const auto pm = oracle::build_planted_model(p);
  const auto bm = oracle::build_bypass_model(p, c.train);
  const std::size_t w = default_workers();
  oracle::DifferentialReport total;
  total += oracle::differential_check(pm.archive, pm.config, pairs, {}, PatchSpanMode::kFullSpan, w);
  total += oracle::differential_check(bm.archive, bm.config, pairs, {}, PatchSpanMode::kFullSpan, w);
  total += oracle::random_differential_check(100, 4, 7000, {0.1, 0.5, 0.8}, w);
  std::string detail = std::to_string(total.n_models) + " models, " + std::to_string(total.n_examples) +
                       " examples, " + std::to_string(total.disagreements.size()) + " disagreements, " +
                       std::to_string(total.n_decisions - total.n_ambiguous) + " of " + std::to_string(total.n_decisions) +
                       " discrete decisions compared (rest within float32 rounding of a threshold or tie)";
  if (!total.clean()) detail += " (first: " + total.disagreements[0].id + " " + total.disagreements[0].field + ")";
  return judge(total.clean() && 2 * total.n_ambiguous < total.n_decisions, detail);
}

Outcome p5() {
  bool ok = true;
  auto a = build_profile(2.0, 0.0, {0.5, 2.4, 1.9});
  ok = ok && a.best_recovery == 2.4 && a.rec_frac == 1.0 && a.best_layer == 1 &&
       a.top_layers == std::vector<std::size_t>{1, 2};
  auto b = build_profile(0.0, 1.0, {0.9, -0.95});
  ok = ok && b.best_recovery == 0.95 && std::fabs(b.rec_frac - 0.95) < 1e-15 && b.best_layer == 1;
  auto z = build_profile(1.0, 1.0, {0.4, 0.2});
  ok = ok && z.rec_frac == 0.0 && z.top_layers.empty();
  const bool hand = ok;

  Rng rng({5});
  std::vector<PatchProfile> profiles;
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> shifts(1 + rng.index(5));
    for (double& s : shifts) s = 3.0 * rng.normal();
    auto prof = build_profile(2.0 * rng.normal(), 2.0 * rng.normal(), shifts);
    ok = ok && prof.rec_frac >= 0.0 && prof.rec_frac <= 1.0;
    profiles.push_back(std::move(prof));
  }
  bool ordered = true;
  for (const auto& t : ThresholdGrid{}.cells()) {
    const auto agg = aggregate(verify(profiles, t), profiles);
    ordered = ordered && agg.n_r3 <= agg.n_r2 && agg.n_r2 <= agg.n_r1;
  }
  return judge(ok && ordered, std::string("hand cases ") + (hand ? "ok" : "wrong") +
                                  ", 10000 random profiles in [0,1], hierarchy " + (ordered ? "holds" : "violated"));
}

Outcome p6() {
  double worst = 0.0;
  bool equal = true;
  auto check = [&](const Model& m, const PromptPair& pair) {
    const auto corr = forward(m, pair.corrupted, true);
    for (double s : layer_sweep(m, pair, *corr.cache, logit_diff(corr.logits, pair)))
      worst = std::max(worst, std::fabs(s));
    equal = equal && forward_patched(m, pair.corrupted, {}) == corr.logits;
  };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto rm = oracle::random_tiny_model(seed);
    const Model m = Model::load(rm.archive, rm.config);
    for (const auto& pair : oracle::random_pairs(rm.config, 3, seed)) check(m, pair);
  }
  const auto p = pools();
  const auto planted = oracle::build_planted_model(p).model();
  for (const auto& pair : generate_suite(p, 2, 1, fixture_vocabulary(p))) check(planted, pair);
  return judge(worst < 1e-6 && equal, "max self-patch shift " + fmt(worst) + ", empty patch " +
                                          (equal ? "identical" : "differs"));
}

Outcome p7() {
  const std::vector<double> constant(25, 0.37);
  const auto cc = bootstrap_ci(constant, 0.95, 1000, 1);
  const bool exact = cc.mean == 0.37 && cc.lo == 0.37 && cc.hi == 0.37;
  std::size_t covered = 0;
  const std::size_t trials = 1000;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng({123, t});
    std::vector<double> v(80);
    for (double& x : v) x = rng.normal();
    const auto ci = bootstrap_ci(v, 0.95, 1000, 1000 + t, default_workers());
    covered += ci.lo <= 0.0 && 0.0 <= ci.hi;
  }
  const double rate = static_cast<double>(covered) / trials;
  Rng rng({9});
  std::vector<double> v(40);
  for (double& x : v) x = rng.normal();
  const auto a = nlohmann::json(bootstrap_ci(v, 0.95, 5000, 77, 1)).dump();
  const auto b = nlohmann::json(bootstrap_ci(v, 0.95, 5000, 77, default_workers())).dump();
  return judge(exact && std::fabs(rate - 0.95) <= 0.03 && a == b,
               std::string("constant ") + (exact ? "exact" : "inexact") + ", coverage " + fmt(rate) + ", seeded " +
                   (a == b ? "identical" : "differs"));
}

Outcome p8() {
  std::ifstream in(std::string(MECHEVAL_TEST_DATA) + "/baseline_fixture.json");
  const auto fixture = nlohmann::json::parse(in);
  std::vector<std::string> preds;
  std::vector<SqlExample> gold;
  bool rows = true, partial = false;
  for (const auto& row : fixture["examples"]) {
    const auto g = row["gold"].get<std::string>(), pr = row["pred"].get<std::string>();
    const double field = field_accuracy(pr, g);
    rows = rows && exact_match(pr, g) == row["exact"].get<bool>() && field == row["field"].get<double>();
    partial = partial || (field == 0.5 && row["field"].get<double>() == 0.5);
    preds.push_back(pr);
    gold.push_back({"", "", g});
  }
  const auto r = score_predictions(preds, gold);
  const bool totals = std::fabs(r.exact_match - fixture["exact_match"].get<double>()) < 1e-12 &&
                      std::fabs(r.field_accuracy - fixture["field_accuracy"].get<double>()) < 1e-12;
  return judge(rows && partial && totals && gold.size() == 10,
               std::to_string(gold.size()) + " examples, exact " + fmt(r.exact_match) + ", field " +
                   fmt(r.field_accuracy));
}

Outcome p9() {
  const auto p = pools();
  const auto dir = std::filesystem::temp_directory_path() / "mecheval_acceptance_p9";
  std::filesystem::remove_all(dir);
  const auto c = corpus(p);
  oracle::build_planted_model(p).save(dir / "planted");
  oracle::build_bypass_model(p, c.train).save(dir / "bypass");
  RunConfig cfg;
  cfg.models = {{"planted", (dir / "planted").string(), true}, {"bypass", (dir / "bypass").string(), false}};
  cfg.pairs.pools = std::string(MECHEVAL_DATA) + "/pools_compact.json";
  cfg.pairs.per_category = 10;
  cfg.pairs.seed = 2024;
  cfg.bootstrap.resamples = 2000;
  auto contents = [](const std::filesystem::path& out) {
    std::string all;
    for (const char* f : {"profiles.jsonl", "verdicts.jsonl", "report.json", "report.md", "report.csv"})
      all += read_text(out / f);
    return all;
  };
  cfg.output_dir = (dir / "a").string();
  run(cfg);
  cfg.output_dir = (dir / "b").string();
  run(cfg);
  const bool identical = contents(dir / "a") == contents(dir / "b");
  const auto before = diagnostics::forward_passes();
  const auto runs = load_profiles(cfg, dir / "b" / "profiles.jsonl");
  for (const auto& t : ThresholdGrid{}.cells()) {
    cfg.thresholds = t;
    run_verify(runs, t, dir / "b");
    run_report(cfg, runs);
  }
  const auto passes = diagnostics::forward_passes() - before;
  std::filesystem::remove_all(dir);
  return judge(identical && passes == 0, std::string("outputs ") + (identical ? "identical" : "differ") +
                                             ", forward passes during re-verification " + std::to_string(passes));
}

Outcome p10() {
  const char* dir = std::getenv("MECHEVAL_CHECKPOINTS");
  if (dir == nullptr || !std::filesystem::is_directory(dir))
    return {Outcome::kSkip, "no checkpoints supplied (set MECHEVAL_CHECKPOINTS to a directory of converted models)"};
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    const LoadedModel m = load_model_dir(entry.path());
    const auto ids = m.tokenizer->encode("### Instruction: Show the name ### Context: ###Response: SELECT");
    const auto logits = forward(m.model, ids, false).logits;
    for (float x : logits.values)
      if (!std::isfinite(x)) return fail_with("non-finite logits from " + entry.path().string());
    ++n;
  }
  return judge(n > 0, std::to_string(n) + " checkpoints loaded and run");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> checks{
      {"P1", p1}, {"P2", p2}, {"P3", p3}, {"P4", p4}, {"P5", p5},
      {"P6", p6}, {"P7", p7}, {"P8", p8}, {"P9", p9}, {"P10", p10}};
  bool failed = false;
  for (const auto& [id, check] : checks) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = fail_with(std::string("error: ") + e.what());
    }
    const char* status = o.status == Outcome::kPass ? "PASS" : o.status == Outcome::kFail ? "FAIL" : "SKIP";
    failed = failed || o.status == Outcome::kFail;
    std::cout << id << " " << status << " " << o.detail << std::endl;
  }
  return failed ? 1 : 0;
}
