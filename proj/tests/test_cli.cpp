#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "meansum/cli.hpp"

using namespace meansum;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  std::vector<const char*> argv = {"meansum"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli::run_cli(int(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("meansum_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& sub) const { return (path / sub).string(); }
};

std::vector<std::string> synth_args(const TempDir& tmp, const std::string& out) {
  return {"synth",           "--out",
          tmp / out,         "--synth-entities",
          "12",              "--synth-reviews-per-entity",
          "16",              "--min-entity-reviews",
          "8",               "--vocab-size",
          "320",             "--seed",
          "21"};
}

}  // namespace

TEST_CASE("config defaults mirror the reference setup") {
  RunConfig cfg;
  REQUIRE(cfg.get_double("lr_lm") == 0.001);
  REQUIRE(cfg.get_double("lr_clf") == 0.0001);
  REQUIRE(cfg.get_double("lr_sum") == 0.0005);
  REQUIRE(cfg.get_double("tau") == 2.0);
  REQUIRE(cfg.get_size("k") == 8);
  REQUIRE(cfg.get_size("max_len") == 150);
  REQUIRE(cfg.get_double("adam_beta1") == 0.9);
  REQUIRE(cfg.get_double("adam_beta2") == 0.999);
  REQUIRE(cfg.get_size("lm_bptt") == 256);
  REQUIRE(cfg.get_double("clf_dropout") == 0.5);
  REQUIRE(cfg.get_size("clf_feature_maps") == 128);
  REQUIRE(cfg.get_size("vocab_size") == 512);
  REQUIRE(cfg.get_double("popularity_percentile") == 0.9);
  REQUIRE(cfg.get_size("min_entity_reviews") == 50);
}

TEST_CASE("config rejects unknown keys and bad values") {
  RunConfig cfg;
  REQUIRE_THROWS_AS(cfg.set("no_such_key", "1"), InputError);
  cfg.set("hidden_size", "banana");
  REQUIRE_THROWS_AS(cfg.get_size("hidden_size"), InputError);

  SECTION("file parsing with comments and overrides") {
    TempDir tmp("cfg");
    std::ofstream f(tmp / "c.cfg");
    f << "# comment\n" << "hidden_size = 48\n" << "tau=1.5 # trailing\n";
    f.close();
    RunConfig c;
    c.load_file(tmp / "c.cfg");
    REQUIRE(c.get_size("hidden_size") == 48);
    REQUIRE(c.get_double("tau") == 1.5);
    c.set("tau", "2.5");
    REQUIRE(c.get_double("tau") == 2.5);
  }
  SECTION("bad file line is an error") {
    TempDir tmp("cfgbad");
    std::ofstream f(tmp / "c.cfg");
    f << "not a key value line\n";
    f.close();
    RunConfig c;
    REQUIRE_THROWS_AS(c.load_file(tmp / "c.cfg"), InputError);
  }
  SECTION("resolved text is sorted and complete") {
    RunConfig c;
    std::string text = c.resolved_text();
    REQUIRE(text.find("lr_lm=0.001\n") != std::string::npos);
    REQUIRE(text.find("variant=full\n") != std::string::npos);
  }
}

TEST_CASE("synth command writes a deterministic corpus directory") {
  TempDir tmp("synth");
  REQUIRE(run(synth_args(tmp, "c1")) == 0);
  REQUIRE(run(synth_args(tmp, "c2")) == 0);
  for (const char* name :
       {"reviews.jsonl", "vocab.txt", "splits.json", "stats.json", "config.resolved"}) {
    REQUIRE(slurp(tmp.path / "c1" / name) == slurp(tmp.path / "c2" / name));
  }
  auto stats = nlohmann::json::parse(slurp(tmp.path / "c1" / "stats.json"));
  REQUIRE(stats["ingest"]["parsed"].get<int>() == 12 * 16);
  REQUIRE(stats["filter"]["retained_reviews"].get<int>() > 0);
  REQUIRE(stats["splits"]["train"].get<int>() +
              stats["splits"]["valid"].get<int>() +
              stats["splits"]["test"].get<int>() ==
          stats["filter"]["retained_entities"].get<int>());
}

TEST_CASE("ingest command") {
  TempDir tmp("ingest");
  {
    std::ofstream f(tmp / "raw.jsonl");
    for (int e = 0; e < 4; ++e) {
      for (int i = 0; i < 5; ++i) {
        f << "{\"business_id\":\"b" << e << "\",\"review_id\":\"b" << e << "r" << i
          << "\",\"stars\":" << (e + 1)
          << ",\"text\":\"food was fine and the crew was fine on day " << i << ".\"}\n";
      }
    }
    f << "{broken json\n";
  }
  std::vector<std::string> args = {"ingest", "--input", tmp / "raw.jsonl",
                                   "--kind", "yelp",    "--out",
                                   tmp / "c", "--min-entity-reviews", "2",
                                   "--vocab-size", "300", "--seed", "3"};
  SECTION("valid fixture ingests with counted skips and reruns identically") {
    REQUIRE(run(args) == 0);
    auto stats = nlohmann::json::parse(slurp(tmp.path / "c" / "stats.json"));
    REQUIRE(stats["ingest"]["parsed"].get<int>() == 20);
    REQUIRE(stats["ingest"]["skipped"].get<int>() == 1);
    std::string first = slurp(tmp.path / "c" / "reviews.jsonl");
    std::vector<std::string> again = args;
    again[6] = tmp / "c2";
    REQUIRE(run(again) == 0);
    REQUIRE(slurp(tmp.path / "c2" / "reviews.jsonl") == first);
  }
  SECTION("missing input exits 2") {
    std::vector<std::string> bad = args;
    bad[2] = tmp / "missing.jsonl";
    REQUIRE(run(bad) == 2);
  }
  SECTION("unknown config key exits 2") {
    std::vector<std::string> bad = args;
    bad.push_back("--bogus-key");
    bad.push_back("1");
    REQUIRE(run(bad) == 2);
  }
}

TEST_CASE("summarize and evaluate round trip through files") {
  TempDir tmp("pipe");
  REQUIRE(run(synth_args(tmp, "c")) == 0);
  auto common = [&](std::vector<std::string> v) {
    std::vector<std::string> out = std::move(v);
    std::vector<std::string> small = {"--hidden-size", "16",         "--embed-size", "12",
                                      "--k",           "3",          "--max-len",    "40",
                                      "--seed",        "21",         "--log-interval", "5",
                                      "--nll-eval-bundles", "2",     "--eval-bundles", "6"};
    out.insert(out.end(), small.begin(), small.end());
    return out;
  };
  REQUIRE(run(common({"train-lm", "--corpus", tmp / "c", "--out", tmp / "lm",
                      "--lm-steps", "10"})) == 0);
  REQUIRE(run(common({"train-clf", "--corpus", tmp / "c", "--out", tmp / "clf",
                      "--clf-steps", "10", "--clf-feature-maps", "6",
                      "--clf-batch", "4"})) == 0);
  REQUIRE(run(common({"train-sum", "--corpus", tmp / "c", "--lm",
                      (tmp.path / "lm" / "checkpoints" / "lm").string(), "--out",
                      tmp / "sum", "--sum-steps", "6"})) == 0);

  std::string lm_stem = (tmp.path / "lm" / "checkpoints" / "lm").string();
  std::string clf_stem = (tmp.path / "clf" / "checkpoints" / "clf").string();
  std::string sum_stem = (tmp.path / "sum" / "checkpoints" / "sum").string();

  REQUIRE(run(common({"summarize", "--corpus", tmp / "c", "--checkpoint", sum_stem,
                      "--clf", clf_stem, "--out", tmp / "s.jsonl"})) == 0);
  // one record per bundle
  std::istringstream lines(slurp(tmp.path / "s.jsonl"));
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    if (!line.empty()) ++count;
  }
  REQUIRE(count == 6);

  SECTION("summaries are deterministic across reruns") {
    std::string first = slurp(tmp.path / "s.jsonl");
    REQUIRE(run(common({"summarize", "--corpus", tmp / "c", "--checkpoint", sum_stem,
                        "--clf", clf_stem, "--out", tmp / "s2.jsonl"})) == 0);
    REQUIRE(slurp(tmp.path / "s2.jsonl") == first);
  }
  SECTION("evaluate produces aggregate-consistent reports") {
    REQUIRE(run(common({"evaluate", "--summaries", tmp / "s.jsonl", "--corpus",
                        tmp / "c", "--clf", clf_stem, "--lm", lm_stem, "--out",
                        tmp / "ev"})) == 0);
    auto report = nlohmann::json::parse(slurp(tmp.path / "ev" / "reports" / "report.json"));
    double acc = report["aggregate"]["sentiment_accuracy"].get<double>();
    double wo = report["aggregate"]["word_overlap"].get<double>();
    double sum_acc = 0.0, sum_wo = 0.0;
    for (const auto& b : report["bundles"]) {
      sum_acc += b["predicted_star"] == b["target_star"] ? 1.0 : 0.0;
      sum_wo += b["wo"].get<double>();
    }
    std::size_t n = report["bundles"].size();
    REQUIRE(acc == Catch::Approx(sum_acc / n).margin(1e-12));
    REQUIRE(wo == Catch::Approx(sum_wo / n).margin(1e-12));
    REQUIRE_FALSE(report["aggregate"].contains("rouge1"));
  }
  SECTION("references populate rouge columns") {
    // references: echo a review text per entity
    std::map<std::string, std::string> per_entity;
    IngestStats st;
    auto reviews = ingest_jsonl((tmp.path / "c" / "reviews.jsonl").string(),
                                DatasetKind::canonical, st);
    for (const Review& r : reviews) per_entity.emplace(r.entity_id, r.text);
    std::ofstream refs(tmp / "refs.jsonl");
    for (auto& [e, t] : per_entity) {
      nlohmann::ordered_json j;
      j["entity_id"] = e;
      j["summary_text"] = t;
      refs << j.dump() << "\n";
    }
    refs.close();
    REQUIRE(run(common({"evaluate", "--summaries", tmp / "s.jsonl", "--corpus",
                        tmp / "c", "--clf", clf_stem, "--references",
                        tmp / "refs.jsonl", "--out", tmp / "evr"})) == 0);
    auto report = nlohmann::json::parse(slurp(tmp.path / "evr" / "reports" / "report.json"));
    REQUIRE(report["aggregate"].contains("rouge1"));
    REQUIRE(report["aggregate"].contains("rougel"));
    std::string csv = slurp(tmp.path / "evr" / "reports" / "report.csv");
    REQUIRE(csv.find("rouge1") != std::string::npos);
  }
  SECTION("evaluate lists unmatched entities and exits 2") {
    std::ofstream bad(tmp / "bad.jsonl");
    bad << R"({"entity_id":"nope","review_ids":["missing"],"summary":"x"})" << "\n";
    bad.close();
    REQUIRE(run(common({"evaluate", "--summaries", tmp / "bad.jsonl", "--corpus",
                        tmp / "c", "--clf", clf_stem, "--out", tmp / "evb"})) == 2);
  }
  SECTION("vocabulary hash mismatch exits 2") {
    TempDir other("pipe2");
    REQUIRE(run({"synth", "--out", other / "c", "--synth-entities", "12",
                 "--synth-reviews-per-entity", "16", "--min-entity-reviews", "8",
                 "--vocab-size", "280", "--seed", "77"}) == 0);
    REQUIRE(run(common({"summarize", "--corpus", other / "c", "--checkpoint", sum_stem,
                        "--clf", clf_stem, "--out", other / "s.jsonl"})) == 2);
  }
}

TEST_CASE("rigged classifier yields perfect sentiment accuracy") {
  TempDir tmp("rig");
  REQUIRE(run(synth_args(tmp, "c")) == 0);
  cli::CorpusDir corpus = cli::load_corpus_dir(tmp / "c");
  auto by_entity = group_by_entity(corpus.reviews);
  std::vector<EvalBundle> bundles = sample_eval_bundles(
      by_entity, corpus.splits.train, 3, 5, 9);
  // rig: zero weights, bias spiking the bundle's rounded-mean star
  Rng rng(1);
  RatingClassifier clf = RatingClassifier::init(corpus.vocab.size(), 8, 4, 0.0,
                                                corpus.vocab.hash(), rng);
  for (Tensor* t : clf.parameters()) *t = Tensor::zeros(t->shape);
  EvalReport report;
  for (const EvalBundle& b : bundles) {
    clf.b_head = Tensor::zeros({5});
    clf.b_head[round_mean_rating(b.ratings) - 1] = 10.0;
    report.bundles.push_back(
        score_bundle(b, b.texts[0], clf, corpus.vocab, nullptr, nullptr));
  }
  report.finalize();
  REQUIRE(report.sentiment_accuracy == 1.0);
}
