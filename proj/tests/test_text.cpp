#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "meansum/corpus.hpp"
#include "meansum/rng.hpp"
#include "meansum/subword.hpp"
#include "meansum/textproc.hpp"

using namespace meansum;

namespace {

std::vector<std::string> synthetic_texts(std::size_t n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.entities = std::max<std::size_t>(5, n / 10);
  spec.reviews_per_entity = 10;
  spec.seed = seed;
  std::vector<Review> reviews = generate_synthetic(spec);
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < n && i < reviews.size(); ++i) {
    texts.push_back(reviews[i].text);
  }
  return texts;
}

std::string random_bytes(Rng& rng, std::size_t max_len) {
  std::string s;
  std::size_t n = rng.below(max_len);
  for (std::size_t i = 0; i < n; ++i) s += char(rng.below(256));
  return s;
}

}  // namespace

TEST_CASE("vocabulary training is deterministic and grows repeat pieces") {
  std::vector<std::string> corpus = {"aaaa aaaa"};
  Vocabulary v1 = Vocabulary::train(corpus, 300);
  Vocabulary v2 = Vocabulary::train(corpus, 300);
  REQUIRE(v1.serialize() == v2.serialize());
  REQUIRE(v1.hash() == v2.hash());
  // a multi-character piece covering repeated "a" runs must exist
  bool found = false;
  for (std::size_t id = Vocabulary::kBaseSize; id < v1.size(); ++id) {
    const std::string& p = v1.piece(id);
    if (p.size() >= 2 && p.find_first_not_of('a') == std::string::npos) found = true;
  }
  REQUIRE(found);
  REQUIRE(v1.size() <= 300);
}

TEST_CASE("vocabulary target size must exceed the base alphabet") {
  REQUIRE_THROWS_AS(Vocabulary::train({"abc"}, 258), InputError);
  REQUIRE_THROWS_AS(Vocabulary::train({}, 300), InputError);
}

TEST_CASE("encode basics") {
  Vocabulary v = Vocabulary::train(synthetic_texts(200, 3), 400);
  SECTION("empty text") {
    REQUIRE(v.encode("").empty());
    REQUIRE(v.decode({}).empty());
  }
  SECTION("delimiter literal maps to the delimiter id in place") {
    auto ids = v.encode("good</DOC>bad");
    auto a = v.encode("good");
    auto b = v.encode("bad");
    std::vector<std::size_t> expect = a;
    expect.push_back(Vocabulary::kDelim);
    expect.insert(expect.end(), b.begin(), b.end());
    REQUIRE(ids == expect);
  }
  SECTION("delimiter-joined reviews concatenate exactly") {
    std::string x = "the tacos were good.";
    std::string y = " my sister liked it. ";
    auto joined = v.encode(x + Vocabulary::delim_piece() + y);
    auto ex = v.encode(x);
    ex.push_back(Vocabulary::kDelim);
    auto ey = v.encode(y);
    ex.insert(ex.end(), ey.begin(), ey.end());
    REQUIRE(joined == ex);
  }
  SECTION("byte fallback piece decodes to its byte") {
    std::vector<std::size_t> one = {Vocabulary::kByteBase + std::size_t('Q')};
    REQUIRE(v.decode(one) == "Q");
  }
  SECTION("out-of-range id is an error") {
    REQUIRE_THROWS_AS(v.decode({v.size()}), InputError);
  }
}

TEST_CASE("round trip on corpus text, random bytes, and unicode") {
  auto texts = synthetic_texts(300, 7);
  Vocabulary v = Vocabulary::train(texts, 512);
  for (const std::string& t : texts) {
    REQUIRE(v.decode(v.encode(t)) == t);
  }
  Rng rng(99);
  for (int i = 0; i < 500; ++i) {
    std::string s = random_bytes(rng, 80);
    REQUIRE(v.decode(v.encode(s)) == s);
  }
  std::vector<std::string> tricky = {
      "caf\xc3\xa9 cr\xc3\xa8me br\xc3\xbbl\xc3\xa9\xc3\xa9",
      "tabs\tand\nnewlines  double  spaces ",
      " leading and trailing ",
      "<PAD> literal and other <tags>",
      "</DOC></DOC>x</DOC>",
      std::string("embedded\0null", 13),
  };
  for (const std::string& s : tricky) {
    REQUIRE(v.decode(v.encode(s)) == s);
  }
}

TEST_CASE("vocabulary serialization round trips") {
  auto texts = synthetic_texts(100, 11);
  texts.push_back("weird \x01 bytes \xff here");
  Vocabulary v = Vocabulary::train(texts, 350);
  Vocabulary w = Vocabulary::parse(v.serialize());
  REQUIRE(v.serialize() == w.serialize());
  REQUIRE(v.hash() == w.hash());
  std::string sample = "the coffee was superb. weird \x01\xff";
  REQUIRE(v.encode(sample) == w.encode(sample));
  REQUIRE_THROWS_AS(Vocabulary::parse("not a vocab"), InputError);
}

TEST_CASE("ingest jsonl maps fields and skips malformed lines") {
  std::istringstream in(
      "{\"stars\":5,\"text\":\"great\",\"business_id\":\"b1\",\"review_id\":\"r1\"}\n"
      "{\"stars\":3,\"text\":\"meh\",\"business_id\":\"b2\",\"review_id\":\"r2\"}\n"
      "this is not json\n"
      "{\"stars\":9,\"text\":\"bad rating\",\"business_id\":\"b3\"}\n"
      "{\"stars\":2,\"business_id\":\"b4\"}\n"
      "{\"stars\":4.0,\"text\":\"float stars ok\",\"business_id\":\"b5\"}\n");
  IngestStats stats;
  auto reviews = ingest_jsonl(in, DatasetKind::yelp, stats);
  REQUIRE(reviews.size() == 3);
  REQUIRE(stats.parsed == 3);
  REQUIRE(stats.skipped == 3);
  REQUIRE(reviews[0].rating == 5);
  REQUIRE(reviews[0].entity_id == "b1");
  REQUIRE(reviews[0].review_id == "r1");
  REQUIRE(reviews[2].rating == 4);

  SECTION("empty stream") {
    std::istringstream empty("");
    IngestStats s2;
    REQUIRE(ingest_jsonl(empty, DatasetKind::yelp, s2).empty());
    REQUIRE(s2.skipped == 0);
  }
  SECTION("amazon mapping") {
    std::istringstream am(
        "{\"overall\":4.0,\"reviewText\":\"fine\",\"asin\":\"p1\",\"reviewerID\":\"u9\"}\n");
    IngestStats s3;
    auto rs = ingest_jsonl(am, DatasetKind::amazon, s3);
    REQUIRE(rs.size() == 1);
    REQUIRE(rs[0].entity_id == "p1");
    REQUIRE(rs[0].review_id == "u9:p1");
  }
  SECTION("canonical round trip") {
    auto tmp = std::string(std::tmpnam(nullptr)) + ".jsonl";
    write_corpus_jsonl(tmp, reviews);
    IngestStats s4;
    auto back = ingest_jsonl(tmp, DatasetKind::canonical, s4);
    REQUIRE(back.size() == reviews.size());
    REQUIRE(back[1].text == reviews[1].text);
    REQUIRE(back[1].rating == reviews[1].rating);
    std::remove(tmp.c_str());
  }
}

namespace {

std::vector<Review> make_entity_reviews(const std::string& entity, std::size_t n,
                                        std::size_t token_len = 3) {
  std::vector<Review> out;
  for (std::size_t i = 0; i < n; ++i) {
    Review r;
    r.review_id = entity + "_" + std::to_string(i);
    r.entity_id = entity;
    r.rating = 3;
    r.text = "text";
    r.tokens.assign(token_len, 2);
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("filter corpus stages") {
  SECTION("popularity quantile drops the outlier entity") {
    std::vector<Review> all;
    for (auto& r : make_entity_reviews("a", 60)) all.push_back(r);
    for (auto& r : make_entity_reviews("b", 70)) all.push_back(r);
    for (auto& r : make_entity_reviews("c", 1000)) all.push_back(r);
    FilterStats stats;
    auto kept = filter_corpus(all, 150, 50, 0.90, stats);
    // nearest-rank over {60,70,1000} at 0.90 -> threshold 70; only counts
    // strictly above drop
    REQUIRE(stats.popularity_threshold == 70);
    std::set<std::string> entities;
    for (auto& r : kept) entities.insert(r.entity_id);
    REQUIRE(entities == std::set<std::string>{"a", "b"});
    REQUIRE(stats.entities_dropped_popular == 1);
    REQUIRE(stats.retained_reviews == 130);
  }
  SECTION("entity at the min-review boundary drops entirely") {
    std::vector<Review> all;
    for (auto& r : make_entity_reviews("small", 49)) all.push_back(r);
    for (auto& r : make_entity_reviews("big", 50)) all.push_back(r);
    FilterStats stats;
    auto kept = filter_corpus(all, 150, 50, 1.0, stats);
    for (auto& r : kept) REQUIRE(r.entity_id == "big");
    REQUIRE(stats.entities_dropped_small == 1);
  }
  SECTION("long reviews drop before entity counting") {
    std::vector<Review> all = make_entity_reviews("e", 6, 3);
    auto longer = make_entity_reviews("e", 3, 10);
    for (auto& r : longer) {
      r.review_id += "_long";
      all.push_back(r);
    }
    FilterStats stats;
    auto kept = filter_corpus(all, 5, 4, 1.0, stats);
    REQUIRE(stats.dropped_long == 3);
    REQUIRE(kept.size() == 6);
  }
  SECTION("ordering of the input stream does not change the retained set") {
    std::vector<Review> all;
    for (auto& r : make_entity_reviews("a", 10)) all.push_back(r);
    for (auto& r : make_entity_reviews("b", 12)) all.push_back(r);
    for (auto& r : make_entity_reviews("c", 40)) all.push_back(r);
    FilterStats s1, s2;
    auto k1 = filter_corpus(all, 150, 8, 0.9, s1);
    std::reverse(all.begin(), all.end());
    auto k2 = filter_corpus(all, 150, 8, 0.9, s2);
    auto ids = [](const std::vector<Review>& v) {
      std::set<std::string> s;
      for (auto& r : v) s.insert(r.review_id);
      return s;
    };
    REQUIRE(ids(k1) == ids(k2));
  }
  SECTION("empty result is an explicit error") {
    std::vector<Review> all = make_entity_reviews("tiny", 2);
    FilterStats stats;
    REQUIRE_THROWS_AS(filter_corpus(all, 150, 50, 0.9, stats), InputError);
  }
  SECTION("percentile must be in (0,1]") {
    std::vector<Review> all = make_entity_reviews("e", 5);
    FilterStats stats;
    REQUIRE_THROWS_AS(filter_corpus(all, 150, 1, 0.0, stats), InputError);
    REQUIRE_THROWS_AS(filter_corpus(all, 150, 1, 1.5, stats), InputError);
  }
}

TEST_CASE("entity splits") {
  std::vector<std::string> entities;
  for (int i = 0; i < 10; ++i) entities.push_back("e" + std::to_string(i));
  CorpusSplits s = split_by_entity(entities, 0.8, 0.1, 0.1, 7);
  REQUIRE(s.train.size() == 8);
  REQUIRE(s.valid.size() == 1);
  REQUIRE(s.test.size() == 1);

  SECTION("same seed twice is identical") {
    CorpusSplits t = split_by_entity(entities, 0.8, 0.1, 0.1, 7);
    REQUIRE(s.train == t.train);
    REQUIRE(s.valid == t.valid);
    REQUIRE(s.test == t.test);
  }
  SECTION("different seed keeps sizes") {
    CorpusSplits t = split_by_entity(entities, 0.8, 0.1, 0.1, 8);
    REQUIRE(t.train.size() == 8);
    REQUIRE(t.valid.size() == 1);
    REQUIRE(t.test.size() == 1);
  }
  SECTION("splits are disjoint and cover") {
    std::set<std::string> all;
    for (auto& v : {s.train, s.valid, s.test}) {
      for (auto& e : v) REQUIRE(all.insert(e).second);
    }
    REQUIRE(all.size() == entities.size());
  }
  SECTION("fraction and size validation") {
    REQUIRE_THROWS_AS(split_by_entity(entities, 0.5, 0.1, 0.1, 1), InputError);
    REQUIRE_THROWS_AS(split_by_entity({"a", "b"}, 0.8, 0.1, 0.1, 1), InputError);
  }
  SECTION("save and load") {
    auto tmp = std::string(std::tmpnam(nullptr)) + ".json";
    save_splits(tmp, s);
    CorpusSplits back = load_splits(tmp);
    REQUIRE(back.train == s.train);
    REQUIRE(back.test == s.test);
    std::remove(tmp.c_str());
  }
}

TEST_CASE("bundle sampling") {
  auto reviews = make_entity_reviews("e", 8);
  auto by_entity = group_by_entity(reviews);
  SECTION("entity with exactly k reviews returns all of them") {
    ReviewBundle b = sample_bundle(by_entity, "e", 8, 5);
    REQUIRE(b.reviews.size() == 8);
    std::set<std::string> ids;
    for (auto& r : b.reviews) ids.insert(r.review_id);
    REQUIRE(ids.size() == 8);
  }
  SECTION("same seed gives identical bundle") {
    ReviewBundle a = sample_bundle(by_entity, "e", 4, 5);
    ReviewBundle b = sample_bundle(by_entity, "e", 4, 5);
    for (std::size_t i = 0; i < 4; ++i) {
      REQUIRE(a.reviews[i].review_id == b.reviews[i].review_id);
    }
  }
  SECTION("too-small entity names itself in the error") {
    try {
      sample_bundle(by_entity, "e", 9, 5);
      FAIL("expected error");
    } catch (const InputError& e) {
      std::string msg = e.what();
      REQUIRE(msg.find("e") != std::string::npos);
      REQUIRE(msg.find("8") != std::string::npos);
    }
  }
}

TEST_CASE("synthetic corpus determinism and lexicon recoverability") {
  SyntheticSpec spec;
  spec.entities = 20;
  spec.reviews_per_entity = 12;
  spec.seed = 1;
  auto a = generate_synthetic(spec);
  auto b = generate_synthetic(spec);
  REQUIRE(a.size() == 240);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].text == b[i].text);
    REQUIRE(a[i].rating == b[i].rating);
    REQUIRE(a[i].review_id == b[i].review_id);
  }

  SECTION("every review contains a word from its rating lexicon") {
    auto lex = detail::default_lexicons();
    for (const Review& r : a) {
      bool hit = false;
      for (const std::string& w : lex.at(r.rating)) {
        if (r.text.find(w) != std::string::npos) hit = true;
      }
      REQUIRE(hit);
    }
  }
  SECTION("unigram lexicon count oracle recovers ratings") {
    auto lex = detail::default_lexicons();
    std::size_t correct = 0;
    for (const Review& r : a) {
      auto words = word_tokens(r.text);
      int best = 1;
      std::size_t best_count = 0;
      for (int star = 1; star <= 5; ++star) {
        std::size_t c = 0;
        for (const std::string& w : words) {
          const auto& l = lex.at(star);
          if (std::find(l.begin(), l.end(), w) != l.end()) ++c;
        }
        if (c > best_count) {
          best_count = c;
          best = star;
        }
      }
      if (best == r.rating) ++correct;
    }
    REQUIRE(double(correct) / double(a.size()) > 0.95);
  }
  SECTION("invalid specs are rejected") {
    SyntheticSpec bad = spec;
    bad.rating_lexicons = detail::default_lexicons();
    bad.rating_lexicons[1].push_back("good");  // collides with rating 4
    REQUIRE_THROWS_AS(generate_synthetic(bad), InputError);
    SyntheticSpec tiny = spec;
    tiny.vocab_size = 10;
    REQUIRE_THROWS_AS(generate_synthetic(tiny), InputError);
  }
}

TEST_CASE("word tokenization") {
  auto w = word_tokens("The food, was GREAT!  (really)   ");
  REQUIRE(w == std::vector<std::string>{"the", "food", "was", "great", "really"});
  REQUIRE(word_tokens("").empty());
  REQUIRE(word_tokens("...!!!").empty());
}

TEST_CASE("sentence splitting") {
  auto s = split_sentences("First one. Second two!  Third? tail without end");
  REQUIRE(s.size() == 4);
  REQUIRE(s[0] == "First one.");
  REQUIRE(s[1] == "Second two!");
  REQUIRE(s[2] == "Third?");
  REQUIRE(s[3] == "tail without end");

  SECTION("delimiters always split and vanish") {
    auto t = split_sentences("abc</DOC>def. ghi");
    REQUIRE(t.size() == 3);
    REQUIRE(t[0] == "abc");
    REQUIRE(t[1] == "def.");
  }
  SECTION("decimal points do not split") {
    auto t = split_sentences("costs 3.50 total. fine.");
    REQUIRE(t.size() == 2);
    REQUIRE(t[0] == "costs 3.50 total.");
  }
  SECTION("ellipsis groups") {
    auto t = split_sentences("wait... what? ok");
    REQUIRE(t.size() == 3);
    REQUIRE(t[0] == "wait...");
  }
}
