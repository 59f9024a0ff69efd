#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "catrinet/corpus.hpp"
#include "catrinet/errors.hpp"
#include "catrinet/vocabulary.hpp"

using namespace catrinet;
using namespace catrinet::corpus;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("catrinet_corpus_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

double l2(const ImageGrid& a, const ImageGrid& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) s += (a.pixels[i] - b.pixels[i]) * (a.pixels[i] - b.pixels[i]);
  return std::sqrt(s);
}

bool is_normal(const Sample& s) { return s.tags[0] == 1; }

}  // namespace

TEST_CASE("generation is deterministic under a seed") {
  CorpusSpec spec;
  spec.num_samples = 40;
  spec.seed = 7;
  const auto dir = scratch("det");
  write_jsonl(generate(spec), dir / "a.jsonl");
  write_jsonl(generate(spec), dir / "b.jsonl");
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  spec.seed = 8;
  write_jsonl(generate(spec), dir / "c.jsonl");
  CHECK(slurp(dir / "a.jsonl") != slurp(dir / "c.jsonl"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("generated samples respect the spec") {
  CorpusSpec spec;
  spec.num_samples = 200;
  const auto samples = generate(spec);
  REQUIRE(samples.size() == 200);
  std::size_t abnormal = 0;
  for (const auto& s : samples) {
    CHECK(s.image.height == 32);
    CHECK_NOTHROW(s.image.validate());
    CHECK(s.tags.size() == 6);
    CHECK(std::count(s.tags.begin(), s.tags.end(), 1) == 1);
    const std::string report = join_tokens(tokenize(s.report));
    if (is_normal(s)) {
      for (std::size_t c = 1; c < kMaxTags; ++c)
        CHECK(report.find(finding_keyword(c)) == std::string::npos);
    } else {
      ++abnormal;
      const auto cls = static_cast<std::size_t>(
          std::find(s.tags.begin(), s.tags.end(), 1) - s.tags.begin());
      CHECK(report.find(finding_keyword(cls)) != std::string::npos);
    }
  }
  CHECK(abnormal == 40);

  spec.abnormal_fraction = 0.0;
  for (const auto& s : generate(spec)) CHECK(s.tags == std::vector<int>{1, 0, 0, 0, 0, 0});

  CorpusSpec bad;
  bad.abnormal_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = CorpusSpec{};
  bad.num_tags = 7;
  CHECK_THROWS_AS(generate(bad), ConfigError);
}

TEST_CASE("normal images are closer to each other than to abnormal ones") {
  int violations = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    CorpusSpec spec;
    spec.num_samples = 12;
    spec.abnormal_fraction = 0.5;
    spec.seed = seed;
    const auto samples = generate(spec);
    std::vector<const Sample*> normal, abnormal;
    for (const auto& s : samples) (is_normal(s) ? normal : abnormal).push_back(&s);
    double nn = 0.0, na = 0.0;
    std::size_t cnt_nn = 0, cnt_na = 0;
    for (std::size_t i = 0; i < normal.size(); ++i) {
      for (std::size_t j = i + 1; j < normal.size(); ++j, ++cnt_nn) nn += l2(normal[i]->image, normal[j]->image);
      for (const Sample* a : abnormal) {
        na += l2(normal[i]->image, a->image);
        ++cnt_na;
      }
    }
    if (nn / static_cast<double>(cnt_nn) >= na / static_cast<double>(cnt_na)) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("vocabulary construction and round trip") {
  Sample a{"a", {}, "The lungs are clear.", {1, 0}};
  Sample b = a;
  b.id = "b";
  const Vocabulary v = build_vocab({a, b});
  CHECK(v.size() == Vocabulary::kSpecials + 4);
  CHECK(v.decode(v.encode(a.report)) == "the lungs are clear");

  Sample c{"c", {}, "rare words here. the lungs", {1, 0}};
  const Vocabulary pruned = build_vocab({a, b, c}, 2);
  const auto ids = pruned.encode("rare lungs");
  CHECK(ids[0] == Vocabulary::kUnk);
  CHECK(ids[1] != Vocabulary::kUnk);
  CHECK_THROWS_AS(build_vocab({}), EmptyInputError);

  // Frequency then lexicographic order.
  const Vocabulary ordered = Vocabulary::build({"b a", "a c", "a"});
  CHECK(ordered.tokens() == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("dataset JSONL loading") {
  const auto dir = scratch("load");
  CorpusSpec spec;
  spec.num_samples = 10;
  spec.image_size = 16;
  const auto samples = generate(spec);
  write_jsonl(samples, dir / "data.jsonl");
  const LoadResult back = load_jsonl(dir / "data.jsonl");
  REQUIRE(back.samples.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back.samples[i].id == samples[i].id);
    CHECK(back.samples[i].report == samples[i].report);
    CHECK(back.samples[i].tags == samples[i].tags);
    CHECK(back.samples[i].image.pixels == samples[i].image.pixels);
  }

  { std::ofstream(dir / "empty.jsonl"); }
  const LoadResult empty = load_jsonl(dir / "empty.jsonl");
  CHECK(empty.samples.empty());
  CHECK(empty.warnings.size() == 1);

  {
    std::ofstream out(dir / "missing.jsonl");
    out << to_jsonl_row(samples[0]) << '\n';
    out << R"({"id": "x", "image": {"h": 1, "w": 1, "px": [0.5]}, "tags": [1, 0, 0, 0, 0, 0]})" << '\n';
  }
  try {
    load_jsonl(dir / "missing.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("missing.jsonl:2") != std::string::npos);
    CHECK(msg.find("report") != std::string::npos);
  }

  {
    std::ofstream out(dir / "tags.jsonl");
    out << to_jsonl_row(samples[0]) << '\n';
    Sample shorter = samples[1];
    shorter.tags.pop_back();
    out << to_jsonl_row(shorter) << '\n';
  }
  CHECK_THROWS_AS(load_jsonl(dir / "tags.jsonl"), ValidationError);

  // An image path supersedes inline pixels.
  write_pgm(samples[2].image, dir / "img.pgm");
  {
    std::ofstream out(dir / "paths.jsonl");
    out << R"({"id": "p", "image_path": "img.pgm", "report": "the heart", "tags": [1, 0, 0, 0, 0, 0]})"
        << '\n';
  }
  const LoadResult with_path = load_jsonl(dir / "paths.jsonl");
  REQUIRE(with_path.samples.size() == 1);
  CHECK(with_path.samples[0].image.height == 16);
  CHECK(l2(with_path.samples[0].image, samples[2].image) < 0.05);
  CHECK_THROWS_AS(load_jsonl(dir / "nope.jsonl"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("train/val/test split") {
  CorpusSpec spec;
  spec.num_samples = 10;
  spec.image_size = 8;
  const auto samples = generate(spec);
  const Split s = split(samples, {0.7, 0.1, 0.2}, 3);
  CHECK(s.train.size() == 7);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 2);
  const Split again = split(samples, {0.7, 0.1, 0.2}, 3);
  for (std::size_t i = 0; i < 7; ++i) CHECK(s.train[i].id == again.train[i].id);

  std::set<std::string> ids;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (const auto& x : *part) CHECK(ids.insert(x.id).second);
  CHECK(ids.size() == samples.size());

  CHECK_THROWS_AS(split(samples, {0.5, 0.1, 0.2}, 3), ConfigError);
  CHECK_THROWS_AS(split(samples, {0.8, 0.2}, 3), ConfigError);
}

TEST_CASE("sample encoding") {
  const Vocabulary v = Vocabulary::build({"a b c d"});
  Sample s{"s", {}, "a b c d", {1, 0}};
  const EncodedSample e = encode_sample(s, v, 10);
  CHECK(e.input_ids.front() == Vocabulary::kBos);
  CHECK(e.target_ids.back() == Vocabulary::kEos);
  CHECK(e.input_ids.size() == 5);
  const EncodedSample cut = encode_sample(s, v, 3);
  CHECK(cut.target_ids.size() == 3);
  CHECK(cut.target_ids.back() == Vocabulary::kEos);
}

TEST_CASE("PGM round trip") {
  const auto dir = scratch("pgm");
  ImageGrid img{2, 3, {0.0, 1.0, 0.5, 0.25, 0.75, 0.2}};
  write_pgm(img, dir / "x.pgm");
  const ImageGrid back = read_pgm(dir / "x.pgm");
  CHECK(back.height == 2);
  CHECK(back.width == 3);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 0.5 / 255.0);
  { std::ofstream(dir / "bad.pgm") << "P2\n1 1\n255\n0\n"; }
  CHECK_THROWS_AS(read_pgm(dir / "bad.pgm"), ParseError);
  ImageGrid out_of_range{1, 1, {1.5}};
  CHECK_THROWS_AS(out_of_range.validate(), ValidationError);
  std::filesystem::remove_all(dir);
}
