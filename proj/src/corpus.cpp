#include "catrinet/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "catrinet/errors.hpp"

namespace catrinet::corpus {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

const std::array<std::string, kMaxTags> kKeywords = {
    "", "nodule", "effusion", "granuloma", "cardiomegaly", "atelectasis"};

const char* kNormalReport =
    "The heart size is normal. The lungs are clear. No acute cardiopulmonary abnormality.";

std::string abnormal_report(std::size_t cls, const std::string& side) {
  switch (cls) {
    case 1:
      return "The heart size is normal. There is a small nodule in the " + side +
             " upper lobe. No other acute abnormality.";
    case 2:
      return "The heart size is normal. There is a " + side +
             " pleural effusion. No other acute abnormality.";
    case 3:
      return "The heart size is normal. There is a calcified granuloma in the " + side +
             " mid lung. No other acute abnormality.";
    case 4:
      return "The heart is enlarged consistent with cardiomegaly. The " + side +
             " heart border is prominent. The lungs are clear.";
    case 5:
      return "The heart size is normal. There is " + side +
             " basilar atelectasis. No other acute abnormality.";
    default:
      throw ContractError("no report template for class " + std::to_string(cls));
  }
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 1e4) / 1e4; }

ImageGrid background(std::size_t size, double brightness) {
  ImageGrid img{size, size, std::vector<double>(size * size)};
  const double s = static_cast<double>(size);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      double v = 0.25 + 0.25 * static_cast<double>(r) / (s - 1.0) + brightness;
      for (double cx : {0.28 * s, 0.72 * s}) {
        const double dy = (static_cast<double>(r) - 0.45 * s) / (0.32 * s);
        const double dx = (static_cast<double>(c) - cx) / (0.17 * s);
        if (dx * dx + dy * dy <= 1.0) v -= 0.12;
      }
      img.at(r, c) = v;
    }
  }
  return img;
}

// Brightens the finding for class `cls` on the given side. Geometry is in
// units of a 32-pixel image and scaled to the actual size.
void draw_finding(ImageGrid& img, std::size_t cls, bool right, std::mt19937_64& rng) {
  const double k = static_cast<double>(img.width) / 32.0;
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  const double jr = jitter(rng) * k;
  const double jc = jitter(rng) * k;
  auto paint = [&](auto inside) {
    for (std::size_t r = 0; r < img.height; ++r)
      for (std::size_t c = 0; c < img.width; ++c)
        if (inside(static_cast<double>(r), static_cast<double>(c))) img.at(r, c) += 0.5;
  };
  auto side_col = [&](double left, double rightc) { return (right ? rightc : left) * k + jc; };
  switch (cls) {
    case 1: {  // disc
      const double cr = 9.0 * k + jr, cc = side_col(8.0, 23.0), rad = 2.6 * k;
      paint([&](double r, double c) { return (r - cr) * (r - cr) + (c - cc) * (c - cc) <= rad * rad; });
      break;
    }
    case 2: {  // horizontal bar near the base
      const double r0 = 24.0 * k + jr, c0 = side_col(3.0, 18.0);
      paint([&](double r, double c) { return r >= r0 && r < r0 + 3.0 * k && c >= c0 && c < c0 + 10.0 * k; });
      break;
    }
    case 3: {  // ring
      const double cr = 14.0 * k + jr, cc = side_col(9.0, 22.0);
      paint([&](double r, double c) {
        const double d = std::sqrt((r - cr) * (r - cr) + (c - cc) * (c - cc));
        return d >= 3.0 * k && d <= 4.5 * k;
      });
      break;
    }
    case 4: {  // large central disc shifted to one side
      const double cr = 20.0 * k + jr, cc = side_col(13.0, 19.0), rad = 5.0 * k;
      paint([&](double r, double c) { return (r - cr) * (r - cr) + (c - cc) * (c - cc) <= rad * rad; });
      break;
    }
    case 5: {  // vertical bar
      const double r0 = 8.0 * k + jr, c0 = side_col(7.0, 24.0);
      paint([&](double r, double c) { return r >= r0 && r < r0 + 12.0 * k && c >= c0 && c < c0 + 2.0 * k; });
      break;
    }
    default:
      throw ContractError("no finding geometry for class " + std::to_string(cls));
  }
}

std::string sample_id(std::size_t i) {
  std::ostringstream os;
  os << "syn-" << std::setw(5) << std::setfill('0') << i;
  return os.str();
}

}  // namespace

void CorpusSpec::validate() const {
  if (num_samples == 0) throw ConfigError("corpus needs at least one sample");
  if (!(abnormal_fraction >= 0.0 && abnormal_fraction <= 1.0)) {
    throw ConfigError("abnormal_fraction must lie in [0, 1]");
  }
  if (num_tags < 2 || num_tags > kMaxTags) {
    throw ConfigError("num_tags must lie in [2, " + std::to_string(kMaxTags) + "]");
  }
  if (image_size < 8) throw ConfigError("image_size must be at least 8");
  if (!(noise >= 0.0)) throw ConfigError("noise must be non-negative");
}

const std::string& finding_keyword(std::size_t c) {
  if (c == 0 || c >= kMaxTags) throw ContractError("no finding class " + std::to_string(c));
  return kKeywords[c];
}

std::vector<Sample> generate(const CorpusSpec& spec) {
  spec.validate();
  const std::size_t n = spec.num_samples;
  const auto n_abnormal =
      static_cast<std::size_t>(std::llround(spec.abnormal_fraction * static_cast<double>(n)));

  std::mt19937_64 master(splitmix64(spec.seed));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), master);
  std::vector<bool> abnormal(n, false);
  for (std::size_t i = 0; i < n_abnormal; ++i) abnormal[order[i]] = true;

  // Rarer classes get smaller weight: class c drawn with weight 1/c.
  std::vector<double> class_weights;
  for (std::size_t c = 1; c < spec.num_tags; ++c) class_weights.push_back(1.0 / static_cast<double>(c));

  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(i + 1)));
    std::uniform_real_distribution<double> bright(-0.02, 0.02);
    std::normal_distribution<double> noise(0.0, spec.noise);
    std::bernoulli_distribution coin(0.5);
    std::discrete_distribution<std::size_t> pick(class_weights.begin(), class_weights.end());

    Sample s;
    s.id = sample_id(i);
    s.image = background(spec.image_size, bright(rng));
    s.tags.assign(spec.num_tags, 0);
    if (abnormal[i]) {
      const std::size_t cls = pick(rng) + 1;
      const bool right = coin(rng);
      draw_finding(s.image, cls, right, rng);
      s.report = abnormal_report(cls, right ? "right" : "left");
      s.tags[cls] = 1;
    } else {
      s.report = kNormalReport;
      s.tags[0] = 1;
    }
    for (double& p : s.image.pixels) p = quantize(p + noise(rng));
    out.push_back(std::move(s));
  }
  return out;
}

Vocabulary build_vocab(const std::vector<Sample>& samples, std::size_t min_count) {
  if (samples.empty()) throw EmptyInputError("cannot build a vocabulary from an empty corpus");
  std::vector<std::string> reports;
  reports.reserve(samples.size());
  for (const auto& s : samples) reports.push_back(s.report);
  return Vocabulary::build(reports, min_count);
}

std::string to_jsonl_row(const Sample& sample) {
  json row;
  row["id"] = sample.id;
  row["image"] = {{"h", sample.image.height}, {"w", sample.image.width}, {"px", sample.image.pixels}};
  row["report"] = sample.report;
  row["tags"] = sample.tags;
  return row.dump();
}

void write_jsonl(const std::vector<Sample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : samples) out << to_jsonl_row(s) << '\n';
}

LoadResult load_jsonl(const std::filesystem::path& path, std::size_t expected_tags) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  LoadResult result;
  std::vector<std::string> parse_errors, validation_errors;
  std::set<std::string> seen;
  std::size_t tag_len = expected_tags;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(lineno) + ": ";
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      parse_errors.push_back(where + "malformed JSON (" + e.what() + ")");
      continue;
    }
    Sample s;
    try {
      for (const char* key : {"id", "report", "tags"}) {
        if (!row.contains(key)) throw ParseError(std::string("missing \"") + key + "\"");
      }
      s.id = row.at("id").get<std::string>();
      s.report = row.at("report").get<std::string>();
      s.tags = row.at("tags").get<std::vector<int>>();
      if (row.contains("image_path")) {
        std::filesystem::path p = row.at("image_path").get<std::string>();
        if (p.is_relative()) p = path.parent_path() / p;
        s.image = read_pgm(p);
      } else if (row.contains("image")) {
        const auto& im = row.at("image");
        s.image.height = im.at("h").get<std::size_t>();
        s.image.width = im.at("w").get<std::size_t>();
        s.image.pixels = im.at("px").get<std::vector<double>>();
      } else {
        throw ParseError("missing \"image\" or \"image_path\"");
      }
    } catch (const json::exception& e) {
      parse_errors.push_back(where + "bad field type (" + e.what() + ")");
      continue;
    } catch (const ParseError& e) {
      parse_errors.push_back(where + e.what());
      continue;
    } catch (const Error& e) {
      validation_errors.push_back(where + e.what());
      continue;
    }
    try {
      if (tokenize(s.report).empty()) throw ValidationError("empty report");
      s.image.validate();
      if (tag_len == 0) tag_len = s.tags.size();
      if (s.tags.size() != tag_len) {
        throw ValidationError("tag vector has length " + std::to_string(s.tags.size()) +
                              ", expected " + std::to_string(tag_len));
      }
      for (int t : s.tags)
        if (t != 0 && t != 1) throw ValidationError("tag entries must be 0 or 1");
      if (!seen.insert(s.id).second) throw ValidationError("duplicate id " + s.id);
    } catch (const Error& e) {
      validation_errors.push_back(where + e.what());
      continue;
    }
    result.samples.push_back(std::move(s));
  }
  auto joined = [](const std::vector<std::string>& errs) {
    std::string msg;
    for (const auto& e : errs) msg += (msg.empty() ? "" : "\n") + e;
    return msg;
  };
  if (!parse_errors.empty()) {
    std::vector<std::string> all = parse_errors;
    all.insert(all.end(), validation_errors.begin(), validation_errors.end());
    throw ParseError(joined(all));
  }
  if (!validation_errors.empty()) throw ValidationError(joined(validation_errors));
  if (result.samples.empty()) result.warnings.push_back(path.string() + ": dataset is empty");
  return result;
}

Split split(const std::vector<Sample>& samples, const std::vector<double>& ratios,
            std::uint64_t seed) {
  if (ratios.size() != 3) throw ConfigError("split needs three ratios (train, val, test)");
  double total = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw ConfigError("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split ratios sum to " + std::to_string(total));
  const std::size_t n = samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(splitmix64(seed ^ 0x51a7e5eedull));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = std::min<std::size_t>(n, std::llround(ratios[0] * static_cast<double>(n)));
  const auto n_val =
      std::min<std::size_t>(n - n_train, std::llround(ratios[1] * static_cast<double>(n)));
  Split out;
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = samples[order[i]];
    if (i < n_train) {
      out.train.push_back(s);
    } else if (i < n_train + n_val) {
      out.val.push_back(s);
    } else {
      out.test.push_back(s);
    }
  }
  return out;
}

EncodedSample encode_sample(const Sample& sample, const Vocabulary& vocab, std::size_t max_len) {
  EncodedSample e;
  e.id = sample.id;
  e.image = &sample.image;
  e.report_ids = vocab.encode(sample.report);
  if (e.report_ids.empty()) throw EmptyInputError("sample " + sample.id + " has an empty report");
  if (max_len < 2) throw ConfigError("max_len must leave room for one word and EOS");
  if (e.report_ids.size() > max_len - 1) e.report_ids.resize(max_len - 1);
  e.input_ids.push_back(Vocabulary::kBos);
  e.input_ids.insert(e.input_ids.end(), e.report_ids.begin(), e.report_ids.end());
  e.target_ids = e.report_ids;
  e.target_ids.push_back(Vocabulary::kEos);
  e.tags.assign(sample.tags.begin(), sample.tags.end());
  return e;
}

}  // namespace catrinet::corpus
