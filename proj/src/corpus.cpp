#include "orid/corpus.hpp"

#include "orid/array_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <sstream>
#include <stdexcept>

namespace orid {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> kSpecials = {"<pad>", "<bos>", "<eos>", "<unk>"};
  return kSpecials;
}

}  // namespace

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const char prev = i > 0 ? text[i - 1] : ' ';
    const char next = i + 1 < text.size() ? text[i + 1] : ' ';
    bool keep = is_alnum(c);
    if (c == '-' && is_alnum(prev) && is_alnum(next)) keep = true;
    if (c == '.' && is_digit(prev) && is_digit(next)) keep = true;
    if (keep) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::vector<std::string> split_words(std::string_view normalized) {
  std::vector<std::string> words;
  std::istringstream ss{std::string(normalized)};
  std::string w;
  while (ss >> w) words.push_back(w);
  return words;
}

Vocabulary::Vocabulary() : id_to_token_(special_tokens()) {
  for (int i = 0; i < special::kCount; ++i) token_to_id_[id_to_token_[i]] = i;
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const auto& w : words) {
    if (token_to_id_.count(w)) throw std::invalid_argument("duplicate vocabulary token: " + w);
    token_to_id_[w] = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(w);
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? special::kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::words() const {
  return {id_to_token_.begin() + special::kCount, id_to_token_.end()};
}

Vocabulary build_vocabulary(const std::vector<std::string>& texts, int min_count) {
  if (texts.empty()) throw std::invalid_argument("empty corpus");
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  std::unordered_map<std::string, int> freq;
  for (const auto& t : texts)
    for (auto& w : split_words(normalize_text(t))) ++freq[w];
  std::vector<std::pair<std::string, int>> kept;
  for (auto& [w, n] : freq)
    if (n >= min_count) kept.emplace_back(w, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, n] : kept) words.push_back(w);
  return Vocabulary(words);
}

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab, int max_len) {
  if (max_len < 2) throw std::invalid_argument("max_len must be >= 2");
  TokenSeq out;
  out.reserve(static_cast<std::size_t>(max_len));
  out.push_back(special::kBos);
  for (const auto& w : split_words(normalize_text(text))) {
    if (static_cast<int>(out.size()) >= max_len - 1) break;
    out.push_back(vocab.id(w));
  }
  out.push_back(special::kEos);
  out.resize(static_cast<std::size_t>(max_len), special::kPad);
  return out;
}

std::string detokenize(const TokenSeq& tokens, const Vocabulary& vocab) {
  std::string out;
  for (int t : tokens) {
    if (t == special::kEos) break;
    if (t == special::kPad || t == special::kBos) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(t);
  }
  return out;
}

int content_length(const TokenSeq& tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == special::kEos) return static_cast<int>(i) + 1;
  int n = static_cast<int>(tokens.size());
  while (n > 0 && tokens[static_cast<std::size_t>(n) - 1] == special::kPad) --n;
  return n;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split: " + std::string(s));
}

Sample encode_case(const RawCase& c, const Vocabulary& vocab, int report_len) {
  Sample s;
  s.id = c.id;
  s.image = c.image;
  s.masks = c.masks;
  for (OrganId o : kAllOrgans)
    s.descriptions[index_of(o)] = tokenize(c.descriptions[index_of(o)], vocab, desc_length(o));
  s.report = tokenize(c.report, vocab, report_len);
  s.split = c.split;
  return s;
}

std::vector<Split> assign_splits(int n, const SplitRatio& ratio) {
  if (n < 1) throw std::invalid_argument("dataset size must be >= 1");
  const double total = ratio.train + ratio.val + ratio.test;
  if (ratio.train < 0 || ratio.val < 0 || ratio.test < 0 || total <= 0)
    throw std::invalid_argument("split ratios must be non-negative and not all zero");
  const int n_val = static_cast<int>(n * ratio.val / total);
  const int n_test = static_cast<int>(n * ratio.test / total);
  const int n_train = n - n_val - n_test;
  std::vector<Split> out;
  out.insert(out.end(), static_cast<std::size_t>(n_train), Split::Train);
  out.insert(out.end(), static_cast<std::size_t>(n_val), Split::Val);
  out.insert(out.end(), static_cast<std::size_t>(n_test), Split::Test);
  return out;
}

std::string manifest_to_jsonl(const DatasetManifest& m) {
  std::string out;
  for (const auto& r : m.records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["image_path"] = r.image_path;
    j["mask_path"] = r.mask_path;
    nlohmann::ordered_json desc = nlohmann::ordered_json::object();
    for (OrganId o : kAllOrgans) desc[std::string(organ_name(o))] = r.descriptions[index_of(o)];
    j["descriptions"] = desc;
    j["report"] = r.report;
    j["split"] = split_name(r.split);
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

DatasetManifest manifest_from_jsonl(std::string_view text) {
  DatasetManifest m;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    ManifestRecord r;
    r.id = j.at("id").get<std::string>();
    r.image_path = j.value("image_path", "");
    r.mask_path = j.value("mask_path", "");
    const auto& desc = j.at("descriptions");
    for (OrganId o : kAllOrgans) {
      const std::string key(organ_name(o));
      if (!desc.contains(key))
        throw std::runtime_error("manifest line " + std::to_string(lineno) + ": missing description for " + key);
      r.descriptions[index_of(o)] = desc.at(key).get<std::string>();
    }
    r.report = j.at("report").get<std::string>();
    r.split = parse_split(j.at("split").get<std::string>());
    m.records.push_back(std::move(r));
  }
  return m;
}

DatasetManifest read_manifest(const std::string& path) { return manifest_from_jsonl(io::read_file(path)); }

void write_manifest(const std::string& path, const DatasetManifest& m) {
  io::write_file(path, manifest_to_jsonl(m));
}

std::vector<RawCase> load_cases(const DatasetManifest& m, const std::string& base_dir) {
  namespace fs = std::filesystem;
  std::vector<RawCase> cases;
  cases.reserve(m.records.size());
  for (const auto& r : m.records) {
    RawCase c;
    c.id = r.id;
    c.image = io::read_image((fs::path(base_dir) / r.image_path).string());
    const fs::path mask_path = fs::path(base_dir) / r.mask_path;
    if (!r.mask_path.empty() && fs::exists(mask_path))
      c.masks = io::read_masks(mask_path.string());
    else
      c.masks = MaskBundle::zeros(c.image.height, c.image.width);
    c.descriptions = r.descriptions;
    c.report = r.report;
    c.split = r.split;
    cases.push_back(std::move(c));
  }
  return cases;
}

void write_dataset(const std::string& dir, const DatasetManifest& m, const std::vector<RawCase>& cases) {
  namespace fs = std::filesystem;
  if (m.records.size() != cases.size()) throw std::invalid_argument("manifest/case count mismatch");
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& r = m.records[i];
    const fs::path img = fs::path(dir) / r.image_path;
    fs::create_directories(img.parent_path());
    io::write_image(img.string(), cases[i].image);
    if (r.mask_path.empty()) continue;
    const fs::path msk = fs::path(dir) / r.mask_path;
    fs::create_directories(msk.parent_path());
    io::write_masks(msk.string(), cases[i].masks);
  }
  write_manifest((fs::path(dir) / "manifest.jsonl").string(), m);
}

}  // namespace orid
