#pragma once

#include "orid/imaging.hpp"
#include "orid/organ.hpp"

#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace orid {

using TokenSeq = std::vector<int>;

namespace special {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kCount = 4;
}  // namespace special

inline constexpr int kDefaultMinCount = 3;
inline constexpr int kDefaultReportLength = 60;

// Lowercases and replaces every non-alphanumeric character with a space, except
// hyphens between two alphanumerics and periods between two digits; whitespace
// is collapsed.
std::string normalize_text(std::string_view text);
std::vector<std::string> split_words(std::string_view normalized);

class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& words);  // ids 4.. in the given order

  int id(const std::string& token) const;  // UNK when absent
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }
  int size() const { return static_cast<int>(id_to_token_.size()); }
  // Non-special tokens in id order.
  std::vector<std::string> words() const;
  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Words below min_count are left out and later tokenize to UNK. Ids are
// assigned by descending frequency, ties alphabetical.
Vocabulary build_vocabulary(const std::vector<std::string>& texts, int min_count = kDefaultMinCount);

// [BOS] + ids truncated to max_len-2 + [EOS], right padded with PAD to max_len.
TokenSeq tokenize(std::string_view text, const Vocabulary& vocab, int max_len);

// Words between BOS and EOS joined by single spaces; specials are dropped.
std::string detokenize(const TokenSeq& tokens, const Vocabulary& vocab);

// Number of tokens up to and including EOS (the non-padded prefix).
int content_length(const TokenSeq& tokens);

enum class Split { Train, Val, Test };
const char* split_name(Split s);
Split parse_split(std::string_view s);

// A case as stored on disk: raw text plus pixel data.
struct RawCase {
  std::string id;
  Image image;
  MaskBundle masks;
  OrganArray<std::string> descriptions;
  std::string report;
  Split split = Split::Train;
};

// A case ready for the model; text is tokenized under a shared vocabulary.
struct Sample {
  std::string id;
  Image image;
  MaskBundle masks;
  OrganArray<TokenSeq> descriptions;  // each padded/truncated to the organ's fixed length
  TokenSeq report;
  Split split = Split::Train;
};

Sample encode_case(const RawCase& c, const Vocabulary& vocab, int report_len = kDefaultReportLength);

struct ManifestRecord {
  std::string id;
  std::string image_path;
  std::string mask_path;
  OrganArray<std::string> descriptions;
  std::string report;
  Split split = Split::Train;
  bool operator==(const ManifestRecord&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
};

// Default 7:2:1 allocation; remainders go to train.
struct SplitRatio {
  double train = 0.7;
  double val = 0.2;
  double test = 0.1;
};
std::vector<Split> assign_splits(int n, const SplitRatio& ratio = {});

// One JSON object per line: id, image_path, mask_path, descriptions{organ: text}, report, split.
std::string manifest_to_jsonl(const DatasetManifest& m);
DatasetManifest manifest_from_jsonl(std::string_view text);
DatasetManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const DatasetManifest& m);

// Loads pixel data for every record; paths are resolved against base_dir.
// A missing or empty mask path yields zero masks flagged as missing.
std::vector<RawCase> load_cases(const DatasetManifest& m, const std::string& base_dir);

// Writes images/masks under dir and the manifest as dir/manifest.jsonl.
void write_dataset(const std::string& dir, const DatasetManifest& m, const std::vector<RawCase>& cases);

}  // namespace orid
