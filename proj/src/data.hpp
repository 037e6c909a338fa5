#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "model.hpp"

namespace iadvtext {

struct ClassificationRecord {
  std::string label;  // empty for unlabeled records
  std::vector<std::string> tokens;
};

struct TaggingRecord {
  std::vector<std::string> tokens;
  std::vector<int> labels;  // 0 = correct, 1 = error
};

struct LoadStats {
  long skipped_empty = 0;
};

/// Labeled lines are `label<TAB>token token ...`, unlabeled lines are tokens
/// only. <eos> is appended to every sentence unless already present. Empty
/// lines are skipped and counted.
std::vector<ClassificationRecord> load_classification(const std::string& path,
                                                      bool labeled,
                                                      LoadStats* stats = nullptr);
void write_classification(const std::string& path,
                          const std::vector<ClassificationRecord>& records,
                          bool labeled);

/// Two-column `token<TAB>label` lines with blank lines between sentences; a
/// dangling sentence at EOF is accepted.
std::vector<TaggingRecord> load_tagging(const std::string& path);
void write_tagging(const std::string& path,
                   const std::vector<TaggingRecord>& records);

/// Class label <-> id map, ids in first-seen order.
class LabelMap {
 public:
  int add(const std::string& label);
  int id(const std::string& label) const;  // errors on unknown labels
  const std::string& name(int id) const;
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

SentenceExample encode_classification(const ClassificationRecord& record,
                                      const Vocabulary& vocab,
                                      const LabelMap* labels);
SentenceExample encode_tagging(const TaggingRecord& record,
                               const Vocabulary& vocab);

// -- Synthetic planted-keyword task ------------------------------------------

struct SyntheticConfig {
  int vocab_size = 200;
  int n_train = 2000;
  int n_unlabeled = 4000;
  int n_dev = 250;
  int n_test = 500;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  std::vector<ClassificationRecord> train;
  std::vector<ClassificationRecord> unlabeled;  // labels empty
  std::vector<ClassificationRecord> dev;
  std::vector<ClassificationRecord> test;
};

/// Binary sentiment over sentences of 8-20 filler words with 1-3 planted
/// keywords of the majority class (and strictly fewer of the other); the
/// label is the majority keyword class by construction. Splits share no
/// identical token sequence. Deterministic in the seed.
SyntheticData generate_synthetic(const SyntheticConfig& config);

/// The planted keyword inventories, exposed for oracle checks.
std::vector<std::string> synthetic_keywords(const std::string& label);

}  // namespace iadvtext
