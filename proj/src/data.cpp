#include "data.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace iadvtext {

namespace {

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

void append_eos(std::vector<std::string>& tokens) {
  if (tokens.empty() || tokens.back() != Vocabulary::kEosToken)
    tokens.push_back(Vocabulary::kEosToken);
}

void check_no_tabs(const std::vector<std::string>& tokens) {
  for (const auto& t : tokens)
    if (t.find('\t') != std::string::npos)
      fail(ErrorKind::kData, "token contains a TAB: " + t);
}

std::string rstrip(const std::string& s) {
  size_t end = s.size();
  while (end > 0 && (s[end - 1] == '\r' || s[end - 1] == ' ' ||
                     s[end - 1] == '\t'))
    --end;
  return s.substr(0, end);
}

}  // namespace

std::vector<ClassificationRecord> load_classification(const std::string& path,
                                                      bool labeled,
                                                      LoadStats* stats) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kData, "cannot open data file: " + path);
  std::vector<ClassificationRecord> records;
  std::string line;
  long line_no = 0;
  long skipped = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = rstrip(line);
    if (line.empty()) {
      ++skipped;
      continue;
    }
    ClassificationRecord rec;
    std::string body = line;
    if (labeled) {
      const size_t tab = line.find('\t');
      if (tab == std::string::npos)
        fail(ErrorKind::kData, path + ":" + std::to_string(line_no) +
                                   ": expected label<TAB>tokens");
      rec.label = line.substr(0, tab);
      body = line.substr(tab + 1);
    }
    rec.tokens = split_tokens(body);
    if (rec.tokens.empty())
      fail(ErrorKind::kData,
           path + ":" + std::to_string(line_no) + ": no tokens");
    append_eos(rec.tokens);
    records.push_back(std::move(rec));
  }
  if (stats) stats->skipped_empty = skipped;
  return records;
}

void write_classification(const std::string& path,
                          const std::vector<ClassificationRecord>& records,
                          bool labeled) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kData, "cannot write data file: " + path);
  for (const auto& rec : records) {
    check_no_tabs(rec.tokens);
    if (labeled) {
      if (rec.label.find('\t') != std::string::npos)
        fail(ErrorKind::kData, "label contains a TAB: " + rec.label);
      out << rec.label << '\t';
    }
    for (size_t i = 0; i < rec.tokens.size(); ++i) {
      if (i) out << ' ';
      out << rec.tokens[i];
    }
    out << '\n';
  }
}

std::vector<TaggingRecord> load_tagging(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kData, "cannot open data file: " + path);
  std::vector<TaggingRecord> records;
  TaggingRecord current;
  std::string line;
  long line_no = 0;
  auto flush = [&] {
    if (!current.tokens.empty()) {
      records.push_back(std::move(current));
      current = TaggingRecord{};
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = rstrip(line);
    if (line.empty()) {
      flush();
      continue;
    }
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      fail(ErrorKind::kData, path + ":" + std::to_string(line_no) +
                                 ": expected token<TAB>label");
    const std::string token = line.substr(0, tab);
    const std::string label = rstrip(line.substr(tab + 1));
    if (label != "0" && label != "1")
      fail(ErrorKind::kData, path + ":" + std::to_string(line_no) +
                                 ": label must be 0 or 1, got '" + label + "'");
    current.tokens.push_back(token);
    current.labels.push_back(label == "1" ? 1 : 0);
  }
  flush();  // dangling sentence at EOF
  return records;
}

void write_tagging(const std::string& path,
                   const std::vector<TaggingRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kData, "cannot write data file: " + path);
  for (size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    check_no_tabs(rec.tokens);
    for (size_t t = 0; t < rec.tokens.size(); ++t)
      out << rec.tokens[t] << '\t' << rec.labels[t] << '\n';
    if (r + 1 < records.size()) out << '\n';
  }
}

int LabelMap::add(const std::string& label) {
  auto it = ids_.find(label);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(names_.size());
  names_.push_back(label);
  ids_.emplace(label, id);
  return id;
}

int LabelMap::id(const std::string& label) const {
  auto it = ids_.find(label);
  if (it == ids_.end()) fail(ErrorKind::kData, "unknown label: " + label);
  return it->second;
}

const std::string& LabelMap::name(int id) const {
  if (id < 0 || id >= size())
    fail_runtime("label id " + std::to_string(id) + " out of range");
  return names_[id];
}

SentenceExample encode_classification(const ClassificationRecord& record,
                                      const Vocabulary& vocab,
                                      const LabelMap* labels) {
  SentenceExample e;
  e.ids = vocab.encode(record.tokens);
  if (labels && !record.label.empty()) e.labels = {labels->id(record.label)};
  return e;
}

SentenceExample encode_tagging(const TaggingRecord& record,
                               const Vocabulary& vocab) {
  SentenceExample e;
  e.ids = vocab.encode(record.tokens);
  e.labels = record.labels;
  return e;
}

// -- Synthetic task ------------------------------------------------------------

namespace {

constexpr int kKeywordsPerClass = 10;

}  // namespace

std::vector<std::string> synthetic_keywords(const std::string& label) {
  std::vector<std::string> out;
  for (int i = 0; i < kKeywordsPerClass; ++i)
    out.push_back(label + "kw" + std::to_string(i));
  return out;
}

SyntheticData generate_synthetic(const SyntheticConfig& config) {
  if (config.n_train < 1 || config.n_dev < 1 || config.n_test < 1 ||
      config.n_unlabeled < 0)
    fail(ErrorKind::kConfig, "generate_synthetic: sizes must be >= 1");
  const auto pos = synthetic_keywords("pos");
  const auto neg = synthetic_keywords("neg");
  const int n_fillers = config.vocab_size - 2 * kKeywordsPerClass;
  if (n_fillers < 1)
    fail(ErrorKind::kConfig,
         "generate_synthetic: vocab_size " + std::to_string(config.vocab_size) +
             " too small for " + std::to_string(2 * kKeywordsPerClass) +
             " keywords");
  std::vector<std::string> fillers;
  fillers.reserve(n_fillers);
  for (int i = 0; i < n_fillers; ++i)
    fillers.push_back("w" + std::to_string(i));

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> length_dist(8, 20);
  std::uniform_int_distribution<int> major_dist(1, 3);
  std::uniform_int_distribution<int> coin(0, 1);

  std::set<std::string> seen;
  auto gen_record = [&]() {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const bool positive = coin(rng) == 1;
      const auto& major = positive ? pos : neg;
      const auto& minor = positive ? neg : pos;
      const int n_major = major_dist(rng);
      std::uniform_int_distribution<int> minor_dist(0, n_major - 1);
      const int n_minor = minor_dist(rng);
      const int length = std::max(length_dist(rng), n_major + n_minor);

      std::vector<std::string> tokens(length);
      std::vector<int> slots(length);
      for (int i = 0; i < length; ++i) slots[i] = i;
      std::shuffle(slots.begin(), slots.end(), rng);
      int cursor = 0;
      std::uniform_int_distribution<int> pick_kw(0, kKeywordsPerClass - 1);
      for (int i = 0; i < n_major; ++i) tokens[slots[cursor++]] = major[pick_kw(rng)];
      for (int i = 0; i < n_minor; ++i) tokens[slots[cursor++]] = minor[pick_kw(rng)];
      std::uniform_int_distribution<int> pick_fill(0, n_fillers - 1);
      for (int i = cursor; i < length; ++i)
        tokens[slots[i]] = fillers[pick_fill(rng)];

      std::string key;
      for (const auto& t : tokens) {
        key += t;
        key += ' ';
      }
      if (!seen.insert(key).second) continue;  // duplicate across splits

      ClassificationRecord rec;
      rec.label = positive ? "pos" : "neg";
      rec.tokens = std::move(tokens);
      append_eos(rec.tokens);
      return rec;
    }
    fail_runtime("generate_synthetic: could not produce a unique sentence");
    return ClassificationRecord{};
  };

  SyntheticData data;
  for (int i = 0; i < config.n_train; ++i) data.train.push_back(gen_record());
  for (int i = 0; i < config.n_unlabeled; ++i) {
    auto rec = gen_record();
    rec.label.clear();
    data.unlabeled.push_back(std::move(rec));
  }
  for (int i = 0; i < config.n_dev; ++i) data.dev.push_back(gen_record());
  for (int i = 0; i < config.n_test; ++i) data.test.push_back(gen_record());
  return data;
}

}  // namespace iadvtext
