#include "vocab_embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace iadvtext {

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
  add(kEosToken);
}

int Vocabulary::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const int id = static_cast<int>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    fail_runtime("vocabulary id " + std::to_string(id) + " out of range [0," +
                 std::to_string(size()) + ")");
  return id_to_token_[id];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus,
                       int min_freq, int max_size) {
  size_t total = 0;
  for (const auto& s : corpus) total += s.size();
  if (total == 0) fail(ErrorKind::kData, "build_vocab: empty corpus");

  struct Entry {
    long freq = 0;
    long first_seen = 0;
  };
  std::unordered_map<std::string, Entry> counts;
  long pos = 0;
  for (const auto& sentence : corpus) {
    for (const auto& tok : sentence) {
      auto [it, inserted] = counts.try_emplace(tok);
      if (inserted) it->second.first_seen = pos;
      ++it->second.freq;
      ++pos;
    }
  }

  std::vector<std::pair<std::string, Entry>> ordered(counts.begin(),
                                                     counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second.freq != b.second.freq) return a.second.freq > b.second.freq;
    return a.second.first_seen < b.second.first_seen;
  });

  Vocabulary vocab;
  for (const auto& [tok, entry] : ordered) {
    if (entry.freq < min_freq) break;
    if (vocab.contains(tok)) continue;  // specials appearing in the corpus
    if (max_size > 0 && vocab.size() - 3 >= max_size) break;
    vocab.add(tok);
  }
  return vocab;
}

EmbeddingMatrix init_embeddings(int vocab_size, int dim,
                                std::mt19937_64& rng) {
  if (vocab_size <= 0 || dim <= 0)
    fail_runtime("init_embeddings: vocab_size and dim must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<double> values(static_cast<size_t>(vocab_size) * dim);
  for (auto& v : values) v = normal(rng) * s;
  auto t = std::make_shared<Tensor>();
  t->rows = vocab_size;
  t->cols = dim;
  t->values = std::move(values);
  t->requires_grad = true;
  return EmbeddingMatrix{t};
}

std::vector<TensorPtr> lookup(Tape& tape, const EmbeddingMatrix& embedding,
                              const std::vector<int>& ids) {
  std::vector<TensorPtr> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(tape.gather_rows(embedding.rows, {id}));
  return out;
}

std::vector<int> nearest_neighbors(const EmbeddingMatrix& embedding,
                                   int word_id, int k,
                                   const std::unordered_set<int>& exclude,
                                   bool* shortfall, bool cosine) {
  if (k < 1) fail_runtime("nearest_neighbors: k must be >= 1");
  if (word_id < 0 || word_id >= embedding.vocab_size())
    fail_runtime("nearest_neighbors: word id " + std::to_string(word_id) +
                 " out of range");
  const int v = embedding.vocab_size();
  const int d = embedding.dim();
  const double* w = embedding.row(word_id);

  double wnorm = 0.0;
  if (cosine) {
    for (int i = 0; i < d; ++i) wnorm += w[i] * w[i];
    wnorm = std::sqrt(wnorm);
  }

  std::vector<std::pair<double, int>> dist;
  dist.reserve(v);
  for (int id = 0; id < v; ++id) {
    if (id == word_id || exclude.count(id)) continue;
    const double* x = embedding.row(id);
    double key;
    if (cosine) {
      double dot = 0.0, xnorm = 0.0;
      for (int i = 0; i < d; ++i) {
        dot += x[i] * w[i];
        xnorm += x[i] * x[i];
      }
      xnorm = std::sqrt(xnorm);
      const double denom = wnorm * xnorm;
      key = denom > 0.0 ? 1.0 - dot / denom : 1.0;
    } else {
      double s = 0.0;
      for (int i = 0; i < d; ++i) {
        const double diff = x[i] - w[i];
        s += diff * diff;
      }
      key = s;  // squared distance orders the same as distance
    }
    dist.emplace_back(key, id);
  }

  const int take = std::min<int>(k, static_cast<int>(dist.size()));
  if (shortfall) *shortfall = take < k;
  std::partial_sort(dist.begin(), dist.begin() + take, dist.end());
  std::vector<int> out;
  out.reserve(take);
  for (int i = 0; i < take; ++i) out.push_back(dist[i].second);
  return out;
}

std::vector<double> direction_vectors(const EmbeddingMatrix& embedding,
                                      int position_word_id,
                                      const std::vector<int>& neighbor_ids) {
  const int d = embedding.dim();
  const double* w = embedding.row(position_word_id);
  std::vector<double> dirs(neighbor_ids.size() * static_cast<size_t>(d), 0.0);
  for (size_t k = 0; k < neighbor_ids.size(); ++k) {
    const double* x = embedding.row(neighbor_ids[k]);
    double* out = dirs.data() + k * d;
    double norm = 0.0;
    for (int i = 0; i < d; ++i) {
      out[i] = x[i] - w[i];
      norm += out[i] * out[i];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      std::fill(out, out + d, 0.0);
    } else {
      for (int i = 0; i < d; ++i) out[i] /= norm;
    }
  }
  return dirs;
}

SentenceNeighbors sentence_neighbors(const EmbeddingMatrix& embedding,
                                     const Vocabulary& vocab,
                                     const std::vector<int>& token_ids, int k,
                                     bool cosine) {
  SentenceNeighbors sn;
  sn.dim = embedding.dim();
  sn.ids.reserve(token_ids.size());
  sn.dirs.reserve(token_ids.size());
  const std::unordered_set<int> exclude{Vocabulary::kPad, Vocabulary::kUnk,
                                        Vocabulary::kEos};
  (void)vocab;
  for (int id : token_ids) {
    bool short_here = false;
    auto ids = nearest_neighbors(embedding, id, k, exclude, &short_here, cosine);
    sn.shortfall = sn.shortfall || short_here;
    sn.dirs.push_back(direction_vectors(embedding, id, ids));
    sn.ids.push_back(std::move(ids));
  }
  return sn;
}

SentenceNeighbors NeighborCache::get(const EmbeddingMatrix& embedding,
                                     const Vocabulary& vocab,
                                     const std::vector<int>& token_ids) {
  SentenceNeighbors sn;
  sn.dim = embedding.dim();
  const std::unordered_set<int> exclude{Vocabulary::kPad, Vocabulary::kUnk,
                                        Vocabulary::kEos};
  (void)vocab;
  for (int id : token_ids) {
    auto it = by_word_.find(id);
    if (it == by_word_.end()) {
      bool short_here = false;
      auto ids =
          nearest_neighbors(embedding, id, k_, exclude, &short_here, cosine_);
      sn.shortfall = sn.shortfall || short_here;
      it = by_word_.emplace(id, std::move(ids)).first;
    }
    sn.dirs.push_back(direction_vectors(embedding, id, it->second));
    sn.ids.push_back(it->second);
  }
  return sn;
}

void NeighborCache::tick() {
  if (batch_ % interval_ == 0) by_word_.clear();
  ++batch_;
}

PretrainedLoadStats load_pretrained_vectors(const std::string& path,
                                            const Vocabulary& vocab,
                                            EmbeddingMatrix& embedding) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kData, "cannot open vector file: " + path);
  PretrainedLoadStats stats;
  const int d = embedding.dim();
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<double> vec;
    vec.reserve(d);
    double x;
    while (ss >> x) vec.push_back(x);
    if (!ss.eof())
      fail(ErrorKind::kData, path + ":" + std::to_string(line_no) +
                                 ": malformed vector line");
    if (static_cast<int>(vec.size()) != d)
      fail(ErrorKind::kData,
           path + ":" + std::to_string(line_no) + ": expected " +
               std::to_string(d) + " values, got " +
               std::to_string(vec.size()));
    if (!vocab.contains(token)) {
      ++stats.unmatched;
      continue;
    }
    const int id = vocab.id(token);
    for (int i = 0; i < d; ++i) embedding.rows->at(id, i) = vec[i];
    ++stats.matched;
  }
  return stats;
}

void save_pretrained_vectors(const std::string& path, const Vocabulary& vocab,
                             const EmbeddingMatrix& embedding) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kData, "cannot write vector file: " + path);
  char buf[64];
  for (int id = 0; id < vocab.size(); ++id) {
    if (vocab.is_special(id)) continue;
    out << vocab.token(id);
    for (int i = 0; i < embedding.dim(); ++i) {
      // max_digits10 round-trips doubles bit-exactly through text
      std::snprintf(buf, sizeof buf, "%.17g", embedding.row(id)[i]);
      out << ' ' << buf;
    }
    out << '\n';
  }
}

}  // namespace iadvtext
