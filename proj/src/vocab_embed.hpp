#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tensor.hpp"

namespace iadvtext {

/// Token <-> id bijection with the three reserved ids up front.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";
  static constexpr const char* kEosToken = "<eos>";

  Vocabulary();

  /// Adds a token if absent; returns its id either way.
  int add(const std::string& token);
  int id(const std::string& token) const;  // UNK for unknown tokens
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }
  bool is_special(int id) const { return id == kPad || id == kUnk || id == kEos; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;

  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Keeps tokens with frequency >= min_freq, most frequent first, frequency
/// ties broken by first occurrence in the stream. max_size = 0 means
/// unlimited (specials are always included and do not count against it).
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus,
                       int min_freq = 1, int max_size = 0);

/// |V| x D matrix of word vectors, trained jointly with the model.
struct EmbeddingMatrix {
  TensorPtr rows;

  int vocab_size() const { return rows ? rows->rows : 0; }
  int dim() const { return rows ? rows->cols : 0; }
  const double* row(int id) const { return &rows->at(id, 0); }
};

/// Rows drawn from N(0, 1)/sqrt(D); the matrix requires grad.
EmbeddingMatrix init_embeddings(int vocab_size, int dim, std::mt19937_64& rng);

/// Per-position embedding leaves [1, D]; perturbations are added to these,
/// never to the matrix rows. Gradients flow back into the matrix.
std::vector<TensorPtr> lookup(Tape& tape, const EmbeddingMatrix& embedding,
                              const std::vector<int>& ids);

/// The k ids nearest to row word_id by ascending Euclidean distance (or
/// 1 - cosine when `cosine`), ties broken by ascending id. Exact: equals a
/// brute-force full sort. Returns fewer than k when not enough ids are
/// eligible, setting *shortfall.
std::vector<int> nearest_neighbors(const EmbeddingMatrix& embedding,
                                   int word_id, int k,
                                   const std::unordered_set<int>& exclude,
                                   bool* shortfall = nullptr,
                                   bool cosine = false);

/// Unit direction rows (w_k - w_t) / ||w_k - w_t||, flattened [k * D];
/// the zero vector where w_k equals w_t.
std::vector<double> direction_vectors(const EmbeddingMatrix& embedding,
                                      int position_word_id,
                                      const std::vector<int>& neighbor_ids);

/// Per-position neighbor vocabulary and direction set for one sentence.
/// Specials and the position's own id are never neighbor candidates.
struct SentenceNeighbors {
  int dim = 0;
  std::vector<std::vector<int>> ids;      // [T][<=k]
  std::vector<std::vector<double>> dirs;  // [T][k_t * D]
  bool shortfall = false;

  int positions() const { return static_cast<int>(ids.size()); }
};

SentenceNeighbors sentence_neighbors(const EmbeddingMatrix& embedding,
                                     const Vocabulary& vocab,
                                     const std::vector<int>& token_ids, int k,
                                     bool cosine = false);

/// Caches neighbor id lists between refreshes; direction vectors are always
/// rebuilt from the current embedding values.
class NeighborCache {
 public:
  NeighborCache(int k, int refresh_interval, bool cosine)
      : k_(k), interval_(refresh_interval < 1 ? 1 : refresh_interval),
        cosine_(cosine) {}

  SentenceNeighbors get(const EmbeddingMatrix& embedding,
                        const Vocabulary& vocab,
                        const std::vector<int>& token_ids);
  /// Called once per training batch; drops stale ids on refresh boundaries.
  void tick();

 private:
  int k_;
  int interval_;
  bool cosine_;
  long batch_ = 0;
  std::unordered_map<int, std::vector<int>> by_word_;
};

struct PretrainedLoadStats {
  int matched = 0;
  int unmatched = 0;  // file tokens absent from the vocabulary
};

/// Plain-text vectors, one "token v1 .. vD" line each. Overwrites matching
/// vocabulary rows in place.
PretrainedLoadStats load_pretrained_vectors(const std::string& path,
                                            const Vocabulary& vocab,
                                            EmbeddingMatrix& embedding);

/// Writes every non-special row in the same format, bit-exactly
/// re-loadable.
void save_pretrained_vectors(const std::string& path, const Vocabulary& vocab,
                             const EmbeddingMatrix& embedding);

}  // namespace iadvtext
