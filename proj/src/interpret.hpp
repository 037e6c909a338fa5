#pragma once

#include <optional>
#include <string>
#include <vector>

#include "perturb.hpp"

namespace iadvtext {

// -- Metrics -----------------------------------------------------------------

double error_rate(const std::vector<int>& predictions,
                  const std::vector<int>& gold);

struct F05 {
  double precision = 0.0;
  double recall = 0.0;
  double f_half = 0.0;
};

/// F_0.5 over the positive (error) class of aligned binary label sequences;
/// precision weighs twice as much as recall. Zero when both P and R are zero.
F05 f_half_score(const std::vector<int>& predictions,
                 const std::vector<int>& gold);

// -- Perturbation visualization ------------------------------------------------

struct RankedWord {
  int word_id = 0;
  std::string word;
  double strength = 0.0;  // in [0,1] after per-sentence max-normalization
  double score = 0.0;     // signed alpha (i-schemes) or cosine (advt/vat)
};

struct HeatmapCell {
  int position = 0;
  std::vector<RankedWord> candidates;  // empty when the perturbation is zero
  std::string selected;                // strength argmax
};

struct AttackOutcome {
  std::vector<std::string> original_tokens;
  std::vector<int> positions;
  std::vector<std::string> replacements;
  std::string pred_before;
  std::string pred_after;
  double loss_before = 0.0;
  double loss_after = 0.0;
  bool flipped = false;
};

struct HeatmapSentence {
  std::vector<std::string> tokens;
  std::vector<HeatmapCell> cells;
  std::optional<AttackOutcome> attack;
};

struct HeatmapReport {
  int schema_version = 1;
  std::string model_id;
  std::string method;
  double epsilon = 0.0;
  std::vector<HeatmapSentence> sentences;
};

/// Candidates for the i-schemes: the position's neighbors ranked by |alpha|
/// descending, ties by ascending word id. Strengths are normalized by the
/// sentence-wide maximum afterwards (normalize_sentence_strengths).
HeatmapSentence heatmap_from_alpha(const std::vector<std::string>& tokens,
                                   const AlphaWeights& alpha,
                                   const SentenceNeighbors& neighbors,
                                   const Vocabulary& vocab, int top_m);

/// Candidates for advt/vat: every vocabulary word ranked by the cosine
/// between r^(t) and the direction toward that word, descending, ties by
/// ascending id. Specials and the position's own word are skipped.
HeatmapSentence heatmap_from_field(const std::vector<std::string>& tokens,
                                   const std::vector<int>& token_ids,
                                   const PerturbationField& field,
                                   const EmbeddingMatrix& embedding,
                                   const Vocabulary& vocab, int top_m);

// -- Adversarial text reconstruction -------------------------------------------

/// Ranks positions by max_k |alpha^(t)_k| (or by the per-position field norm
/// when rank_by_field_norm), substitutes the argmax-|alpha| neighbor at the
/// top n positions, and re-runs the prediction. class_names resolve
/// classification ids for display; tagging predictions are space-joined.
AttackOutcome reconstruct_adversarial_text(
    const ModelParams& params, const Vocabulary& vocab,
    const SentenceExample& example, const std::vector<std::string>& tokens,
    const AlphaWeights& alpha, const SentenceNeighbors& neighbors,
    int n_substitutions, const std::vector<std::string>& class_names,
    bool rank_by_field_norm = false);

// -- Report export ---------------------------------------------------------------

std::string report_to_json(const HeatmapReport& report);
HeatmapReport report_from_json(const std::string& text);
/// format is "json" or "html"; output bytes are deterministic for identical
/// reports.
void export_report(const HeatmapReport& report, const std::string& format,
                   const std::string& path);

}  // namespace iadvtext
