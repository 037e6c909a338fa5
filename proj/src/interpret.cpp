#include "interpret.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace iadvtext {

double error_rate(const std::vector<int>& predictions,
                  const std::vector<int>& gold) {
  if (predictions.size() != gold.size())
    fail_runtime("error_rate: " + std::to_string(predictions.size()) +
                 " predictions vs " + std::to_string(gold.size()) + " gold");
  if (predictions.empty()) return 0.0;
  long wrong = 0;
  for (size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] != gold[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(predictions.size());
}

F05 f_half_score(const std::vector<int>& predictions,
                 const std::vector<int>& gold) {
  if (predictions.size() != gold.size())
    fail_runtime("f_half_score: " + std::to_string(predictions.size()) +
                 " predictions vs " + std::to_string(gold.size()) + " gold");
  long tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const bool p = predictions[i] != 0;
    const bool g = gold[i] != 0;
    if (p && g) ++tp;
    else if (p && !g) ++fp;
    else if (!p && g) ++fn;
  }
  F05 out;
  out.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  out.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  if (out.precision > 0.0 || out.recall > 0.0)
    out.f_half = 1.25 * out.precision * out.recall /
                 (0.25 * out.precision + out.recall);
  return out;
}

namespace {

// Rescales candidate strengths so the sentence-wide maximum is exactly 1.
void normalize_sentence_strengths(HeatmapSentence& s) {
  double mx = 0.0;
  for (const auto& cell : s.cells)
    for (const auto& cand : cell.candidates) mx = std::max(mx, cand.strength);
  if (mx <= 0.0) return;
  for (auto& cell : s.cells)
    for (auto& cand : cell.candidates) cand.strength /= mx;
}

void pick_selected(HeatmapCell& cell) {
  if (!cell.candidates.empty()) cell.selected = cell.candidates[0].word;
}

}  // namespace

HeatmapSentence heatmap_from_alpha(const std::vector<std::string>& tokens,
                                   const AlphaWeights& alpha,
                                   const SentenceNeighbors& neighbors,
                                   const Vocabulary& vocab, int top_m) {
  if (top_m < 1) fail_runtime("heatmap: top_m must be >= 1");
  if (alpha.a.size() != tokens.size() ||
      neighbors.ids.size() != tokens.size())
    fail_runtime("heatmap: alpha/neighbors do not cover the sentence");
  HeatmapSentence s;
  s.tokens = tokens;
  for (size_t t = 0; t < tokens.size(); ++t) {
    HeatmapCell cell;
    cell.position = static_cast<int>(t);
    std::vector<size_t> order(alpha.a[t].size());
    for (size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
      const double ax = std::abs(alpha.a[t][x]);
      const double ay = std::abs(alpha.a[t][y]);
      if (ax != ay) return ax > ay;
      return neighbors.ids[t][x] < neighbors.ids[t][y];
    });
    for (size_t k : order) {
      if (static_cast<int>(cell.candidates.size()) >= top_m) break;
      const double mag = std::abs(alpha.a[t][k]);
      if (mag == 0.0) continue;  // zero perturbation contributes no candidate
      RankedWord rw;
      rw.word_id = neighbors.ids[t][k];
      rw.word = vocab.token(rw.word_id);
      rw.strength = mag;
      rw.score = alpha.a[t][k];
      cell.candidates.push_back(std::move(rw));
    }
    pick_selected(cell);
    s.cells.push_back(std::move(cell));
  }
  normalize_sentence_strengths(s);
  return s;
}

HeatmapSentence heatmap_from_field(const std::vector<std::string>& tokens,
                                   const std::vector<int>& token_ids,
                                   const PerturbationField& field,
                                   const EmbeddingMatrix& embedding,
                                   const Vocabulary& vocab, int top_m) {
  if (top_m < 1) fail_runtime("heatmap: top_m must be >= 1");
  if (field.r.size() != tokens.size() || token_ids.size() != tokens.size())
    fail_runtime("heatmap: field does not cover the sentence");
  const int d = embedding.dim();
  HeatmapSentence s;
  s.tokens = tokens;
  for (size_t t = 0; t < tokens.size(); ++t) {
    HeatmapCell cell;
    cell.position = static_cast<int>(t);
    const auto& r = field.r[t];
    const double rnorm = l2_norm(r);
    if (rnorm > 0.0) {
      const double* w = embedding.row(token_ids[t]);
      std::vector<std::pair<double, int>> scored;  // (-cosine, id)
      scored.reserve(embedding.vocab_size());
      for (int id = 0; id < embedding.vocab_size(); ++id) {
        if (id == token_ids[t] || vocab.is_special(id)) continue;
        const double* x = embedding.row(id);
        double dot = 0.0, dn = 0.0;
        for (int i = 0; i < d; ++i) {
          const double diff = x[i] - w[i];
          dot += r[i] * diff;
          dn += diff * diff;
        }
        if (dn == 0.0) continue;
        scored.emplace_back(-dot / (rnorm * std::sqrt(dn)), id);
      }
      const int take = std::min<int>(top_m, static_cast<int>(scored.size()));
      std::partial_sort(scored.begin(), scored.begin() + take, scored.end());
      for (int k = 0; k < take; ++k) {
        RankedWord rw;
        rw.word_id = scored[k].second;
        rw.word = vocab.token(rw.word_id);
        rw.score = -scored[k].first;
        rw.strength = std::max(rw.score, 0.0);
        cell.candidates.push_back(std::move(rw));
      }
    }
    pick_selected(cell);
    s.cells.push_back(std::move(cell));
  }
  normalize_sentence_strengths(s);
  return s;
}

namespace {

std::string prediction_string(const ModelParams& params,
                              const Predictions& pred,
                              const std::vector<std::string>& class_names) {
  if (params.task == Task::kClassify) {
    const int id = pred.labels.at(0);
    if (id >= 0 && id < static_cast<int>(class_names.size()))
      return class_names[id];
    return std::to_string(id);
  }
  std::string out;
  for (size_t i = 0; i < pred.labels.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(pred.labels[i]);
  }
  return out;
}

}  // namespace

AttackOutcome reconstruct_adversarial_text(
    const ModelParams& params, const Vocabulary& vocab,
    const SentenceExample& example, const std::vector<std::string>& tokens,
    const AlphaWeights& alpha, const SentenceNeighbors& neighbors,
    int n_substitutions, const std::vector<std::string>& class_names,
    bool rank_by_field_norm) {
  if (!example.labeled())
    fail_runtime("reconstruct_adversarial_text: example carries no label");
  AttackOutcome out;
  out.original_tokens = tokens;

  const std::vector<SentenceExample> before{example};
  auto pred_before = predict(params, before);
  out.pred_before = prediction_string(params, pred_before, class_names);
  out.loss_before = mean_nll(params, before);

  // Position strength: max_k |alpha| by default, field norm behind the flag.
  struct Cand {
    double strength;
    int position;
    int neighbor;  // index into neighbors.ids[position]
  };
  std::vector<Cand> cands;
  std::optional<PerturbationField> field;
  if (rank_by_field_norm) field = alpha_to_perturbation(alpha, neighbors);
  for (size_t t = 0; t < alpha.a.size(); ++t) {
    int best = -1;
    double best_mag = 0.0;
    for (size_t k = 0; k < alpha.a[t].size(); ++k) {
      const double mag = std::abs(alpha.a[t][k]);
      if (mag > best_mag) {
        best_mag = mag;
        best = static_cast<int>(k);
      }
    }
    if (best < 0) continue;
    const double strength =
        rank_by_field_norm ? l2_norm(field->r[t]) : best_mag;
    if (strength <= 0.0) continue;
    cands.push_back({strength, static_cast<int>(t), best});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.strength != b.strength) return a.strength > b.strength;
    return a.position < b.position;
  });

  SentenceExample attacked = example;
  std::vector<std::string> new_tokens = tokens;
  const int n = std::min<int>(n_substitutions, static_cast<int>(cands.size()));
  for (int i = 0; i < n; ++i) {
    const auto& c = cands[i];
    const int replacement_id = neighbors.ids[c.position][c.neighbor];
    attacked.ids[c.position] = replacement_id;
    new_tokens[c.position] = vocab.token(replacement_id);
    out.positions.push_back(c.position);
    out.replacements.push_back(vocab.token(replacement_id));
  }

  if (out.positions.empty()) {
    out.pred_after = out.pred_before;
    out.loss_after = out.loss_before;
    out.flipped = false;
    return out;
  }

  const std::vector<SentenceExample> after{attacked};
  auto pred_after = predict(params, after);
  out.pred_after = prediction_string(params, pred_after, class_names);
  out.loss_after = mean_nll(params, after);

  if (params.task == Task::kClassify) {
    out.flipped = pred_after.labels.at(0) != pred_before.labels.at(0);
  } else {
    out.flipped = false;
    for (int pos : out.positions)
      if (pred_after.labels.at(pos) != pred_before.labels.at(pos))
        out.flipped = true;
  }
  return out;
}

// -- JSON / HTML ---------------------------------------------------------------

namespace {

using nlohmann::json;

json attack_to_json(const AttackOutcome& a) {
  json j;
  j["position"] = a.positions.empty() ? -1 : a.positions[0];
  j["replacement"] = a.replacements.empty() ? "" : a.replacements[0];
  if (a.positions.size() > 1) {
    json subs = json::array();
    for (size_t i = 0; i < a.positions.size(); ++i)
      subs.push_back({{"position", a.positions[i]},
                      {"replacement", a.replacements[i]}});
    j["substitutions"] = subs;
  }
  j["pred_before"] = a.pred_before;
  j["pred_after"] = a.pred_after;
  j["loss_before"] = a.loss_before;
  j["loss_after"] = a.loss_after;
  j["flipped"] = a.flipped;
  return j;
}

AttackOutcome attack_from_json(const json& j) {
  AttackOutcome a;
  if (j.contains("substitutions")) {
    for (const auto& s : j["substitutions"]) {
      a.positions.push_back(s["position"].get<int>());
      a.replacements.push_back(s["replacement"].get<std::string>());
    }
  } else if (j["position"].get<int>() >= 0) {
    a.positions.push_back(j["position"].get<int>());
    a.replacements.push_back(j["replacement"].get<std::string>());
  }
  a.pred_before = j["pred_before"].get<std::string>();
  a.pred_after = j["pred_after"].get<std::string>();
  a.loss_before = j["loss_before"].get<double>();
  a.loss_after = j["loss_after"].get<double>();
  a.flipped = j["flipped"].get<bool>();
  return a;
}

json sentence_to_json(const HeatmapSentence& s) {
  json j;
  j["tokens"] = s.tokens;
  json cells = json::array();
  for (const auto& cell : s.cells) {
    json c;
    c["position"] = cell.position;
    json cands = json::array();
    for (const auto& cand : cell.candidates)
      cands.push_back({{"word", cand.word},
                       {"strength", cand.strength},
                       {"alpha", cand.score}});
    c["candidates"] = cands;
    c["selected"] = cell.selected;
    cells.push_back(c);
  }
  j["cells"] = cells;
  if (s.attack) j["attack"] = attack_to_json(*s.attack);
  return j;
}

HeatmapSentence sentence_from_json(const json& j) {
  HeatmapSentence s;
  s.tokens = j["tokens"].get<std::vector<std::string>>();
  for (const auto& c : j["cells"]) {
    HeatmapCell cell;
    cell.position = c["position"].get<int>();
    for (const auto& cand : c["candidates"]) {
      RankedWord rw;
      rw.word = cand["word"].get<std::string>();
      rw.strength = cand["strength"].get<double>();
      rw.score = cand["alpha"].get<double>();
      cell.candidates.push_back(std::move(rw));
    }
    cell.selected = c["selected"].get<std::string>();
    s.cells.push_back(std::move(cell));
  }
  if (j.contains("attack")) {
    s.attack = attack_from_json(j["attack"]);
    s.attack->original_tokens = s.tokens;
  }
  return s;
}

}  // namespace

std::string report_to_json(const HeatmapReport& report) {
  json j;
  j["schema_version"] = report.schema_version;
  j["model_id"] = report.model_id;
  j["method"] = report.method;
  j["epsilon"] = report.epsilon;
  json sentences = json::array();
  for (const auto& s : report.sentences) sentences.push_back(sentence_to_json(s));
  j["sentences"] = sentences;
  return j.dump(2);
}

HeatmapReport report_from_json(const std::string& text) {
  json j = json::parse(text);
  HeatmapReport r;
  r.schema_version = j["schema_version"].get<int>();
  r.model_id = j["model_id"].get<std::string>();
  r.method = j["method"].get<std::string>();
  r.epsilon = j["epsilon"].get<double>();
  for (const auto& s : j["sentences"]) r.sentences.push_back(sentence_from_json(s));
  return r;
}

namespace {

std::string html_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

void export_report(const HeatmapReport& report, const std::string& format,
                   const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kData, "cannot write report: " + path);
  if (format == "json") {
    out << report_to_json(report) << '\n';
    return;
  }
  if (format != "html")
    fail(ErrorKind::kConfig, "unknown report format: " + format);

  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\n"
      << "<title>" << html_escape(report.model_id)
      << " perturbations</title>\n"
      << "<style>\n"
      << "body{font-family:sans-serif;margin:2em;}\n"
      << "mark{padding:2px 4px;margin:1px;border-radius:3px;"
         "background:rgba(30,120,220,var(--a));}\n"
      << ".sent{margin-bottom:1.5em;line-height:2.2;}\n"
      << ".cand{color:#555;font-size:80%;}\n"
      << "</style></head><body>\n"
      << "<h1>" << html_escape(report.method)
      << " perturbation heatmap</h1>\n<p>model " << html_escape(report.model_id)
      << ", epsilon " << report.epsilon << "</p>\n";
  for (const auto& s : report.sentences) {
    out << "<div class=\"sent\">";
    for (size_t t = 0; t < s.tokens.size(); ++t) {
      double strength = 0.0;
      std::string title;
      if (t < s.cells.size()) {
        for (const auto& cand : s.cells[t].candidates) {
          strength = std::max(strength, cand.strength);
          if (!title.empty()) title += ", ";
          title += cand.word;
        }
      }
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", strength);
      out << "<mark style=\"--a:" << buf << "\" title=\""
          << html_escape(title) << "\">" << html_escape(s.tokens[t]);
      if (t < s.cells.size() && !s.cells[t].selected.empty())
        out << " <span class=\"cand\">&rarr;"
            << html_escape(s.cells[t].selected) << "</span>";
      out << "</mark> ";
    }
    if (s.attack) {
      out << "<div class=\"cand\">attack: " << html_escape(s.attack->pred_before)
          << " &rarr; " << html_escape(s.attack->pred_after)
          << (s.attack->flipped ? " (flipped)" : "") << "</div>";
    }
    out << "</div>\n";
  }
  out << "</body></html>\n";
}

}  // namespace iadvtext
