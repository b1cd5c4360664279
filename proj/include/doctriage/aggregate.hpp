#ifndef DOCTRIAGE_AGGREGATE_HPP
#define DOCTRIAGE_AGGREGATE_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "doctriage/error.hpp"
#include "doctriage/labels.hpp"
#include "doctriage/model.hpp"

namespace doctriage {

struct CorrectionConfig {
  double tau_low = 0.5;       // "low confidence" threshold
  double delta_margin = 0.2;  // "comparable confidence" margin
  bool enable_catalog_maps = true;
  bool enable_article_thesis = true;

  void validate() const {
    if (!(tau_low > 0.0 && tau_low < 1.0)) throw ConfigError("tau_low must lie in (0,1)");
    if (!(delta_margin >= 0.0 && delta_margin < 1.0)) {
      throw ConfigError("delta_margin must lie in [0,1)");
    }
    if (!(tau_low > delta_margin)) throw ConfigError("tau_low must exceed delta_margin");
  }
};

struct RuleApplication {
  std::string rule;
  ClassLabel before;
  ClassLabel after;
};

struct DocumentPrediction {
  std::string doc_id;
  std::vector<Prediction> page_predictions;  // page order preserved
  std::array<std::uint32_t, 11> vote_counts{};
  std::array<double, 11> mean_conf{};  // mean top1 prob among pages voting for the label
  ClassLabel raw_label;
  ClassLabel corrected_label;
  std::vector<RuleApplication> applied_rules;
  std::vector<std::string> notes;  // lenient-mode audit notes (skipped pages)
};

namespace detail {

// Document-level confidence of a label: vote share times the mean top-1
// probability of the pages that voted for it.
inline double document_confidence(const DocumentPrediction& doc, std::size_t label_index) {
  const std::size_t pages = doc.page_predictions.size();
  if (pages == 0 || doc.vote_counts[label_index] == 0) return 0.0;
  const double share =
      static_cast<double>(doc.vote_counts[label_index]) / static_cast<double>(pages);
  return share * doc.mean_conf[label_index];
}

// Ranks label `a` above `b` by votes, then summed top-1 probability over the
// voting pages, then lower class index.
struct VoteRank {
  std::array<std::uint32_t, 11> votes{};
  std::array<double, 11> summed_prob{};

  bool better(std::size_t a, std::size_t b) const {
    if (votes[a] != votes[b]) return votes[a] > votes[b];
    if (summed_prob[a] != summed_prob[b]) return summed_prob[a] > summed_prob[b];
    return a < b;
  }
};

inline VoteRank tally(const std::vector<Prediction>& page_predictions) {
  VoteRank rank;
  for (const auto& pred : page_predictions) {
    const std::size_t c = pred.top1.index();
    ++rank.votes[c];
    rank.summed_prob[c] += pred.top1_conf;
  }
  return rank;
}

}  // namespace detail

// Plurality label over page top-1 votes. Ties break by larger summed top-1
// probability among the tied labels' voting pages, then by class index.
inline std::pair<ClassLabel, std::array<std::uint32_t, 11>> majority_vote(
    const std::vector<Prediction>& page_predictions) {
  if (page_predictions.empty()) throw DataError("majority vote over an empty document");
  const detail::VoteRank rank = detail::tally(page_predictions);
  std::size_t best = 0;
  for (std::size_t c = 1; c < ClassLabel::count(); ++c) {
    if (rank.better(c, best)) best = c;
  }
  return {ClassLabel(best), rank.votes};
}

// Maps documents are full of tables and catalog-like pages, but catalog
// documents contain no maps: a low-confidence catalog call whose runner-up is
// maps at comparable confidence is relabeled maps.
inline bool rule_catalog_maps(DocumentPrediction& doc, const CorrectionConfig& config) {
  if (doc.corrected_label != label_catalog()) return false;

  const detail::VoteRank rank = detail::tally(doc.page_predictions);
  // runner-up by vote count among labels that actually received votes
  std::size_t runner = ClassLabel::count();
  for (std::size_t c = 0; c < ClassLabel::count(); ++c) {
    if (c == doc.corrected_label.index() || rank.votes[c] == 0) continue;
    if (runner == ClassLabel::count() || rank.better(c, runner)) runner = c;
  }
  if (runner != label_maps().index()) return false;

  const double catalog_conf = detail::document_confidence(doc, doc.corrected_label.index());
  const double maps_conf = detail::document_confidence(doc, runner);
  if (catalog_conf >= config.tau_low) return false;
  if (catalog_conf - maps_conf > config.delta_margin) return false;

  doc.applied_rules.push_back({"catalog_maps", doc.corrected_label, label_maps()});
  doc.corrected_label = label_maps();
  return true;
}

// Thesis and scientific articles differ mostly in the title page: an article
// call whose title page reads thesis is relabeled thesis.
inline bool rule_article_thesis(DocumentPrediction& doc) {
  if (doc.corrected_label != label_scientific_articles()) return false;
  if (doc.page_predictions.empty()) return false;
  if (doc.page_predictions.front().top1 != label_thesis()) return false;

  doc.applied_rules.push_back({"article_thesis", doc.corrected_label, label_thesis()});
  doc.corrected_label = label_thesis();
  return true;
}

// Vote + correction pipeline over already-computed page predictions. Rules
// run in a fixed order, each at most once; their label preconditions are
// disjoint, so the order cannot change the outcome.
inline DocumentPrediction aggregate_document(const std::string& doc_id,
                                             std::vector<Prediction> page_predictions,
                                             const CorrectionConfig& config = {}) {
  config.validate();
  DocumentPrediction doc;
  doc.doc_id = doc_id;
  doc.page_predictions = std::move(page_predictions);

  auto [label, votes] = majority_vote(doc.page_predictions);
  doc.raw_label = label;
  doc.corrected_label = label;
  doc.vote_counts = votes;

  const detail::VoteRank rank = detail::tally(doc.page_predictions);
  for (std::size_t c = 0; c < ClassLabel::count(); ++c) {
    doc.mean_conf[c] =
        rank.votes[c] == 0 ? 0.0 : rank.summed_prob[c] / static_cast<double>(rank.votes[c]);
  }

  if (config.enable_catalog_maps) rule_catalog_maps(doc, config);
  if (config.enable_article_thesis) rule_article_thesis(doc);
  return doc;
}

inline nlohmann::json document_prediction_to_json(const DocumentPrediction& doc) {
  nlohmann::json pages = nlohmann::json::array();
  for (const auto& pred : doc.page_predictions) {
    nlohmann::json probs = nlohmann::json::array();
    for (Eigen::Index i = 0; i < pred.probs.size(); ++i) probs.push_back(pred.probs[i]);
    pages.push_back({{"probs", probs},
                     {"top1", std::string(pred.top1.name())},
                     {"top2", std::string(pred.top2.name())},
                     {"top1_conf", pred.top1_conf},
                     {"top2_conf", pred.top2_conf}});
  }
  nlohmann::json votes = nlohmann::json::object();
  nlohmann::json mean_conf = nlohmann::json::object();
  for (std::size_t c = 0; c < ClassLabel::count(); ++c) {
    if (doc.vote_counts[c] > 0) {
      votes[std::string(kClassNames[c])] = doc.vote_counts[c];
      mean_conf[std::string(kClassNames[c])] = doc.mean_conf[c];
    }
  }
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& rule : doc.applied_rules) {
    rules.push_back({{"rule", rule.rule},
                     {"before", std::string(rule.before.name())},
                     {"after", std::string(rule.after.name())}});
  }
  nlohmann::json out{{"doc_id", doc.doc_id},
                     {"page_predictions", pages},
                     {"vote_counts", votes},
                     {"mean_conf", mean_conf},
                     {"raw_label", std::string(doc.raw_label.name())},
                     {"corrected_label", std::string(doc.corrected_label.name())},
                     {"applied_rules", rules}};
  if (!doc.notes.empty()) out["notes"] = doc.notes;
  return out;
}

}  // namespace doctriage

#endif  // DOCTRIAGE_AGGREGATE_HPP
