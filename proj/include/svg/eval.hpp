#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "svg/core.hpp"

namespace svg::eval {

inline constexpr std::size_t kDefaultK = 20;
inline constexpr double kMatchIou = 0.5;

// Sparse unit vector, entries sorted by key.
struct Embedding {
  std::vector<std::pair<std::uint64_t, double>> entries;

  bool zero() const { return entries.empty(); }
  static Embedding normalized(std::vector<std::pair<std::uint64_t, double>> raw);
};

double dot(const Embedding& a, const Embedding& b);

// Text similarity backed by unit embeddings. Implementations must be safe for
// concurrent embed() calls.
class SimilarityProvider {
 public:
  virtual ~SimilarityProvider() = default;
  virtual std::string name() const = 0;
  virtual Embedding embed(std::string_view text) const = 0;
  // Cosine of the embeddings. A zero embedding scores 1 against identical
  // text and 0 otherwise.
  virtual double similarity(std::string_view a, std::string_view b) const;
};

// Character-trigram counts of the lower-cased, whitespace-collapsed text padded
// with one space on each side, L2-normalized. Pure and hermetic.
class LexicalTrigramProvider : public SimilarityProvider {
 public:
  std::string name() const override { return "lexical-trigram-v1"; }
  Embedding embed(std::string_view text) const override;
  static std::string prepare(std::string_view text);
};

struct RemoteEmbeddingConfig {
  std::string endpoint;
  std::string path = "/v1/embeddings";
  std::string model;
  std::string api_key;
  int timeout_seconds = 60;
};

// Embeddings from an OpenAI-style /embeddings endpoint, memoized per text.
class RemoteEmbeddingProvider : public SimilarityProvider {
 public:
  explicit RemoteEmbeddingProvider(RemoteEmbeddingConfig config);
  std::string name() const override { return "remote:" + config_.model; }
  Embedding embed(std::string_view text) const override;

 private:
  RemoteEmbeddingConfig config_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, Embedding, std::less<>> cache_;
};

inline constexpr std::string_view kObjectTemplate = "The object is {class_name}";
inline constexpr std::string_view kPredicateTemplate = "Object is {predicate} another object";

// Replaces the first `{...}` placeholder of `tmpl` with `text`.
std::string apply_template(std::string_view tmpl, std::string_view text);

struct LabelSpace {
  std::vector<std::string> object_classes;
  std::vector<std::string> predicate_classes;
  std::string object_template{kObjectTemplate};
  std::string predicate_template{kPredicateTemplate};

  // Throws std::invalid_argument when a class list is empty or has duplicates.
  void check() const;
};

// One class per line; blank lines skipped. Throws on I/O failure, empty or duplicate lists.
std::vector<std::string> load_class_list(const std::string& path);

// argmax over classes of similarity(template(text), template(class)); ties go
// to the lowest index.
std::size_t assign_label(std::string_view text, std::span<const std::string> classes,
                         std::string_view tmpl, const SimilarityProvider& provider);

// assign_label with class embeddings computed once.
class LabelAssigner {
 public:
  LabelAssigner(std::span<const std::string> classes, std::string_view tmpl,
                const SimilarityProvider& provider);
  std::size_t assign(std::string_view text) const;
  const std::string& label(std::size_t index) const { return classes_[index]; }

 private:
  std::vector<std::string> classes_;
  std::string template_;
  const SimilarityProvider& provider_;
  std::vector<Embedding> class_embeddings_;
};

struct TripletMatch {
  bool matched = false;
  std::optional<std::size_t> prediction;  // index into the predicted relations
};

struct PredicateRecall {
  std::size_t matched = 0;
  std::size_t total = 0;
  double recall() const { return total == 0 ? 0.0 : static_cast<double>(matched) / total; }
};

struct MatchResult {
  std::vector<TripletMatch> gt;  // parallel to the ground-truth relations
  std::size_t matched = 0;
  std::size_t total = 0;
  std::size_t predictions_considered = 0;
  double recall_at_k = 0.0;
  double mean_recall_at_k = 0.0;
  std::map<std::string, PredicateRecall> per_predicate;  // keyed by predicate class
};

// Predictions are the first k relations of `predicted` in emission order. Each
// ground-truth triplet, in order, takes the first unused prediction whose
// subject and object boxes both exceed IoU 0.5 and whose three labels agree.
// Throws std::invalid_argument on empty ground truth or k == 0.
MatchResult match_triplets(const SceneGraph& predicted, const SceneGraph& gt, std::size_t k,
                           const LabelSpace& labels, const SimilarityProvider& provider);

struct ImageScore {
  std::string image_id;
  std::size_t predicted_relations = 0;
  std::optional<MatchResult> result;  // nullopt when the image has no ground-truth triplets
};

struct DatasetScore {
  std::size_t matched = 0;
  std::size_t total = 0;
  double recall_at_k = 0.0;        // micro-average over all ground-truth triplets
  double mean_recall_at_k = 0.0;   // mean of global per-predicate recalls
  double per_image_mean_recall = 0.0;  // mean over scored images of per-image mR
  double mean_predicted_relations = 0.0;
  std::map<std::string, PredicateRecall> per_predicate;
  std::vector<ImageScore> images;
};

DatasetScore score_dataset(std::span<const std::pair<SceneGraph, SceneGraph>> pairs, std::size_t k,
                           const LabelSpace& labels, const SimilarityProvider& provider);

// Mean similarity between predicted texts and ground-truth class names.
// Throws std::invalid_argument on a length mismatch; 0 for empty input.
double region_classification_ss(std::span<const std::string> predicted_texts,
                                std::span<const std::string> gt_classes,
                                const SimilarityProvider& provider);

}  // namespace svg::eval
