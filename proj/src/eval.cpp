#include "svg/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "svg/geometry.hpp"

namespace svg::eval {

Embedding Embedding::normalized(std::vector<std::pair<std::uint64_t, double>> raw) {
  std::sort(raw.begin(), raw.end());
  Embedding out;
  for (const auto& [key, value] : raw) {
    if (!out.entries.empty() && out.entries.back().first == key) {
      out.entries.back().second += value;
    } else {
      out.entries.emplace_back(key, value);
    }
  }
  std::erase_if(out.entries, [](const auto& e) { return e.second == 0.0; });
  double norm = 0.0;
  for (const auto& e : out.entries) norm += e.second * e.second;
  norm = std::sqrt(norm);
  if (norm > 0) {
    for (auto& e : out.entries) e.second /= norm;
  }
  return out;
}

double dot(const Embedding& a, const Embedding& b) {
  double sum = 0.0;
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  while (ia != a.entries.end() && ib != b.entries.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      sum += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  return sum;
}

double SimilarityProvider::similarity(std::string_view a, std::string_view b) const {
  const Embedding ea = embed(a);
  const Embedding eb = embed(b);
  if (ea.zero() || eb.zero()) return a == b ? 1.0 : 0.0;
  return std::clamp(dot(ea, eb), -1.0, 1.0);
}

std::string LexicalTrigramProvider::prepare(std::string_view text) {
  std::string out = " ";
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = out.size() > 1;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  out.push_back(' ');
  return out;
}

Embedding LexicalTrigramProvider::embed(std::string_view text) const {
  const std::string s = prepare(text);
  std::vector<std::pair<std::uint64_t, double>> raw;
  for (std::size_t i = 0; i + 3 <= s.size(); ++i) {
    const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << 16) |
                              (static_cast<std::uint64_t>(static_cast<unsigned char>(s[i + 1])) << 8) |
                              static_cast<std::uint64_t>(static_cast<unsigned char>(s[i + 2]));
    raw.emplace_back(key, 1.0);
  }
  return Embedding::normalized(std::move(raw));
}

// ---------------------------------------------------------------------------
// Labels

std::string apply_template(std::string_view tmpl, std::string_view text) {
  const auto open = tmpl.find('{');
  const auto close = open == std::string_view::npos ? open : tmpl.find('}', open);
  if (close == std::string_view::npos) return std::string(tmpl) + " " + std::string(text);
  return std::string(tmpl.substr(0, open)) + std::string(text) + std::string(tmpl.substr(close + 1));
}

namespace {

void check_classes(const std::vector<std::string>& classes, std::string_view what) {
  if (classes.empty()) throw std::invalid_argument(std::string(what) + " class list is empty");
  std::set<std::string_view> seen;
  for (const auto& c : classes) {
    if (!seen.insert(c).second) {
      throw std::invalid_argument(std::string(what) + " class list repeats '" + c + "'");
    }
  }
}

}  // namespace

void LabelSpace::check() const {
  check_classes(object_classes, "object");
  check_classes(predicate_classes, "predicate");
}

std::vector<std::string> load_class_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open class list '" + path + "'");
  std::vector<std::string> classes;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    std::size_t start = 0;
    while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) ++start;
    if (start < line.size()) classes.push_back(line.substr(start));
  }
  check_classes(classes, path);
  return classes;
}

LabelAssigner::LabelAssigner(std::span<const std::string> classes, std::string_view tmpl,
                             const SimilarityProvider& provider)
    : classes_(classes.begin(), classes.end()), template_(tmpl), provider_(provider) {
  if (classes_.empty()) throw std::invalid_argument("cannot assign labels from an empty class list");
  class_embeddings_.reserve(classes_.size());
  for (const auto& c : classes_) class_embeddings_.push_back(provider_.embed(apply_template(template_, c)));
}

std::size_t LabelAssigner::assign(std::string_view text) const {
  const std::string phrase = apply_template(template_, text);
  const Embedding e = provider_.embed(phrase);
  std::size_t best = 0;
  double best_score = -2.0;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    double score;
    if (e.zero() || class_embeddings_[i].zero()) {
      score = phrase == apply_template(template_, classes_[i]) ? 1.0 : 0.0;
    } else {
      score = std::clamp(dot(e, class_embeddings_[i]), -1.0, 1.0);
    }
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

std::size_t assign_label(std::string_view text, std::span<const std::string> classes, std::string_view tmpl,
                         const SimilarityProvider& provider) {
  if (classes.empty()) throw std::invalid_argument("cannot assign labels from an empty class list");
  const std::string phrase = apply_template(tmpl, text);
  std::size_t best = 0;
  double best_score = -2.0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const double score = provider.similarity(phrase, apply_template(tmpl, classes[i]));
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Triplet matching

namespace {

struct LabeledTriplet {
  BBox subject_box;
  BBox object_box;
  std::size_t subject_label;
  std::size_t predicate_label;
  std::size_t object_label;
};

std::vector<LabeledTriplet> label_triplets(const SceneGraph& graph, std::size_t limit,
                                           const LabelAssigner& objects, const LabelAssigner& predicates) {
  std::map<int, std::size_t> region_labels;
  std::vector<LabeledTriplet> out;
  auto region_label = [&](const Region& r) {
    auto it = region_labels.find(r.id);
    if (it == region_labels.end()) it = region_labels.emplace(r.id, objects.assign(r.name)).first;
    return it->second;
  };
  for (std::size_t i = 0; i < graph.relations.size() && out.size() < limit; ++i) {
    const Relation& rel = graph.relations[i];
    const Region* s = graph.find_region(rel.subject_id);
    const Region* o = graph.find_region(rel.object_id);
    if (s == nullptr || o == nullptr) {
      throw StructuralError("relation references a missing region in image '" + graph.image_id + "'");
    }
    out.push_back(LabeledTriplet{s->bbox, o->bbox, region_label(*s), predicates.assign(rel.predicate),
                                 region_label(*o)});
  }
  return out;
}

}  // namespace

MatchResult match_triplets(const SceneGraph& predicted, const SceneGraph& gt, std::size_t k,
                           const LabelSpace& labels, const SimilarityProvider& provider) {
  if (k == 0) throw std::invalid_argument("k must be positive");
  if (gt.relations.empty()) throw std::invalid_argument("ground truth of image '" + gt.image_id + "' has no triplets");
  labels.check();
  const LabelAssigner objects(labels.object_classes, labels.object_template, provider);
  const LabelAssigner predicates(labels.predicate_classes, labels.predicate_template, provider);

  const auto preds = label_triplets(predicted, k, objects, predicates);
  const auto truth = label_triplets(gt, gt.relations.size(), objects, predicates);

  MatchResult result;
  result.predictions_considered = preds.size();
  result.total = truth.size();
  std::vector<bool> used(preds.size(), false);
  for (const auto& t : truth) {
    TripletMatch m;
    for (std::size_t p = 0; p < preds.size(); ++p) {
      if (used[p]) continue;
      const auto& c = preds[p];
      if (c.subject_label == t.subject_label && c.predicate_label == t.predicate_label &&
          c.object_label == t.object_label && geometry::iou_box(c.subject_box, t.subject_box) > kMatchIou &&
          geometry::iou_box(c.object_box, t.object_box) > kMatchIou) {
        used[p] = true;
        m.matched = true;
        m.prediction = p;
        break;
      }
    }
    auto& pr = result.per_predicate[predicates.label(t.predicate_label)];
    ++pr.total;
    if (m.matched) {
      ++pr.matched;
      ++result.matched;
    }
    result.gt.push_back(m);
  }
  result.recall_at_k = static_cast<double>(result.matched) / static_cast<double>(result.total);
  double sum = 0.0;
  for (const auto& [_, pr] : result.per_predicate) sum += pr.recall();
  result.mean_recall_at_k = sum / static_cast<double>(result.per_predicate.size());
  return result;
}

DatasetScore score_dataset(std::span<const std::pair<SceneGraph, SceneGraph>> pairs, std::size_t k,
                           const LabelSpace& labels, const SimilarityProvider& provider) {
  DatasetScore score;
  std::size_t predicted_total = 0;
  std::size_t scored_images = 0;
  double image_mr_sum = 0.0;
  for (const auto& [pred, gt] : pairs) {
    ImageScore image{gt.image_id, pred.relations.size(), std::nullopt};
    predicted_total += pred.relations.size();
    if (!gt.relations.empty()) {
      image.result = match_triplets(pred, gt, k, labels, provider);
      score.matched += image.result->matched;
      score.total += image.result->total;
      for (const auto& [label, pr] : image.result->per_predicate) {
        score.per_predicate[label].matched += pr.matched;
        score.per_predicate[label].total += pr.total;
      }
      image_mr_sum += image.result->mean_recall_at_k;
      ++scored_images;
    }
    score.images.push_back(std::move(image));
  }
  if (score.total > 0) score.recall_at_k = static_cast<double>(score.matched) / static_cast<double>(score.total);
  if (!score.per_predicate.empty()) {
    double sum = 0.0;
    for (const auto& [_, pr] : score.per_predicate) sum += pr.recall();
    score.mean_recall_at_k = sum / static_cast<double>(score.per_predicate.size());
  }
  if (scored_images > 0) score.per_image_mean_recall = image_mr_sum / static_cast<double>(scored_images);
  if (!pairs.empty()) {
    score.mean_predicted_relations = static_cast<double>(predicted_total) / static_cast<double>(pairs.size());
  }
  return score;
}

double region_classification_ss(std::span<const std::string> predicted_texts,
                                std::span<const std::string> gt_classes, const SimilarityProvider& provider) {
  if (predicted_texts.size() != gt_classes.size()) {
    throw std::invalid_argument("prediction and ground-truth lists differ in length");
  }
  if (predicted_texts.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted_texts.size(); ++i) {
    sum += provider.similarity(predicted_texts[i], gt_classes[i]);
  }
  return sum / static_cast<double>(predicted_texts.size());
}

}  // namespace svg::eval
