#include "layoutgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "layoutgen/errors.hpp"
#include "layoutgen/io.hpp"
#include "layoutgen/optim.hpp"
#include "layoutgen/rng.hpp"

namespace layoutgen {

using num::Tensor;

std::vector<std::size_t> tokenize_layout(const LayoutDocument& doc, const TokenizerConfig& cfg) {
  const std::size_t g = static_cast<std::size_t>(cfg.grid);
  const std::vector<std::size_t> order = canonical_reading_order(doc);
  std::vector<std::size_t> tokens;
  tokens.reserve(order.size() + 1);
  for (std::size_t idx : order) {
    const LayoutElement& e = doc.elements[idx];
    const auto cell = [&](double c) {
      return std::min(g - 1, static_cast<std::size_t>(std::max(0.0, std::floor(c * static_cast<double>(g)))));
    };
    const std::size_t col = cell(e.cx());
    const std::size_t row = cell(e.cy());
    tokens.push_back(static_cast<std::size_t>(e.type) * g * g + row * g + col);
  }
  tokens.push_back(cfg.eod_token());
  return tokens;
}

BigramModel::BigramModel(std::size_t vocab, double alpha)
    : vocab_(vocab), alpha_(alpha), counts_(vocab * vocab, 0), row_sums_(vocab, 0) {
  if (vocab < 1) throw InvalidInputError("bigram model: vocabulary must be non-empty");
  if (alpha < 0.0) throw InvalidInputError("bigram model: alpha must be >= 0");
}

double BigramModel::cond_prob(std::size_t prev, std::size_t next) const {
  const double num = static_cast<double>(counts_[prev * vocab_ + next]) + alpha_;
  const double den = static_cast<double>(row_sums_[prev]) + alpha_ * static_cast<double>(vocab_);
  return den > 0.0 ? num / den : 0.0;
}

BigramModel fit_bigram(const std::vector<std::vector<std::size_t>>& sequences, std::size_t vocab,
                       double alpha) {
  if (sequences.empty()) throw InvalidInputError("fit_bigram: empty corpus");
  BigramModel model(vocab, alpha);
  const std::size_t start = vocab - 1;  // EOD doubles as the start state
  for (const auto& seq : sequences) {
    std::size_t prev = start;
    for (std::size_t tok : seq) {
      if (tok >= vocab) throw InvalidInputError("fit_bigram: token id out of vocabulary");
      model.observe(prev, tok);
      prev = tok;
    }
  }
  return model;
}

double sequence_perplexity(const BigramModel& model,
                           const std::vector<std::vector<std::size_t>>& eval_sequences) {
  if (eval_sequences.empty()) throw InvalidInputError("perplexity: empty evaluation set");
  const std::size_t start = model.vocab() - 1;
  double log_sum = 0.0;
  std::size_t tokens = 0;
  for (const auto& seq : eval_sequences) {
    std::size_t prev = start;
    for (std::size_t tok : seq) {
      const double p = model.cond_prob(prev, tok);
      if (p <= 0.0) throw InvalidInputError("infinite perplexity; use smoothing");
      log_sum += std::log(p);
      ++tokens;
      prev = tok;
    }
  }
  return std::exp(-log_sum / static_cast<double>(tokens));
}

PerplexityReport layout_perplexity(const std::vector<LayoutDocument>& fit,
                                   const std::vector<LayoutDocument>& eval,
                                   const TokenizerConfig& cfg, double alpha) {
  std::vector<std::vector<std::size_t>> fit_seqs, eval_seqs;
  fit_seqs.reserve(fit.size());
  eval_seqs.reserve(eval.size());
  for (const auto& d : fit) fit_seqs.push_back(tokenize_layout(d, cfg));
  for (const auto& d : eval) eval_seqs.push_back(tokenize_layout(d, cfg));
  const BigramModel model = fit_bigram(fit_seqs, cfg.vocab_size(), alpha);

  PerplexityReport report;
  report.perplexity = sequence_perplexity(model, eval_seqs);
  for (const auto& s : eval_seqs) report.token_count += s.size();
  report.fit_set_size = fit.size();
  report.eval_set_size = eval.size();
  report.grid = cfg.grid;
  report.alpha = alpha;
  return report;
}

std::string perplexity_report_to_text(const PerplexityReport& r) {
  std::string out = "{\n";
  out += "  \"perplexity\": " + format_real(r.perplexity) + ",\n";
  out += "  \"token_count\": " + std::to_string(r.token_count) + ",\n";
  out += "  \"fit_set_size\": " + std::to_string(r.fit_set_size) + ",\n";
  out += "  \"eval_set_size\": " + std::to_string(r.eval_set_size) + ",\n";
  out += "  \"config\": {\"grid\": " + std::to_string(r.grid) +
         ", \"alpha\": " + format_real(r.alpha) + "}\n";
  out += "}\n";
  return out;
}

DiversityStats diversity_stats(const std::vector<LayoutDocument>& layouts,
                               const TokenizerConfig& cfg) {
  if (layouts.empty()) throw InvalidInputError("diversity_stats: empty layout list");
  DiversityStats stats;
  stats.type_histogram.assign(kElementTypeCount, 0);
  std::set<std::vector<std::size_t>> multisets;
  for (const auto& doc : layouts) {
    for (const auto& e : doc.elements) ++stats.type_histogram[static_cast<std::size_t>(e.type)];
    ++stats.count_histogram[doc.elements.size()];
    std::vector<std::size_t> tokens = tokenize_layout(doc, cfg);
    std::sort(tokens.begin(), tokens.end());
    multisets.insert(std::move(tokens));
  }
  stats.distinct_token_multisets = multisets.size();
  return stats;
}

namespace {

Tensor count_vector(const LayoutDocument& doc, const TokenizerConfig& cfg) {
  Tensor v = Tensor::zeros({cfg.vocab_size()});
  for (std::size_t tok : tokenize_layout(doc, cfg)) v.at(tok) += 1.0;
  return v;
}

std::vector<std::string> sorted_classes(const std::vector<LayoutDocument>& docs) {
  std::set<std::string> names;
  for (const auto& d : docs) {
    if (!d.label) throw InvalidInputError("classifier: document \"" + d.id + "\" has no label");
    names.insert(*d.label);
  }
  return {names.begin(), names.end()};
}

std::size_t class_index(const std::vector<std::string>& classes, const std::string& label) {
  const auto it = std::lower_bound(classes.begin(), classes.end(), label);
  if (it == classes.end() || *it != label)
    throw InvalidInputError("classifier: unknown label \"" + label + "\"");
  return static_cast<std::size_t>(it - classes.begin());
}

}  // namespace

Classifier train_classifier(const std::vector<LayoutDocument>& docs, const ClassifierConfig& cfg) {
  if (docs.empty()) throw InvalidInputError("classifier: empty training set");
  Classifier clf;
  clf.cfg = cfg;
  clf.classes = sorted_classes(docs);
  if (clf.classes.size() < 2)
    throw InvalidInputError("classifier: need at least 2 classes, got " +
                            std::to_string(clf.classes.size()));

  const std::size_t v = cfg.tokenizer.vocab_size();
  const std::size_t c = clf.classes.size();
  const std::size_t n = docs.size();

  struct Example {
    std::vector<double> features;
    std::size_t label;
  };
  std::vector<Example> examples;
  examples.reserve(n);
  for (const auto& d : docs)
    examples.push_back(Example{count_vector(d, cfg.tokenizer).raw(), class_index(clf.classes, *d.label)});
  // Canonical example order makes full-batch training independent of the
  // caller's ordering, bit for bit.
  std::sort(examples.begin(), examples.end(), [](const Example& a, const Example& b) {
    if (a.features != b.features) return a.features < b.features;
    return a.label < b.label;
  });

  Tensor x = Tensor::zeros({n, v});
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(examples[i].features.begin(), examples[i].features.end(), x.data() + i * v);
    labels[i] = examples[i].label;
  }

  num::ParamStore store;
  num::Rng rng(cfg.seed);
  Tensor w0 = Tensor::zeros({v, c});
  for (std::size_t i = 0; i < w0.numel(); ++i) w0.at(i) = rng.uniform(-0.01, 0.01);
  store.add("W", std::move(w0));
  store.add("b", Tensor::zeros({c}));

  for (int it = 0; it < cfg.iterations; ++it) {
    num::Tape t;
    num::Var wv = t.param(store, "W");
    num::Var bv = t.param(store, "b");
    num::Var probs = t.softmax_rows(t.affine(t.leaf(x), wv, bv));
    num::Var loss = t.scale(t.cross_entropy_rows(probs, labels), 1.0 / static_cast<double>(n));
    t.backward(loss);
    num::sgd_step(store, cfg.lr);
  }

  clf.weights = store.value("W");
  clf.bias = store.value("b");
  return clf;
}

std::string classify(const Classifier& clf, const LayoutDocument& doc) {
  const Tensor x = count_vector(doc, clf.cfg.tokenizer);
  const std::size_t c = clf.classes.size();
  std::size_t best = 0;
  double best_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < c; ++j) {
    double logit = clf.bias.at(j);
    for (std::size_t k = 0; k < x.numel(); ++k)
      if (x.at(k) != 0.0) logit += x.at(k) * clf.weights.at(k, j);
    if (logit > best_logit) {
      best_logit = logit;
      best = j;
    }
  }
  return clf.classes[best];
}

double accuracy(const Classifier& clf, const std::vector<LayoutDocument>& docs) {
  if (docs.empty()) throw InvalidInputError("accuracy: empty evaluation set");
  std::size_t correct = 0;
  for (const auto& d : docs) {
    if (!d.label) throw InvalidInputError("accuracy: document \"" + d.id + "\" has no label");
    if (classify(clf, d) == *d.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(docs.size());
}

std::vector<LayoutDocument> label_synthetic(const std::vector<LayoutDocument>& real_train,
                                            const std::vector<LayoutDocument>& synthetic,
                                            const TokenizerConfig& cfg) {
  const std::vector<std::string> classes = sorted_classes(real_train);
  const std::size_t v = cfg.vocab_size();
  std::vector<Tensor> centroids(classes.size(), Tensor::zeros({v}));
  std::vector<std::size_t> counts(classes.size(), 0);
  for (const auto& d : real_train) {
    const std::size_t ci = class_index(classes, *d.label);
    axpy(centroids[ci], count_vector(d, cfg));
    ++counts[ci];
  }
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    if (counts[ci] == 0) continue;
    for (std::size_t k = 0; k < v; ++k) centroids[ci].at(k) /= static_cast<double>(counts[ci]);
  }

  auto cosine = [](const Tensor& a, const Tensor& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < a.numel(); ++k) {
      dot += a.at(k) * b.at(k);
      na += a.at(k) * a.at(k);
      nb += b.at(k) * b.at(k);
    }
    const double den = std::sqrt(na) * std::sqrt(nb);
    return den > 0.0 ? dot / den : 0.0;
  };

  std::vector<LayoutDocument> out = synthetic;
  for (auto& d : out) {
    const Tensor x = count_vector(d, cfg);
    std::size_t best = 0;
    double best_sim = -2.0;
    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
      const double sim = cosine(x, centroids[ci]);
      if (sim > best_sim) {  // strict: ties keep the lowest class index
        best_sim = sim;
        best = ci;
      }
    }
    d.label = classes[best];
  }
  return out;
}

EvalReport compare_augmentation(const std::vector<LayoutDocument>& real_train,
                                const std::vector<LayoutDocument>& synthetic,
                                const std::vector<LayoutDocument>& test,
                                const std::vector<std::uint64_t>& seeds,
                                const TokenizerConfig& cfg) {
  if (test.empty()) throw InvalidInputError("compare_augmentation: empty test set");
  if (seeds.empty()) throw InvalidInputError("compare_augmentation: no seeds");

  std::vector<LayoutDocument> augmented = real_train;
  if (!synthetic.empty()) {
    const std::vector<LayoutDocument> labeled = label_synthetic(real_train, synthetic, cfg);
    augmented.insert(augmented.end(), labeled.begin(), labeled.end());
  }

  EvalReport report;
  report.seeds = seeds;
  EvalCondition cond_a{"real_only", {}, 0.0, 0.0};
  EvalCondition cond_b{"real_plus_synthetic", {}, 0.0, 0.0};
  for (std::uint64_t seed : seeds) {
    ClassifierConfig ccfg;
    ccfg.tokenizer = cfg;
    ccfg.seed = seed;
    cond_a.accuracies.push_back(accuracy(train_classifier(real_train, ccfg), test));
    cond_b.accuracies.push_back(accuracy(train_classifier(augmented, ccfg), test));
  }
  for (EvalCondition* cond : {&cond_a, &cond_b}) {
    double sum = 0.0;
    for (double a : cond->accuracies) sum += a;
    cond->mean = sum / static_cast<double>(cond->accuracies.size());
    double sq = 0.0;
    for (double a : cond->accuracies) sq += (a - cond->mean) * (a - cond->mean);
    cond->stddev = std::sqrt(sq / static_cast<double>(cond->accuracies.size()));
  }
  report.conditions = {std::move(cond_a), std::move(cond_b)};
  return report;
}

std::string eval_report_to_text(const EvalReport& r) {
  std::string out = "{\n";
  out += "  \"seeds\": [";
  for (std::size_t i = 0; i < r.seeds.size(); ++i)
    out += (i ? ", " : "") + std::to_string(r.seeds[i]);
  out += "],\n";
  out += "  \"conditions\": [\n";
  for (std::size_t ci = 0; ci < r.conditions.size(); ++ci) {
    const EvalCondition& c = r.conditions[ci];
    out += "    {\"name\": \"" + c.name + "\", \"accuracies\": [";
    for (std::size_t i = 0; i < c.accuracies.size(); ++i)
      out += (i ? ", " : "") + format_real(c.accuracies[i]);
    out += "], \"mean\": " + format_real(c.mean) + ", \"std\": " + format_real(c.stddev) + "}";
    out += ci + 1 < r.conditions.size() ? ",\n" : "\n";
  }
  out += "  ]\n}\n";
  return out;
}

std::vector<LayoutDocument> jitter_baseline(const std::vector<LayoutDocument>& real_train,
                                            double magnitude, std::size_t n, std::uint64_t seed) {
  if (real_train.empty()) throw InvalidInputError("jitter_baseline: empty source corpus");
  if (magnitude < 0.0) throw InvalidInputError("jitter_baseline: magnitude must be >= 0");
  num::Rng rng(seed);
  std::vector<LayoutDocument> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t idx = rng.next_u64() % real_train.size();
    LayoutDocument doc = real_train[idx];
    doc.id = "jitter-" + std::to_string(seed) + "-" + std::to_string(k);
    for (auto& e : doc.elements) {
      for (double& c : e.bbox) c += rng.uniform(-magnitude, magnitude);
      e.bbox = clamp_bbox(e.bbox);
    }
    out.push_back(std::move(doc));
  }
  return out;
}

}  // namespace layoutgen
