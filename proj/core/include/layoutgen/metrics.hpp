#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "layoutgen/layout.hpp"
#include "layoutgen/tape.hpp"

namespace layoutgen {

struct TokenizerConfig {
  int grid = 8;

  // 8 type classes x grid^2 cells, plus one end-of-document token.
  std::size_t vocab_size() const {
    return static_cast<std::size_t>(kElementTypeCount) * static_cast<std::size_t>(grid) *
               static_cast<std::size_t>(grid) +
           1;
  }
  std::size_t eod_token() const { return vocab_size() - 1; }
};

// token = type_index * G^2 + row * G + col over the bbox center, elements in
// canonical reading order, EOD appended.
std::vector<std::size_t> tokenize_layout(const LayoutDocument& doc, const TokenizerConfig& cfg);

class BigramModel {
 public:
  BigramModel(std::size_t vocab, double alpha);

  void observe(std::size_t prev, std::size_t next) { ++counts_[prev * vocab_ + next]; ++row_sums_[prev]; }
  // Laplace-smoothed conditional P(next | prev).
  double cond_prob(std::size_t prev, std::size_t next) const;

  std::size_t vocab() const { return vocab_; }
  double alpha() const { return alpha_; }
  std::uint64_t count(std::size_t prev, std::size_t next) const { return counts_[prev * vocab_ + next]; }

 private:
  std::size_t vocab_;
  double alpha_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> row_sums_;
};

// Sequences are implicitly prefixed by a start state equal to the EOD token.
BigramModel fit_bigram(const std::vector<std::vector<std::size_t>>& sequences, std::size_t vocab,
                       double alpha);

struct PerplexityReport {
  double perplexity = 0.0;
  std::size_t token_count = 0;
  std::size_t fit_set_size = 0;
  std::size_t eval_set_size = 0;
  int grid = 8;
  double alpha = 1.0;
};

// exp(mean negative log-likelihood) of eval sequences under the model. With
// alpha = 0 an unseen pair is an error rather than an infinite result.
double sequence_perplexity(const BigramModel& model,
                           const std::vector<std::vector<std::size_t>>& eval_sequences);

// Fits on `fit` layouts (the synthetic side), evaluates held-out `eval`
// layouts (the real side); lower means the fitted layouts cover the real
// variability better.
PerplexityReport layout_perplexity(const std::vector<LayoutDocument>& fit,
                                   const std::vector<LayoutDocument>& eval,
                                   const TokenizerConfig& cfg, double alpha);

std::string perplexity_report_to_text(const PerplexityReport& report);

struct DiversityStats {
  std::vector<std::size_t> type_histogram;            // by ElementType index
  std::map<std::size_t, std::size_t> count_histogram; // element count -> docs
  std::size_t distinct_token_multisets = 0;
};

DiversityStats diversity_stats(const std::vector<LayoutDocument>& layouts,
                               const TokenizerConfig& cfg);

struct ClassifierConfig {
  TokenizerConfig tokenizer;
  int iterations = 500;
  double lr = 0.1;
  std::uint64_t seed = 0;
};

// Multinomial logistic regression over bag-of-token count vectors, trained
// full batch. Examples are canonically sorted before training, so the model is
// independent of input order.
struct Classifier {
  ClassifierConfig cfg;
  std::vector<std::string> classes;  // sorted label names
  num::Tensor weights;               // [V x C]
  num::Tensor bias;                  // [C]
};

Classifier train_classifier(const std::vector<LayoutDocument>& docs, const ClassifierConfig& cfg);
std::string classify(const Classifier& clf, const LayoutDocument& doc);
double accuracy(const Classifier& clf, const std::vector<LayoutDocument>& docs);

struct EvalCondition {
  std::string name;
  std::vector<double> accuracies;  // per seed
  double mean = 0.0;
  double stddev = 0.0;
};

struct EvalReport {
  std::vector<std::uint64_t> seeds;
  std::vector<EvalCondition> conditions;
};

// Labels synthetic layouts by the nearest class-template token histogram
// (cosine similarity over mean per-class count vectors of real_train; ties go
// to the lowest class index).
std::vector<LayoutDocument> label_synthetic(const std::vector<LayoutDocument>& real_train,
                                            const std::vector<LayoutDocument>& synthetic,
                                            const TokenizerConfig& cfg);

// Condition A: classifier on real_train alone. Condition B: real_train plus
// labeled synthetic. Both evaluated on test, once per seed.
EvalReport compare_augmentation(const std::vector<LayoutDocument>& real_train,
                                const std::vector<LayoutDocument>& synthetic,
                                const std::vector<LayoutDocument>& test,
                                const std::vector<std::uint64_t>& seeds,
                                const TokenizerConfig& cfg);

std::string eval_report_to_text(const EvalReport& report);

// Baseline augmentation: uniformly resampled real documents with every bbox
// coordinate jittered by uniform noise in [-magnitude, +magnitude], clamped.
std::vector<LayoutDocument> jitter_baseline(const std::vector<LayoutDocument>& real_train,
                                            double magnitude, std::size_t n, std::uint64_t seed);

}  // namespace layoutgen
