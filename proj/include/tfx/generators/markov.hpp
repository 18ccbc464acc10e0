#pragma once
// Class-conditioned order-k Markov token generator with additive smoothing
// over the next-token alphabet {signed values, EOS}.

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tfx/core.hpp"
#include "tfx/parallel.hpp"
#include "tfx/representation.hpp"
#include "tfx/rng.hpp"

namespace tfx {

struct MarkovHyperparams {
  int order = 2;
  double alpha = 1e-6;
};

class MarkovGenerator {
 public:
  using Context = std::vector<int>;

  struct Row {
    std::vector<std::pair<int, std::uint32_t>> counts;  // sorted by token id
    std::uint64_t total = 0;

    std::uint32_t count_of(int token) const {
      auto it = std::lower_bound(counts.begin(), counts.end(), std::pair{token, std::uint32_t{0}});
      return it != counts.end() && it->first == token ? it->second : 0;
    }
  };

  using Table = std::map<Context, Row>;

  MarkovGenerator() = default;
  MarkovGenerator(Vocabulary vocab, MarkovHyperparams hp, std::vector<Table> tables)
      : vocab_(vocab), hp_(hp), tables_(std::move(tables)) {}

  /// Counts every (context, next) pair of the corpus token sequences; the
  /// context of position t is the k tokens before it, PAD-filled on the left.
  static MarkovGenerator fit(const Corpus& corpus, const Vocabulary& vocab, MarkovHyperparams hp) {
    if (hp.order < 1) throw ConfigError("Markov order k must be >= 1");
    if (!(hp.alpha > 0.0)) throw ConfigError("Markov smoothing alpha must be > 0");
    if (vocab.n_classes() != corpus.space.size()) throw ConfigError("vocabulary N differs from label space");
    const auto counts = corpus.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c)
      if (counts[c] == 0) throw DataError("class '" + corpus.space.names()[c] + "' has no training samples");

    std::vector<std::map<Context, std::map<int, std::uint32_t>>> raw(counts.size());
    Context ctx(static_cast<std::size_t>(hp.order));
    for (const auto& s : corpus.samples) {
      const auto seq = matrix_to_tokens(s, vocab);
      const int last = s.effective_length() + 1;
      for (int t = 1; t <= last; ++t) {
        for (int j = 0; j < hp.order; ++j) {
          const int pos = t - hp.order + j;
          ctx[static_cast<std::size_t>(j)] = pos < 0 ? Vocabulary::kPad : seq.ids[static_cast<std::size_t>(pos)];
        }
        ++raw[static_cast<std::size_t>(s.label())][ctx][seq.ids[static_cast<std::size_t>(t)]];
      }
    }
    std::vector<Table> tables(counts.size());
    for (std::size_t c = 0; c < raw.size(); ++c)
      for (auto& [context, next] : raw[c]) {
        Row row;
        for (auto [tok, n] : next) {
          row.counts.emplace_back(tok, n);
          row.total += n;
        }
        tables[c].emplace(context, std::move(row));
      }
    return MarkovGenerator(vocab, hp, std::move(tables));
  }

  const Vocabulary& vocab() const { return vocab_; }
  const MarkovHyperparams& hyperparams() const { return hp_; }
  const std::vector<Table>& tables() const { return tables_; }

  /// Number of stored (context, next-token) count entries.
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tables_)
      for (const auto& [ctx, row] : t) n += row.counts.size();
    return n;
  }

  /// Smoothed P(next | context) for class `class_id`; zero outside the
  /// next-token alphabet.
  double probability(int class_id, const Context& context, int next) const {
    if (next != Vocabulary::kEos && !vocab_.is_value(next)) return 0.0;
    const auto& table = tables_.at(static_cast<std::size_t>(class_id));
    const double v = vocab_.next_alphabet_size();
    auto it = table.find(context);
    if (it == table.end()) return 1.0 / v;
    return (it->second.count_of(next) + hp_.alpha) / (static_cast<double>(it->second.total) + hp_.alpha * v);
  }

  /// The k-token context that conditions the first body position.
  Context initial_context(int class_id) const {
    Context ctx(static_cast<std::size_t>(hp_.order), Vocabulary::kPad);
    ctx.back() = vocab_.class_token(class_id);
    return ctx;
  }

  TokenSequence sample_one(int class_id, Rng& rng) const {
    const auto& table = tables_.at(static_cast<std::size_t>(class_id));
    const int seq_len = vocab_.sequence_length();
    TokenSequence seq;
    seq.ids.assign(static_cast<std::size_t>(seq_len), Vocabulary::kPad);
    seq.ids[0] = vocab_.class_token(class_id);
    Context ctx = initial_context(class_id);
    const double alphabet = vocab_.next_alphabet_size();
    int t = 1;
    for (; t <= vocab_.length(); ++t) {
      int next;
      auto it = table.find(ctx);
      const double observed = it == table.end() ? 0.0 : static_cast<double>(it->second.total);
      const double smoothing = hp_.alpha * alphabet;
      // Smoothed row = mixture of the empirical counts and a uniform draw.
      if (rng.uniform() * (observed + smoothing) < observed) {
        const auto& counts = it->second.counts;
        auto target = static_cast<std::uint64_t>(rng.below(it->second.total));
        std::size_t k = 0;
        while (target >= counts[k].second) target -= counts[k++].second;
        next = counts[k].first;
      } else {
        const auto u = static_cast<int>(rng.below(static_cast<std::uint64_t>(alphabet)));
        next = u == 0 ? Vocabulary::kEos : vocab_.first_value_token() + u - 1;
      }
      seq.ids[static_cast<std::size_t>(t)] = next;
      if (next == Vocabulary::kEos) break;
      std::rotate(ctx.begin(), ctx.begin() + 1, ctx.end());
      ctx.back() = next;
    }
    if (t > vocab_.length()) seq.ids[static_cast<std::size_t>(vocab_.length() + 1)] = Vocabulary::kEos;
    return seq;
  }

  /// Sample i uses the stream derive_seed(seed, class_id, i), so batches are
  /// identical for every thread count and partitioning.
  std::vector<TokenSequence> sample(int class_id, std::size_t count, std::uint64_t seed,
                                    unsigned threads = 1) const {
    (void)vocab_.class_token(class_id);
    std::vector<TokenSequence> out(count);
    parallel_for(count, threads, [&](std::size_t i) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(class_id), i));
      out[i] = sample_one(class_id, rng);
    });
    return out;
  }

 private:
  Vocabulary vocab_;
  MarkovHyperparams hp_;
  std::vector<Table> tables_;
};

}  // namespace tfx
