#pragma once
// Token modality: vocabulary layout, TrafficMatrix <-> TokenSequence mapping
// and the tfx-tokens/1 file format.

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfx/core.hpp"

namespace tfx {

/// Token id layout: 0 = PAD, 1 = EOS, 2..2+N-1 = CLASS tokens, then the
/// signed payload lengths -pl_max..-1 followed by +1..+pl_max.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;

  Vocabulary() = default;
  Vocabulary(int pl_max, int n_classes, int length = kDefaultLength)
      : pl_max_(pl_max), n_classes_(n_classes), length_(length) {
    if (pl_max < 1 || n_classes < 1 || length < 1)
      throw ConfigError("vocabulary needs pl_max, N and L >= 1");
  }
  explicit Vocabulary(const LabelSpace& space)
      : Vocabulary(space.pl_max(), space.size(), space.length()) {}

  int pl_max() const { return pl_max_; }
  int n_classes() const { return n_classes_; }
  int length() const { return length_; }
  int size() const { return 2 * pl_max_ + n_classes_ + 2; }
  /// Sequence length: CLASS prompt, L body positions, EOS.
  int sequence_length() const { return length_ + 2; }
  int first_value_token() const { return 2 + n_classes_; }
  /// Number of sampleable next tokens: all signed values plus EOS.
  int next_alphabet_size() const { return 2 * pl_max_ + 1; }

  int class_token(int class_id) const {
    if (class_id < 0 || class_id >= n_classes_)
      throw DataError("class id " + std::to_string(class_id) + " outside vocabulary");
    return 2 + class_id;
  }
  bool is_class(int id) const { return id >= 2 && id < 2 + n_classes_; }
  int class_of(int id) const { return id - 2; }
  bool is_value(int id) const { return id >= first_value_token() && id < size(); }
  bool contains(int id) const { return id >= 0 && id < size(); }

  int token_of_value(int v) const {
    if (v == 0 || v < -pl_max_ || v > pl_max_)
      throw DataError("value " + std::to_string(v) + " outside +-pl_max");
    return v < 0 ? first_value_token() + (v + pl_max_) : first_value_token() + pl_max_ + (v - 1);
  }
  int value_of_token(int id) const {
    const int off = id - first_value_token();
    return off < pl_max_ ? off - pl_max_ : off - pl_max_ + 1;
  }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  int pl_max_ = kDefaultPlMax;
  int n_classes_ = 1;
  int length_ = kDefaultLength;
};

/// Token ids laid out as [CLASS, pl_1..pl_n, EOS, PAD...], length L+2.
struct TokenSequence {
  std::vector<int> ids;
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

inline TokenSequence matrix_to_tokens(const TrafficMatrix& tm, const Vocabulary& vocab) {
  if (tm.length() != vocab.length()) throw DataError("matrix length differs from vocabulary L");
  TokenSequence seq;
  seq.ids.assign(static_cast<std::size_t>(vocab.sequence_length()), Vocabulary::kPad);
  seq.ids[0] = vocab.class_token(tm.label());
  const auto data = tm.data();
  for (std::size_t i = 0; i < data.size(); ++i) seq.ids[i + 1] = vocab.token_of_value(data[i]);
  seq.ids[data.size() + 1] = Vocabulary::kEos;
  return seq;
}

/// True when `seq` satisfies every layout invariant of TokenSequence.
inline bool is_well_formed(const TokenSequence& seq, const Vocabulary& vocab) {
  const auto& ids = seq.ids;
  if (static_cast<int>(ids.size()) != vocab.sequence_length() || !vocab.is_class(ids[0])) return false;
  std::size_t i = 1;
  while (i < ids.size() && vocab.is_value(ids[i])) ++i;
  if (i == 1 || i >= ids.size() || ids[i] != Vocabulary::kEos) return false;
  for (++i; i < ids.size(); ++i)
    if (ids[i] != Vocabulary::kPad) return false;
  return true;
}

struct DecodedSample {
  enum class Status { ok, repaired, rejected };
  Status status = Status::rejected;
  std::optional<TrafficMatrix> matrix;
  std::string reason;
};

/// Non-throwing inverse mapping with the repair policy for generated
/// sequences: the body ends at the first EOS, PAD or CLASS token after the
/// prompt, and at most L values are kept.
inline DecodedSample decode_tokens(const TokenSequence& seq, const Vocabulary& vocab) {
  DecodedSample out;
  const auto& ids = seq.ids;
  if (ids.empty() || !vocab.is_class(ids[0])) {
    out.reason = "sequence does not start with a CLASS token";
    return out;
  }
  for (int id : ids)
    if (!vocab.contains(id)) {
      out.reason = "unknown token id " + std::to_string(id);
      return out;
    }
  std::vector<int> data;
  bool repaired = static_cast<int>(ids.size()) != vocab.sequence_length();
  std::size_t i = 1;
  for (; i < ids.size() && vocab.is_value(ids[i]); ++i) {
    if (static_cast<int>(data.size()) == vocab.length()) {
      repaired = true;
      break;
    }
    data.push_back(vocab.value_of_token(ids[i]));
  }
  if (data.empty()) {
    out.reason = "no payload-length token before termination";
    return out;
  }
  if (!repaired) {
    if (i >= ids.size() || ids[i] != Vocabulary::kEos) {
      repaired = true;
    } else {
      for (std::size_t j = i + 1; j < ids.size(); ++j)
        if (ids[j] != Vocabulary::kPad) repaired = true;
    }
  }
  out.matrix = TrafficMatrix::from_data(data, vocab.length(), vocab.class_of(ids[0]), vocab.pl_max());
  out.status = repaired ? DecodedSample::Status::repaired : DecodedSample::Status::ok;
  return out;
}

/// Throwing inverse mapping; rejected sequences raise RejectedSample.
inline TrafficMatrix tokens_to_matrix(const TokenSequence& seq, const Vocabulary& vocab) {
  auto d = decode_tokens(seq, vocab);
  if (!d.matrix) throw RejectedSample(d.reason);
  return *std::move(d.matrix);
}

inline constexpr const char* kTokenFormat = "tfx-tokens/1";

inline void write_token_file(std::ostream& out, const Vocabulary& vocab,
                             const std::vector<TokenSequence>& seqs) {
  nlohmann::ordered_json header;
  header["format"] = kTokenFormat;
  header["vocab"] = {{"pl_max", vocab.pl_max()}, {"N", vocab.n_classes()}, {"L", vocab.length()}};
  out << header.dump() << '\n';
  for (const auto& s : seqs) {
    for (std::size_t i = 0; i < s.ids.size(); ++i) out << (i ? " " : "") << s.ids[i];
    out << '\n';
  }
}

struct TokenFile {
  Vocabulary vocab;
  std::vector<TokenSequence> sequences;
  std::size_t unparsable_lines = 0;
};

inline TokenFile read_token_file(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("token file is empty");
  TokenFile file;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != kTokenFormat) throw DataError("header format is not tfx-tokens/1");
    const auto& v = header.at("vocab");
    file.vocab = Vocabulary(v.at("pl_max").get<int>(), v.at("N").get<int>(), v.at("L").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad token file header: ") + e.what());
  }
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    TokenSequence seq;
    std::string tok;
    bool ok = true;
    while (ls >> tok) {
      try {
        std::size_t pos = 0;
        const long v = std::stol(tok, &pos);
        if (pos != tok.size() || v < INT32_MIN || v > INT32_MAX) ok = false;
        seq.ids.push_back(static_cast<int>(v));
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      ++file.unparsable_lines;
      continue;
    }
    file.sequences.push_back(std::move(seq));
  }
  return file;
}

}  // namespace tfx
