#pragma once
// Bridge for token sequences produced by external generators.

#include <fstream>
#include <string>
#include <vector>

#include "tfx/core.hpp"
#include "tfx/representation.hpp"

namespace tfx {

struct ImportReport {
  std::size_t lines = 0;
  std::size_t accepted = 0;
  std::size_t repaired = 0;
  std::size_t rejected = 0;
};

/// Validates and repairs every sequence of a tfx-tokens/1 stream against the
/// pipeline vocabulary. Lines that cannot be decoded are counted as rejected.
inline Corpus import_external(std::istream& in, const LabelSpace& space, ImportReport* report = nullptr) {
  const Vocabulary vocab(space);
  auto file = read_token_file(in);
  std::vector<std::string> diffs;
  if (file.vocab.pl_max() != vocab.pl_max())
    diffs.push_back("pl_max " + std::to_string(file.vocab.pl_max()) + " != " + std::to_string(vocab.pl_max()));
  if (file.vocab.n_classes() != vocab.n_classes())
    diffs.push_back("N " + std::to_string(file.vocab.n_classes()) + " != " + std::to_string(vocab.n_classes()));
  if (file.vocab.length() != vocab.length())
    diffs.push_back("L " + std::to_string(file.vocab.length()) + " != " + std::to_string(vocab.length()));
  if (!diffs.empty()) {
    std::string msg = "token file vocabulary mismatch:";
    for (const auto& d : diffs) msg += " " + d + ";";
    throw DataError(msg);
  }
  ImportReport rep;
  rep.lines = file.sequences.size() + file.unparsable_lines;
  rep.rejected = file.unparsable_lines;
  Corpus out{space, {}, Provenance::synthetic};
  for (const auto& seq : file.sequences) {
    auto d = decode_tokens(seq, vocab);
    if (!d.matrix) {
      ++rep.rejected;
      continue;
    }
    if (d.status == DecodedSample::Status::repaired) ++rep.repaired;
    ++rep.accepted;
    out.samples.push_back(*std::move(d.matrix));
  }
  if (report) *report = rep;
  return out;
}

inline Corpus import_external(const std::string& path, const LabelSpace& space, ImportReport* report = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open token file " + path);
  return import_external(in, space, report);
}

}  // namespace tfx
