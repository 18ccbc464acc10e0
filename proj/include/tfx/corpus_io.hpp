#pragma once
// tfx-corpus/1: a JSON header line followed by one JSON record per sample.
//
//   {"format":"tfx-corpus/1","L":10,"pl_max":1460,"labels":["a","b"],"provenance":"real"}
//   {"label":0,"len":3,"pl":[300,-1460,50,0,0,0,0,0,0,0]}
//
// The writer is canonical, so read-then-write reproduces a file byte for byte.

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "tfx/core.hpp"

namespace tfx {

inline constexpr const char* kCorpusFormat = "tfx-corpus/1";

struct CorpusFile {
  Corpus corpus;
  /// Free-form provenance details (augmenter kind, generator, rejection counts).
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
};

inline void write_corpus(std::ostream& out, const Corpus& corpus,
                         const nlohmann::ordered_json& meta = nlohmann::ordered_json::object()) {
  nlohmann::ordered_json header;
  header["format"] = kCorpusFormat;
  header["L"] = corpus.space.length();
  header["pl_max"] = corpus.space.pl_max();
  header["labels"] = corpus.space.names();
  header["provenance"] = to_string(corpus.provenance);
  if (!meta.empty()) header["meta"] = meta;
  out << header.dump() << '\n';
  for (const auto& s : corpus.samples) {
    nlohmann::ordered_json rec;
    rec["label"] = s.label();
    rec["len"] = s.effective_length();
    rec["pl"] = s.values();
    out << rec.dump() << '\n';
  }
}

inline CorpusFile read_corpus(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("corpus file is empty");
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corpus header is not JSON: ") + e.what());
  }
  if (header.value("format", "") != kCorpusFormat)
    throw DataError("corpus header format is not tfx-corpus/1");
  CorpusFile file;
  try {
    file.corpus.space = LabelSpace(header.at("labels").get<std::vector<std::string>>(),
                                   header.at("L").get<int>(), header.at("pl_max").get<int>());
    file.corpus.provenance = provenance_from_string(header.value("provenance", "real"));
    if (header.contains("meta")) file.meta = header["meta"];
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad corpus header: ") + e.what());
  }
  const auto& space = file.corpus.space;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const int label = rec.at("label").get<int>();
      if (!space.contains(label)) throw DataError("label outside label space");
      auto values = rec.at("pl").get<std::vector<int>>();
      if (static_cast<int>(values.size()) != space.length()) throw DataError("pl array length != L");
      auto tm = TrafficMatrix::from_values(std::move(values), label, space.pl_max());
      if (rec.at("len").get<int>() != tm.effective_length())
        throw DataError("len disagrees with sentinel padding");
      file.corpus.samples.push_back(std::move(tm));
    } catch (const std::exception& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return file;
}

inline void save_corpus(const std::string& path, const Corpus& corpus,
                        const nlohmann::ordered_json& meta = nlohmann::ordered_json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_corpus(out, corpus, meta);
}

inline CorpusFile load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return read_corpus(in);
}

}  // namespace tfx
