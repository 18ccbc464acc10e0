#pragma once
// Output manifests: config hash, seed, tool version and SHA-256 digests of
// inputs and outputs.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfx/core.hpp"

#ifndef TFX_VERSION
#define TFX_VERSION "0.1.0"
#endif

namespace tfx {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  }
  void update(const void* p, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), p, n) != 1) throw Error("SHA-256 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) throw Error("SHA-256 final failed");
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
      out += digits[md[i] >> 4];
      out += digits[md[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline std::string sha256_hex(const std::string& data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

struct Manifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // (path as given, digest)

  std::vector<std::string> outputs;  // relative to the output directory

  void add_input(const std::string& path) { inputs.emplace_back(path, sha256_file(path)); }
  void add_output(const std::string& rel) { outputs.push_back(rel); }

  /// Registers every regular file under `dir` except manifests.
  void add_outputs_under(const std::filesystem::path& dir) {
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
      if (e.is_regular_file() && e.path().filename() != "manifest.json")
        outputs.push_back(std::filesystem::relative(e.path(), dir).generic_string());
  }

  nlohmann::ordered_json to_json(const std::filesystem::path& dir) const {
    nlohmann::ordered_json j;
    j["tool"] = "tfx";
    j["version"] = TFX_VERSION;
    j["command"] = command;
    j["config_sha256"] = config_hash;
    j["seed"] = seed;
    auto& in = j["inputs"] = nlohmann::ordered_json::array();
    for (const auto& [p, d] : inputs) in.push_back({{"path", p}, {"sha256", d}});
    auto files = outputs;
    std::sort(files.begin(), files.end());
    files.erase(std::unique(files.begin(), files.end()), files.end());
    auto& out = j["outputs"] = nlohmann::ordered_json::array();
    for (const auto& f : files) out.push_back({{"path", f}, {"sha256", sha256_file(dir / f)}});
    return j;
  }

  void write(const std::filesystem::path& dir) const {
    std::ofstream o(dir / "manifest.json", std::ios::binary);
    if (!o) throw DataError("cannot write manifest in " + dir.string());
    o << to_json(dir).dump(2) << '\n';
  }
};

}  // namespace tfx
