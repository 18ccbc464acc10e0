#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "tfx/workbench/commands.hpp"
#include "tfx/workbench/toy.hpp"

using namespace tfx;
namespace fs = std::filesystem;

namespace {

IniDocument ini(const std::string& text) {
  std::istringstream in(text);
  return IniDocument::parse(in, "t");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream o(p, std::ios::binary);
  o << s;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + TFX_CLI_PATH + "\" -q " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunContext quiet_ctx(const fs::path& out) {
  RunContext ctx;
  ctx.out = out;
  return ctx;
}

fs::path toy_trace(const fs::path& dir, std::size_t flows = 30) {
  fs::create_directories(dir);
  const auto p = dir / "trace.csv";
  std::ofstream o(p, std::ios::binary);
  write_csv(o, toy_events(separable_toy(flows), 3), true);
  return p;
}

}  // namespace

TEST(Ini, SectionsCommentsAndWhitespace) {
  const auto d = ini("# top\nseed_free = 1\n[run]\n  seed = 7 ; trailing\n\n[data]\nL=10\n");
  EXPECT_EQ(d.values().at("seed_free"), "1");
  EXPECT_EQ(d.values().at("run.seed"), "7");
  EXPECT_EQ(d.values().at("data.L"), "10");
  EXPECT_EQ(d.values().size(), 3u);
}

TEST(Ini, MalformedInputIsAConfigError) {
  EXPECT_THROW(ini("[run]\nseed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(ini("[run\n"), ConfigError);
  EXPECT_THROW(ini("[run]\nseed\n"), ConfigError);
  EXPECT_THROW(ini("[a.b]\nx = 1\n"), ConfigError);
  try {
    ini("[run]\nseed = 1\nseed = 2\n");
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("t:3"), std::string::npos);
  }
}

TEST(Config, AppliesKnownKeysAndRejectsUnknown) {
  ExperimentConfig cfg;
  apply_config(cfg, ini("[run]\nseed = 42\nthreads = 3\n[downstream]\nfractions = 0.5, 1\ntrees = 7\n"));
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.threads, 3u);
  EXPECT_EQ(cfg.fractions, (std::vector<double>{0.5, 1.0}));
  EXPECT_EQ(cfg.forest.trees, 7);
  ExperimentConfig c2;
  try {
    apply_config(c2, ini("[run]\nsed = 1\n"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()), "unknown config key 'run.sed'");
  }
  EXPECT_THROW(apply_config(c2, ini("[data]\nL = ten\n")), ConfigError);
  EXPECT_THROW(apply_config(c2, ini("[downstream]\nfractions = 0\n")), ConfigError);
  EXPECT_THROW(apply_config(c2, ini("[run]\nthreads = 0\n")), ConfigError);
}

TEST(Config, HashIgnoresThreadsAndOutput) {
  ExperimentConfig a, b;
  b.threads = 8;
  b.out = "elsewhere";
  EXPECT_EQ(sha256_hex(a.canonical_text()), sha256_hex(b.canonical_text()));
  b.seed = 2;
  EXPECT_NE(a.canonical_text(), b.canonical_text());
  // canonical text parses back to the same configuration
  ExperimentConfig c;
  c.generator.markov.alpha = 0.125;
  c.fractions = {0.3};
  ExperimentConfig d;
  apply_config(d, ini(c.canonical_text()));
  EXPECT_EQ(d.canonical_text(), c.canonical_text());
}

TEST(Manifest, KnownDigests) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const auto dir = testkit::scratch_dir("wb_manifest");
  write_file(dir / "a.txt", "abc");
  fs::create_directories(dir / "sub");
  write_file(dir / "sub" / "b.txt", "");
  Manifest m;
  m.command = "x";
  m.add_outputs_under(dir);
  m.write(dir);
  const auto j = Json::parse(slurp(dir / "manifest.json"));
  ASSERT_EQ(j["outputs"].size(), 2u);
  EXPECT_EQ(j["outputs"][0]["path"], "a.txt");
  EXPECT_EQ(j["outputs"][0]["sha256"], sha256_hex("abc"));
  EXPECT_EQ(j["outputs"][1]["path"], "sub/b.txt");
  EXPECT_EQ(j["outputs"][1]["sha256"], sha256_hex(""));
}

TEST(Commands, IngestTrainGenerateEvaluate) {
  const auto dir = testkit::scratch_dir("wb_pipeline");
  const auto trace = toy_trace(dir);
  const auto ctx = quiet_ctx(dir / "out");
  IngestArgs ia;
  ia.trace = trace;
  ia.emit_tokens = true;
  ia.emit_gasf = true;
  const auto corpus = cmd_ingest(ctx.sub("ingest"), ia);
  EXPECT_EQ(corpus.samples.size(), 5u * 30u);
  for (const char* f : {"corpus.jsonl", "tokens.txt", "gasf.bin", "ingest_report.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir / "out/ingest" / f)) << f;

  cmd_train(ctx.sub("train"), {dir / "out/ingest/corpus.jsonl", GeneratorKind::markov});
  const auto synth = cmd_generate(ctx.sub("gen"), {dir / "out/train/model.tfxm", {"1", "c3"}, 12});
  EXPECT_EQ(synth.samples.size(), 24u);
  const auto rep = cmd_evaluate(ctx.sub("eval"), {dir / "out/ingest/corpus.jsonl", dir / "out/gen/synthetic.jsonl"});
  EXPECT_TRUE(fs::exists(dir / "out/eval/manifest.json"));
  (void)rep;

  const auto j = cmd_inspect(dir / "out/train/model.tfxm");
  EXPECT_FALSE(j.empty());
  EXPECT_FALSE(cmd_inspect(dir / "out/ingest/corpus.jsonl").empty());
  EXPECT_THROW(cmd_inspect(dir / "missing"), DataError);
  write_file(dir / "junk.bin", "nothing recognizable");
  EXPECT_THROW(cmd_inspect(dir / "junk.bin"), DataError);
}

TEST(Commands, ManifestRecordsInputDigest) {
  const auto dir = testkit::scratch_dir("wb_manifest_in");
  const auto trace = toy_trace(dir, 12);
  IngestArgs ia;
  ia.trace = trace;
  cmd_ingest(quiet_ctx(dir / "out"), ia);
  const auto j = Json::parse(slurp(dir / "out/manifest.json"));
  EXPECT_EQ(j["command"], "ingest");
  EXPECT_EQ(j["inputs"][0]["sha256"], sha256_file(trace));
  EXPECT_EQ(j["config_sha256"], sha256_hex(ExperimentConfig{}.canonical_text()));
  for (const auto& o : j["outputs"])
    EXPECT_EQ(o["sha256"], sha256_file(dir / "out" / o["path"].get<std::string>()));
}

TEST(Cli, ExitCodes) {
  const auto dir = testkit::scratch_dir("wb_cli");
  const auto trace = toy_trace(dir, 12);
  const auto out = (dir / "out").string();
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("--no-such-flag inspect x"), 2);
  EXPECT_EQ(run_cli("--threads 0 inspect x"), 2);
  write_file(dir / "bad.ini", "[run]\nsed = 1\n");
  EXPECT_EQ(run_cli("--config " + (dir / "bad.ini").string() + " inspect x"), 2);
  EXPECT_EQ(run_cli("--config " + (dir / "absent.ini").string() + " inspect x"), 2);

  EXPECT_EQ(run_cli("--out " + out + " ingest --trace " + trace.string()), 0);
  const auto corpus = out + "/corpus.jsonl";
  EXPECT_EQ(run_cli("--out " + out + "/m train --corpus " + corpus), 0);
  EXPECT_EQ(run_cli("--out " + out + "/g generate --model " + out + "/m/model.tfxm --count 5"), 0);
  EXPECT_EQ(run_cli("--out " + out + "/e evaluate --real " + corpus + " --synth " + out + "/g/synthetic.jsonl"), 0);
  EXPECT_EQ(run_cli("inspect " + out + "/m/model.tfxm"), 0);

  EXPECT_EQ(run_cli("--out " + out + "/x train --corpus " + (dir / "none.jsonl").string()), 3);
  write_file(dir / "garbage.jsonl", "{not json\n");
  EXPECT_EQ(run_cli("--out " + out + "/x train --corpus " + (dir / "garbage.jsonl").string()), 3);
  EXPECT_EQ(run_cli("--out " + out + "/x train --corpus " + corpus + " --generator bogus"), 2);

  auto model = slurp(out + "/m/model.tfxm");
  model.resize(model.size() / 2);
  write_file(dir / "cut.tfxm", model);
  EXPECT_EQ(run_cli("--out " + out + "/x generate --model " + (dir / "cut.tfxm").string()), 4);
  EXPECT_EQ(run_cli("--out " + out + "/x generate --model " + (dir / "none.tfxm").string()), 4);
}

TEST(Cli, SameSeedSameBytesAcrossThreads) {
  const auto dir = testkit::scratch_dir("wb_det");
  const auto trace = toy_trace(dir, 20);
  const auto base = dir.string();
  ASSERT_EQ(run_cli("--out " + base + "/i ingest --trace " + trace.string()), 0);
  for (const char* t : {"1", "4"}) {
    const std::string o = base + "/t" + t;
    ASSERT_EQ(run_cli("--threads " + std::string(t) + " --out " + o + " train --corpus " + base + "/i/corpus.jsonl"), 0);
    ASSERT_EQ(run_cli("--threads " + std::string(t) + " --seed 5 --out " + o + "/g generate --model " + o +
                      "/model.tfxm --count 40"),
              0);
  }
  EXPECT_EQ(slurp(base + "/t1/model.tfxm"), slurp(base + "/t4/model.tfxm"));
  EXPECT_EQ(slurp(base + "/t1/g/synthetic.jsonl"), slurp(base + "/t4/g/synthetic.jsonl"));
}
