// tfx: traffic generation workbench CLI.

#include <CLI11.hpp>

#include <chrono>
#include <iostream>
#include <optional>
#include <string>

#include "tfx/workbench/commands.hpp"

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kModel = 4 };

std::vector<std::string> split_list(const std::string& s) { return tfx::detail::config_list(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lightweight network traffic generation workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool profile = false, quiet = false;
  app.add_option("--config", config_path, "Experiment config (key = value with [sections])");
  app.add_option("--seed", seed, "Master seed (overrides run.seed)");
  app.add_option("--threads", threads, "Worker threads (overrides run.threads)")->check(CLI::Range(1u, 1024u));
  app.add_option("--out", out_dir, "Output directory (overrides run.out)");
  app.add_flag("--profile", profile, "Write profile.json with timings and memory");
  app.add_flag("-q,--quiet", quiet, "No progress messages");

  tfx::IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Segment a trace into a labeled corpus");
  std::string trace;
  c_ingest->add_option("--trace", trace, "CSV or pcap trace");
  c_ingest->add_option("--kind", ingest.kind, "csv or pcap (default: from extension)");
  c_ingest->add_option("--label-rule", ingest.label_rule, "proto:port=label,... when the trace has no label column");
  c_ingest->add_flag("--tokens", ingest.emit_tokens, "Also write the token-sequence view");
  c_ingest->add_flag("--gasf", ingest.emit_gasf, "Also write the GASF image view");

  std::string corpus_path, generator_kind;
  auto* c_train = app.add_subcommand("train", "Fit a generator on a corpus");
  c_train->add_option("--corpus", corpus_path, "Training corpus")->required();
  c_train->add_option("--generator", generator_kind, "markov, lm or lm-int8");

  std::string model_path, classes;
  std::size_t count = 0;
  auto* c_generate = app.add_subcommand("generate", "Sample a synthetic corpus");
  c_generate->add_option("--model", model_path, "Model file")->required();
  c_generate->add_option("--classes", classes, "Comma-separated class names or ids (default: all)");
  c_generate->add_option("--count", count, "Samples per class (default: generator.count_per_class)");

  std::string real_path, synth_path;
  auto* c_evaluate = app.add_subcommand("evaluate", "Fidelity metrics of a synthetic corpus");
  c_evaluate->add_option("--real", real_path, "Real corpus")->required();
  c_evaluate->add_option("--synth", synth_path, "Synthetic corpus")->required();

  std::string protocol, fractions;
  auto* c_down = app.add_subcommand("downstream", "Classifier utility protocols");
  c_down->add_option("--real", real_path, "Real corpus")->required();
  c_down->add_option("--synth", synth_path, "Synthetic training corpus for tstr");
  c_down->add_option("--model", model_path, "Generator for tstr and generator augmentation");
  c_down->add_option("--protocol", protocol, "tstr, augment or both");
  c_down->add_option("--fractions", fractions, "Comma-separated real-data fractions");

  std::string reference;
  auto* c_quant = app.add_subcommand("quantize", "Int8 weight-only quantization of a neural model");
  c_quant->add_option("--model", model_path, "Neural model file")->required();
  c_quant->add_option("--reference", reference, "Reference corpus for fidelity deltas");

  std::size_t flows = 500;
  auto* c_demo = app.add_subcommand("demo", "Run the whole pipeline on a bundled toy trace");
  c_demo->add_option("--flows-per-class", flows, "Toy flows per class")->check(CLI::Range(10u, 100000u));

  std::string inspect_path;
  auto* c_inspect = app.add_subcommand("inspect", "Summarize a corpus, token, image or model file");
  c_inspect->add_option("path", inspect_path, "File to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    tfx::RunContext ctx;
    if (!config_path.empty()) ctx.cfg = tfx::load_config(config_path);
    if (seed) ctx.cfg.seed = *seed;
    if (threads) ctx.cfg.threads = *threads;
    if (!out_dir.empty()) ctx.cfg.out = out_dir;
    ctx.cfg.validate();
    ctx.out = ctx.cfg.out;
    ctx.profile = profile;
    ctx.log = quiet ? nullptr : &std::cerr;

    if (*c_ingest) {
      ingest.trace = trace;
      tfx::cmd_ingest(ctx, ingest);
    } else if (*c_train) {
      tfx::TrainArgs a{corpus_path, {}};
      if (!generator_kind.empty()) a.kind = tfx::generator_kind_from_string(generator_kind);
      tfx::cmd_train(ctx, a);
    } else if (*c_generate) {
      tfx::cmd_generate(ctx, {model_path, split_list(classes), count});
    } else if (*c_evaluate) {
      tfx::cmd_evaluate(ctx, {real_path, synth_path});
    } else if (*c_down) {
      tfx::DownstreamArgs a{real_path, synth_path, model_path, {}, {}};
      if (protocol == "tstr") a.protocol = tfx::DownstreamProtocol::tstr;
      else if (protocol == "augment") a.protocol = tfx::DownstreamProtocol::augment;
      else if (protocol == "both") a.protocol = tfx::DownstreamProtocol::both;
      else if (!protocol.empty()) throw tfx::ConfigError("--protocol must be tstr, augment or both");
      for (const auto& f : split_list(fractions)) a.fractions.push_back(tfx::detail::config_double("--fractions", f));
      tfx::cmd_downstream(ctx, a);
    } else if (*c_quant) {
      tfx::cmd_quantize(ctx, {model_path, reference});
    } else if (*c_demo) {
      const auto t0 = std::chrono::steady_clock::now();
      tfx::cmd_demo(ctx, flows);
      if (profile) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << "[demo] finished in " << secs << " s, peak RSS " << tfx::peak_rss_mb() << " MB\n";
      }
    } else if (*c_inspect) {
      std::cout << tfx::cmd_inspect(inspect_path).dump(2) << '\n';
    }
    return kOk;
  } catch (const tfx::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const tfx::ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kModel;
  } catch (const tfx::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  }
}
