#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eventforge/config.hpp"
#include "eventforge/factory.hpp"
#include "eventforge/io.hpp"
#include "eventforge/repr.hpp"

namespace {

using namespace eventforge;

struct GenerateArgs {
  std::string config;
  std::string out;
  uint64_t seed = 0;
  int samples = 0;
  int workers = 0;
  CLI::Option* out_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* samples_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
};

int cmd_generate(const GenerateArgs& args) {
  FactoryConfig cfg = FactoryConfig::load(args.config);
  if (args.out_opt->count()) cfg.out_dir = args.out;
  if (args.seed_opt->count()) cfg.seed = args.seed;
  if (args.samples_opt->count()) cfg.samples = args.samples;
  if (args.workers_opt->count()) cfg.workers = args.workers;

  const GenerateResult result = generate_dataset(cfg);
  std::printf("generated %zu sample(s) in %s\n", result.records.size(),
              result.out_dir.c_str());
  return 0;
}

struct DistillArgs {
  std::string config;
  std::string out = "distilled";
  int workers = 1;
  std::vector<std::string> inputs;
};

int cmd_distill(const DistillArgs& args) {
  const ConfigFile cfg = ConfigFile::parse_file(args.config);
  const RigPair rigs = rig_pair_from_config(cfg);
  const DistillOptions options = distill_options_from_config(cfg);
  const auto results =
      distill_files(args.inputs, rigs, options, args.out, args.workers);
  int failures = 0;
  for (const DistillFileResult& res : results) {
    if (res.ok) {
      std::printf("ok   %s -> %s\n", res.input.c_str(), res.output.c_str());
    } else {
      std::printf("fail %s: %s\n", res.input.c_str(), res.error.c_str());
      ++failures;
    }
  }
  if (failures) {
    std::fprintf(stderr, "distill: %d of %zu file(s) failed\n", failures,
                 results.size());
    return 2;
  }
  return 0;
}

struct EvalArgs {
  std::vector<std::string> preds;
  std::vector<std::string> gts;
  std::string out = "eval_report";
};

int cmd_eval(const EvalArgs& args) {
  const EvalOutput eval = evaluate_disparity_files(args.preds, args.gts);
  for (const EvalRow& row : eval.rows)
    std::printf("%s\n", metrics_json_line(row.name, row.metrics).c_str());
  std::printf("%s\n", metrics_json_line("aggregate", eval.aggregate).c_str());
  write_eval_reports(eval, args.out);
  return 0;
}

struct EncodeArgs {
  std::string events;
  std::string out;
  std::string format = "stk1";
  uint64_t tencode_count = 0;
  int voxel_bins = 0;
  CLI::Option* tencode_opt = nullptr;
  CLI::Option* bins_opt = nullptr;
};

int cmd_encode(const EncodeArgs& args) {
  const bool want_tencode = args.tencode_opt->count() > 0;
  const bool want_grid = args.bins_opt->count() > 0;
  if (want_tencode == want_grid)
    throw UsageError("encode: pass exactly one of --tencode or --voxel-bins");
  const EventStream stream = read_evt1(args.events);

  Image data;
  if (want_tencode) {
    const StackedFrame frame = tencode(stream, args.tencode_count);
    std::printf("tencode: %llu event(s), t_max=%llu dt=%llu\n",
                static_cast<unsigned long long>(frame.count),
                static_cast<unsigned long long>(frame.t_max),
                static_cast<unsigned long long>(frame.dt));
    data = frame.data;
  } else {
    data = voxel_grid(stream, args.voxel_bins);
  }

  if (args.format == "stk1") {
    write_stk1(args.out, data);
  } else if (args.format == "pfm") {
    for (int c = 0; c < data.channels(); ++c)
      write_pfm(args.out + ".c" + std::to_string(c) + ".pfm",
                data.channel(c));
  } else {
    throw UsageError("encode: --format must be stk1 or pfm");
  }
  return 0;
}

int cmd_validate(const std::string& dir) {
  const ValidationReport report = validate_dataset(dir);
  for (const ValidationIssue& issue : report.issues)
    std::printf("invalid %s: %s\n", issue.where.c_str(), issue.what.c_str());
  if (!report.ok()) {
    std::fprintf(stderr, "validate: %zu issue(s) in %d sample(s)\n",
                 report.issues.size(), report.samples_checked);
    return 2;
  }
  std::printf("validated %d sample(s), ok\n", report.samples_checked);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-stereo data factory"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* generate =
      app.add_subcommand("generate", "render a dataset from a factory config");
  generate->add_option("--config", gen.config, "factory config file")
      ->required();
  gen.out_opt = generate->add_option("--out", gen.out, "output directory");
  gen.seed_opt = generate->add_option("--seed", gen.seed, "master seed");
  gen.samples_opt =
      generate->add_option("--samples", gen.samples, "sample count");
  gen.workers_opt =
      generate->add_option("--workers", gen.workers, "worker threads");

  DistillArgs dis;
  CLI::App* distill = app.add_subcommand(
      "distill", "reproject disparity labels into the event rig");
  distill->add_option("--config", dis.config, "rig pair config file")
      ->required();
  distill->add_option("--out", dis.out, "output directory");
  distill->add_option("--workers", dis.workers, "worker threads");
  distill->add_option("inputs", dis.inputs, "PFM disparity files");

  EvalArgs ev;
  CLI::App* eval =
      app.add_subcommand("eval", "disparity metrics for pred/gt PFM pairs");
  eval->add_option("--pred", ev.preds, "predicted disparity PFMs")->required();
  eval->add_option("--gt", ev.gts, "ground-truth disparity PFMs")->required();
  eval->add_option("--out", ev.out, "report prefix (.txt/.csv)");

  EncodeArgs enc;
  CLI::App* encode =
      app.add_subcommand("encode", "event stream to tensor representation");
  encode->add_option("--events", enc.events, "EVT1 event file")->required();
  encode->add_option("--out", enc.out, "output path")->required();
  encode->add_option("--format", enc.format, "stk1 or pfm");
  enc.tencode_opt = encode->add_option("--tencode", enc.tencode_count,
                                       "encode the last N events");
  enc.bins_opt =
      encode->add_option("--voxel-bins", enc.voxel_bins, "voxel grid bins");

  std::string validate_dir;
  CLI::App* validate =
      app.add_subcommand("validate", "check a generated dataset directory");
  validate->add_option("dir", validate_dir, "dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen);
    if (distill->parsed()) return cmd_distill(dis);
    if (eval->parsed()) return cmd_eval(ev);
    if (encode->parsed()) return cmd_encode(enc);
    if (validate->parsed()) return cmd_validate(validate_dir);
    std::fprintf(stderr, "no subcommand\n");
    return 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::logic_error& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  }
}
