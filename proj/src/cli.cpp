#include "driu/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "driu/config.hpp"
#include "driu/dataset.hpp"
#include "driu/eval.hpp"
#include "driu/fileio.hpp"
#include "driu/gradcheck.hpp"
#include "driu/image_io.hpp"
#include "driu/synth.hpp"
#include "driu/trainer.hpp"
#include "driu/weights.hpp"

namespace driu {

namespace {

namespace fs = std::filesystem;

const std::string kMeansTensor = "preprocess.channel_means";

// Flags mirroring config keys. Only the ones given on the command line
// override the file.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app, bool architecture_only) {
    app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    for (const auto& key : config_schema()) {
      if (architecture_only && key.name != "width_scale" && key.name != "side_channels" &&
          key.name != "stage_channels" && key.name != "convs_per_stage") {
        continue;
      }
      options[key.name] = app.add_option("--" + flag_name(key.name), values[key.name], key.help);
    }
  }

  RunConfig resolve() const {
    ConfigValues merged;
    if (!config_path.empty()) merged = read_config_file(config_path);
    for (const auto& [key, option] : options) {
      if (option->count() > 0) merged[key] = values.at(key);
    }
    return make_run_config(merged);
  }
};

struct TrainArgs {
  ConfigFlags config;
  std::string data, layout = "generic", task, out, log;
};

struct InferArgs {
  ConfigFlags config;
  std::string weights, image, task, out;
};

struct EvalArgs {
  std::string pred_dir, data, layout = "generic", task, fov = "on", out_prefix, split = "test";
};

struct SynthArgs {
  std::uint64_t seed = 0;
  int count = 4, size = 64, test_count = 0;
  std::string out;
};

struct GradcheckArgs {
  std::uint64_t seed = 0;
  int width_scale = 8;
  std::string inject_fault;
};

int cmd_train(const TrainArgs& args, std::ostream& out) {
  const RunConfig config = args.config.resolve();
  const Task task = parse_task(args.task);
  const DatasetSplit split = load_dataset(args.data, parse_layout(args.layout), task);
  if (split.train.empty()) throw EmptyInputError("dataset '" + args.data + "' has no training samples");

  NetworkParams params = build_network(config.net, config.train.seed);
  const int every = config.log_every;
  TrainResult result = train(std::move(params), split.train, config.train, task, [&](const LossRecord& r) {
    if (every > 0 && (r.iteration % every == 0 || r.iteration + 1 == config.train.iterations)) {
      out << "iter " << r.iteration << " lr " << r.lr << " loss " << r.loss << '\n';
    }
  });

  NamedTensors tensors(result.params.tensors().begin(), result.params.tensors().end());
  tensors.emplace(kMeansTensor, Tensor(Shape{3}, std::vector<float>(result.means.values.begin(),
                                                                     result.means.values.end())));
  if (!args.log.empty()) write_file_atomic(args.log, format_loss_log(result.log));
  write_file_atomic(args.out, save_weights(tensors));
  if (result.log.empty()) {
    out << "final loss = n/a (0 iterations)\n";
  } else {
    out.precision(9);
    out << "final loss = " << result.log.back().loss << '\n';
  }
  return kExitOk;
}

fs::path with_suffix(const fs::path& path, std::string_view suffix) {
  fs::path out = path;
  out.replace_filename(path.stem().string() + std::string(suffix) + path.extension().string());
  return out;
}

int cmd_infer(const InferArgs& args, std::ostream& out) {
  const RunConfig config = args.config.resolve();
  NamedTensors tensors = load_weights(read_file_bytes(args.weights));
  const auto means_it = tensors.find(kMeansTensor);
  if (means_it == tensors.end() || means_it->second.shape() != Shape{3}) {
    throw ConsistencyError("weight file has no '" + kMeansTensor + "' tensor of shape [3]");
  }
  ChannelMeans means;
  for (int c = 0; c < 3; ++c) means.values[static_cast<std::size_t>(c)] = means_it->second[static_cast<std::size_t>(c)];
  tensors.erase(means_it);
  const NetworkParams params = params_from_tensors(config.net, std::move(tensors));

  std::vector<Task> tasks;
  if (args.task == "both") tasks = {Task::vessel, Task::disc};
  else tasks = {parse_task(args.task)};

  const Tensor image = read_rgb_image(args.image);
  const auto result = forward(params, preprocess(image, means), std::span<const Task>(tasks));
  for (Task t : tasks) {
    const fs::path path = tasks.size() == 1 ? fs::path(args.out) : with_suffix(args.out, "_" + std::string(task_name(t)));
    write_probability_map(path, result.outputs.at(t).probability);
    out << "wrote " << path.string() << '\n';
  }
  return kExitOk;
}

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  const Task task = parse_task(args.task);
  if (args.fov != "on" && args.fov != "off") throw InvalidArgument("--fov must be 'on' or 'off'");
  if (args.split != "test" && args.split != "train") throw InvalidArgument("--split must be 'test' or 'train'");
  const DatasetSplit split = load_dataset(args.data, parse_layout(args.layout), task);
  const std::vector<Sample>& samples = args.split == "test" ? split.test : split.train;
  if (samples.empty()) throw EmptyInputError("dataset '" + args.data + "' has no " + args.split + " samples");

  std::vector<std::string> missing;
  for (const Sample& s : samples) {
    if (!fs::exists(fs::path(args.pred_dir) / (s.id + ".pgm"))) missing.push_back(s.id);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw DatasetError("missing probability maps for: " + list);
  }

  std::vector<std::string> ids;
  std::vector<Tensor> probs;
  std::vector<Mask> golds;
  std::vector<std::optional<Mask>> seconds, fovs;
  for (const Sample& s : samples) {
    ids.push_back(s.id);
    probs.push_back(read_probability_map(fs::path(args.pred_dir) / (s.id + ".pgm")));
    golds.push_back(s.gold);
    seconds.push_back(s.second);
    fovs.push_back(s.fov);
  }
  EvalOptions options;
  options.use_fov = args.fov == "on";
  options.threads = eval_threads_from_env();
  const PRCurve curve = pr_curve(probs, golds, fovs, default_thresholds(), options);
  const OdsResult best = ods(curve);
  const HumanPoints human = human_points(ids, seconds, golds, fovs, options.use_fov);
  const BoundaryStats boundary = boundary_stats(ids, probs, golds, best.threshold);

  auto emit = [&](const std::string& suffix, auto writer) {
    std::ostringstream os;
    writer(os);
    write_file_atomic(args.out_prefix + suffix, os.str());
  };
  emit("_pr.csv", [&](std::ostream& os) { write_pr_csv(os, curve); });
  if (!human.per_image.empty()) emit("_human.csv", [&](std::ostream& os) { write_human_csv(os, human); });
  emit("_boundary.csv", [&](std::ostream& os) { write_boundary_csv(os, boundary); });
  const std::string summary = format_summary(curve, &human, boundary);
  write_file_atomic(args.out_prefix + "_summary.txt", summary);
  out << summary;
  return kExitOk;
}

int cmd_synth(const SynthArgs& args, std::ostream& out) {
  write_synthetic_dataset(args.out, args.seed, args.count, args.size, args.test_count);
  out << "wrote " << args.count << " synthetic images to " << args.out << '\n';
  return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
  GradcheckOptions options;
  options.seed = args.seed;
  options.width_scale = args.width_scale;
  if (!args.inject_fault.empty()) options.inject_fault = args.inject_fault;
  const GradcheckReport report = run_gradcheck(options);
  out << report.format();
  if (report.passed()) return kExitOk;
  for (const auto& e : report.entries) {
    if (!e.passed()) err << "gradcheck failed: " << e.op << " at " << e.worst << '\n';
  }
  return kExitFailure;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Retinal vessel and optic disc segmentation", "driu"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train one task head from scratch");
  train_args.config.attach(*train_cmd, false);
  train_cmd->add_option("--data", train_args.data, "Dataset root directory")->required();
  train_cmd->add_option("--layout", train_args.layout, "drive|stare|drions|rimone|generic")->capture_default_str();
  train_cmd->add_option("--task", train_args.task, "vessel|disc")->required();
  train_cmd->add_option("--out", train_args.out, "Output weight file")->required();
  train_cmd->add_option("--log", train_args.log, "Loss log CSV (iteration,lr,loss)");

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "Write probability maps for one image");
  infer_args.config.attach(*infer_cmd, true);
  infer_cmd->add_option("--weights", infer_args.weights, "Weight file from train")->required();
  infer_cmd->add_option("--image", infer_args.image, "RGB image (P6)")->required();
  infer_cmd->add_option("--task", infer_args.task, "vessel|disc|both")->required();
  infer_cmd->add_option("--out", infer_args.out, "Output 16-bit PGM; 'both' adds _vessel/_disc suffixes")
      ->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score probability maps against a dataset");
  eval_cmd->add_option("--pred-dir", eval_args.pred_dir, "Directory of <id>.pgm probability maps")->required();
  eval_cmd->add_option("--data", eval_args.data, "Dataset root directory")->required();
  eval_cmd->add_option("--layout", eval_args.layout, "drive|stare|drions|rimone|generic")->capture_default_str();
  eval_cmd->add_option("--task", eval_args.task, "vessel|disc")->required();
  eval_cmd->add_option("--fov", eval_args.fov, "on|off: restrict counts to the field of view")
      ->capture_default_str();
  eval_cmd->add_option("--split", eval_args.split, "test|train")->capture_default_str();
  eval_cmd->add_option("--out-prefix", eval_args.out_prefix, "Prefix for the CSV and summary files")->required();

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic fundus dataset");
  synth_cmd->add_option("--seed", synth_args.seed, "First image seed")->capture_default_str();
  synth_cmd->add_option("--count", synth_args.count, "Number of images")->capture_default_str();
  synth_cmd->add_option("--size", synth_args.size, "Image side length (>= 32)")->capture_default_str();
  synth_cmd->add_option("--test-count", synth_args.test_count, "Images placed in the test section")
      ->capture_default_str();
  synth_cmd->add_option("--out", synth_args.out, "Output dataset directory")->required();

  GradcheckArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  grad_cmd->add_option("--seed", grad_args.seed, "RNG seed")->capture_default_str();
  grad_cmd->add_option("--width-scale", grad_args.width_scale, "Network width divisor")->capture_default_str();
  grad_cmd->add_option("--inject-fault", grad_args.inject_fault, "Negate one primitive's gradient (test hook)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_args, out);
    if (infer_cmd->parsed()) return cmd_infer(infer_args, out);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, out);
    if (synth_cmd->parsed()) return cmd_synth(synth_args, out);
    if (grad_cmd->parsed()) return cmd_gradcheck(grad_args, out, err);
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace driu
