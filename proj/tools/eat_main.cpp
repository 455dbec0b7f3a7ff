// Command line surface: dataset generation, training, evaluation,
// explanation export, and foreground-attention reporting.
//
// Exit codes: 0 success, 2 usage/configuration/data errors, 3 non-finite
// training loss, 1 unexpected failures.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "eat/checkpoint.hpp"
#include "eat/config.hpp"
#include "eat/data.hpp"
#include "eat/explain.hpp"
#include "eat/far.hpp"
#include "eat/image_io.hpp"
#include "eat/model.hpp"

namespace {

using namespace eat;

int env_threads() {
  const char* raw = std::getenv("EAT_THREADS");
  if (!raw) return 1;
  const int v = std::atoi(raw);
  return v >= 1 ? v : 1;
}

void print_warnings(const EatConfig& cfg) {
  for (const std::string& w : cfg.warnings()) std::cerr << "warning: " << w << "\n";
}

std::filesystem::path sibling_report_path(const std::filesystem::path& base) {
  std::filesystem::path p = base;
  const std::string ext = p.extension().string();
  p.replace_extension();
  p += ".b";
  p += ext.empty() ? ".csv" : ext;
  return p;
}

std::string format_csv_double(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

struct SynthArgs {
  std::string out;
  SynthSpec spec;
};

int cmd_synth_gen(const SynthArgs& args) {
  synth_generate(args.spec, args.out);
  std::cout << "generated " << args.spec.n_classes * (args.spec.per_class + args.spec.test_per_class)
            << " images in " << args.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string mode;
  std::string out_ckpt;
  std::string log;
  std::int64_t seed = -1;
};

int cmd_train(const TrainArgs& args) {
  RunConfig rc;
  if (!args.config.empty()) rc = parse_run_config_file(args.config);
  const std::string data_dir = !args.data.empty() ? args.data : rc.data.value_or("");
  if (data_dir.empty()) throw Error("train: no dataset given (--data or config data=)");
  const std::string out_ckpt = !args.out_ckpt.empty() ? args.out_ckpt : rc.out_ckpt.value_or("");
  if (out_ckpt.empty()) throw Error("train: no output checkpoint given (--out-ckpt or config out_ckpt=)");

  if (args.mode == "baseline") {
    rc.eat.mode = Mode::Baseline;
  } else if (args.mode == "eat") {
    rc.eat.mode = Mode::Eat;
  } else if (!args.mode.empty()) {
    throw Error("train: mode must be baseline or eat");
  }
  if (rc.eat.mode == Mode::Baseline) rc.eat.eta = 0.0f;
  if (args.seed >= 0) rc.eat.seed = static_cast<std::uint64_t>(args.seed);

  Dataset dataset = load_dataset(data_dir);
  for (const std::string& w : dataset.attributes.separability_warnings()) std::cerr << "warning: " << w << "\n";

  if (rc.has("n_classes") && rc.eat.n_classes != dataset.attributes.n_classes)
    throw Error("train: config expects " + std::to_string(rc.eat.n_classes) + " classes, dataset has " +
                std::to_string(dataset.attributes.n_classes));
  if (rc.has("n_attributes") && rc.eat.n_attributes != dataset.attributes.n_attributes)
    throw Error("train: config expects " + std::to_string(rc.eat.n_attributes) + " attributes, dataset has " +
                std::to_string(dataset.attributes.n_attributes));
  rc.eat.n_classes = dataset.attributes.n_classes;
  rc.eat.n_attributes = dataset.attributes.n_attributes;
  if (!dataset.samples.empty()) {
    const int size = dataset.samples.front().image.dim(1);
    if (rc.has("image_size") && rc.eat.image_size != size)
      throw Error("train: config image_size " + std::to_string(rc.eat.image_size) + " but dataset images are " +
                  std::to_string(size));
    rc.eat.image_size = size;
  }
  print_warnings(rc.eat);

  EatModel model = EatModel::init(rc.eat);
  TrainingReport report = train(model, dataset);
  for (const EpochStats& e : report.epochs) {
    std::cerr << "epoch " << e.epoch << "/" << rc.eat.epochs << " l_c=" << e.l_c;
    if (rc.eat.mode == Mode::Eat) std::cerr << " l_a=" << e.l_a;
    std::cerr << " acc=" << e.accuracy;
    if (rc.eat.mode == Mode::Eat) std::cerr << " attr_acc=" << e.attr_accuracy;
    std::cerr << "\n";
  }

  save_checkpoint(model, out_ckpt);
  const std::string log_path = !args.log.empty() ? args.log : rc.log.value_or(out_ckpt + ".log.csv");
  std::ostringstream log;
  log << "epoch,l_c,l_a,acc,attr_acc\n";
  for (const EpochStats& e : report.epochs) {
    log << e.epoch << "," << format_csv_double(e.l_c) << ",";
    if (rc.eat.mode == Mode::Eat) log << format_csv_double(e.l_a);
    log << "," << format_csv_double(e.accuracy) << ",";
    if (rc.eat.mode == Mode::Eat) log << format_csv_double(e.attr_accuracy);
    log << "\n";
  }
  write_file_atomic(log_path, log.str());
  std::cout << "checkpoint written to " << out_ckpt << "\n";
  return 0;
}

struct EvalArgs {
  std::string data;
  std::string ckpt;
  std::string split = "test";
  std::string out_csv;
};

int cmd_eval(const EvalArgs& args) {
  EatModel model = load_checkpoint(args.ckpt);
  Dataset dataset = load_dataset(args.data);
  const Split split = args.split == "train" ? Split::Train : Split::Test;
  EvalMetrics metrics = evaluate(model, dataset, split);

  std::ostringstream csv;
  csv << "metric,value\n";
  std::cout.precision(6);
  std::cout << std::fixed;
  std::cout << "category_accuracy " << metrics.category_accuracy << "\n";
  csv << "category_accuracy," << format_csv_double(metrics.category_accuracy) << "\n";
  if (metrics.mean_attribute_accuracy) {
    std::cout << "mean_attribute_accuracy " << *metrics.mean_attribute_accuracy << "\n";
    csv << "mean_attribute_accuracy," << format_csv_double(*metrics.mean_attribute_accuracy) << "\n";
  }
  write_file_atomic(args.out_csv.empty() ? args.ckpt + ".eval.csv" : args.out_csv, csv.str());
  return 0;
}

struct ExplainArgs {
  std::string data;
  std::string ckpt;
  std::string image_id;
  std::string out_dir;
  int layer = -1;
};

int cmd_explain(const ExplainArgs& args) {
  EatModel model = load_checkpoint(args.ckpt);
  Dataset dataset = load_dataset(args.data);
  const Sample* sample = nullptr;
  for (const Sample& s : dataset.samples)
    if (s.image_id == args.image_id) {
      sample = &s;
      break;
    }
  if (!sample) throw Error("explain: unknown image id '" + args.image_id + "'");

  std::filesystem::create_directories(args.out_dir);
  const std::filesystem::path out_dir = args.out_dir;

  Explanation e = explain_image(model, sample->image, sample->image_id, dataset.attributes.attribute_names,
                                dataset.attributes.class_names, sample->label);
  write_file_atomic(out_dir / (sample->image_id + ".explain.json"), explanation_to_json(e));

  AttentionMap class_map = grad_cam(model, sample->image, CamTarget::category(e.predicted_class), args.layer);
  write_ppm(out_dir / (sample->image_id + ".class.ppm"), render_map(class_map, sample->image));

  for (const ExplanationAttribute& attr : e.top_attributes) {
    // map_file carries the attribute index chosen by the ranking
    const std::string& file = attr.map_file;
    const std::size_t at = file.rfind(".attr");
    const int attr_index = std::stoi(file.substr(at + 5, file.size() - at - 9));
    AttentionMap map = grad_cam(model, sample->image, CamTarget::attribute(attr_index), args.layer);
    write_ppm(out_dir / file, render_map(map, sample->image));
  }
  std::cout << e.sentence << "\n";
  std::cout << "wrote " << (e.top_attributes.size() + 1) << " overlays and " << sample->image_id
            << ".explain.json to " << args.out_dir << "\n";
  return 0;
}

struct FarArgs {
  std::string data;
  std::string ckpt_a;
  std::string ckpt_b;
  std::string out;
  std::string split = "test";
  int layer = -1;
  bool correct_only = false;
};

int cmd_far(const FarArgs& args) {
  Dataset dataset = load_dataset(args.data);
  const Split split = args.split == "train" ? Split::Train : Split::Test;
  bool any_mask = false;
  for (const Sample& s : dataset.samples)
    if (s.split == split && s.mask && !s.mask->degenerate()) any_mask = true;
  if (!any_mask) throw Error("far: dataset split has no usable masks");

  FarBatchOptions opts;
  opts.split = split;
  opts.layer = args.layer;
  opts.correct_only = args.correct_only;
  opts.threads = env_threads();

  EatModel model_a = load_checkpoint(args.ckpt_a);
  opts.model_tag = args.ckpt_a;
  FarReport report_a = far_batch(model_a, dataset, opts);
  write_file_atomic(args.out, far_report_csv(report_a));

  std::cout.precision(6);
  std::cout << std::fixed;
  std::cout << "mean_far_a " << report_a.mean_far << "\n";

  if (!args.ckpt_b.empty()) {
    EatModel model_b = load_checkpoint(args.ckpt_b);
    opts.model_tag = args.ckpt_b;
    FarReport report_b = far_batch(model_b, dataset, opts);
    write_file_atomic(sibling_report_path(args.out), far_report_csv(report_b));
    std::cout << "mean_far_b " << report_b.mean_far << "\n";
    std::cout << "far_ratio " << (report_b.mean_far / report_a.mean_far) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribute-based multi-task classifier with attention attribution"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* sg = app.add_subcommand("synth-gen", "Generate the synthetic biased dataset");
  sg->add_option("--out", synth.out, "Output dataset directory")->required();
  sg->add_option("--classes", synth.spec.n_classes, "Class count");
  sg->add_option("--attrs", synth.spec.n_attributes, "Attribute count");
  sg->add_option("--per-class", synth.spec.per_class, "Training images per class");
  sg->add_option("--test-per-class", synth.spec.test_per_class, "Test images per class");
  sg->add_option("--bias-train", synth.spec.bias_train, "P(background = class color) on train");
  sg->add_option("--bias-test", synth.spec.bias_test, "P(background = class color) on test");
  sg->add_option("--image-size", synth.spec.image_size, "Image side length");
  sg->add_option("--seed", synth.spec.seed, "Generator seed");

  TrainArgs train_args;
  CLI::App* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  tr->add_option("--data", train_args.data, "Dataset directory");
  tr->add_option("--config", train_args.config, "key=value run configuration file");
  tr->add_option("--mode", train_args.mode, "baseline or eat")->check(CLI::IsMember({"baseline", "eat"}));
  tr->add_option("--out-ckpt", train_args.out_ckpt, "Checkpoint output path");
  tr->add_option("--seed", train_args.seed, "Seed override");
  tr->add_option("--log", train_args.log, "Training log csv path");

  EvalArgs eval_args;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  ev->add_option("--data", eval_args.data, "Dataset directory")->required();
  ev->add_option("--ckpt", eval_args.ckpt, "Checkpoint path")->required();
  ev->add_option("--split", eval_args.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--out-csv", eval_args.out_csv, "Metrics csv path (default <ckpt>.eval.csv)");

  ExplainArgs explain_args;
  CLI::App* ex = app.add_subcommand("explain", "Export the explanation record and overlays for one image");
  ex->add_option("--data", explain_args.data, "Dataset directory")->required();
  ex->add_option("--ckpt", explain_args.ckpt, "Checkpoint path")->required();
  ex->add_option("--image-id", explain_args.image_id, "Image id from labels.csv")->required();
  ex->add_option("--out-dir", explain_args.out_dir, "Output directory")->required();
  ex->add_option("--layer", explain_args.layer, "Trunk layer for attention maps (-1 = last)");

  FarArgs far_args;
  CLI::App* fr = app.add_subcommand("far", "Foreground attention rate report");
  fr->add_option("--data", far_args.data, "Dataset directory with masks")->required();
  fr->add_option("--ckpt-a", far_args.ckpt_a, "Checkpoint path")->required();
  fr->add_option("--ckpt-b", far_args.ckpt_b, "Second checkpoint for a ratio report");
  fr->add_option("--out", far_args.out, "Report csv path")->required();
  fr->add_option("--split", far_args.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  fr->add_option("--layer", far_args.layer, "Trunk layer for attention maps (-1 = last)");
  fr->add_flag("--correct-only", far_args.correct_only, "Restrict to correctly classified images");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (sg->parsed()) return cmd_synth_gen(synth);
    if (tr->parsed()) return cmd_train(train_args);
    if (ev->parsed()) return cmd_eval(eval_args);
    if (ex->parsed()) return cmd_explain(explain_args);
    if (fr->parsed()) return cmd_far(far_args);
  } catch (const NonFiniteLossError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
