// hcr: dataset generation, training, distance diagnostics and theory checks.
//
// Exit status: 0 success, 1 runtime failure, 2 usage error.

#include "hcr/config.hpp"
#include "hcr/data.hpp"
#include "hcr/theory_report.hpp"
#include "hcr/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifndef HCR_VERSION
#define HCR_VERSION "dev"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;
constexpr const char* kOutEnv = "HCR_OUT_DIR";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutEnv); env && *env) return env;
  return "hcr-out";
}

fs::path prepare(const fs::path& dir) {
  fs::create_directories(dir);
  return dir;
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw hcr::Error("cannot write " + path.string());
  w(os);
  if (!os) throw hcr::Error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) {
  write_file(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

json manifest(const std::string& command, const std::vector<std::string>& argv) {
  return json{{"tool", "hcr"}, {"version", HCR_VERSION}, {"command", command}, {"argv", argv}};
}

// generate ----------------------------------------------------------------------------

struct GenerateArgs {
  std::string kind;
  int classes = 4;
  Eigen::Index dim = 32;
  Eigen::Index per_class = 250;
  double concentration = 25.0;
  hcr::Seed seed = 0;
  std::string name = "dataset.csv";
  std::string out;
};

const std::vector<std::string> kGeneratorKinds = {"blobs", "shells"};

int run_generate(const GenerateArgs& a, const std::vector<std::string>& argv) {
  if (std::find(kGeneratorKinds.begin(), kGeneratorKinds.end(), a.kind) == kGeneratorKinds.end())
    throw UsageError("unknown generator '" + a.kind + "'; valid kinds: blobs, shells");
  const fs::path dir = prepare(output_dir(a.out));

  json m = manifest("generate", argv);
  m["config"] = {{"kind", a.kind},       {"classes", a.classes}, {"dim", a.dim}, {"per_class", a.per_class},
                 {"concentration", a.concentration}, {"seed", a.seed}};
  m["seeds"] = {{"generator", a.seed}};
  m["artifacts"] = {{"dataset", a.name}, {"manifest", "manifest.json"}};
  write_json(dir / "manifest.json", m);

  const auto ds = a.kind == "blobs" ? hcr::make_sphere_blobs(a.classes, a.dim, a.per_class, a.concentration, a.seed)
                                    : hcr::make_shell_dataset(a.classes, a.dim, a.per_class, a.seed);
  write_file(dir / a.name, [&](std::ostream& os) { hcr::write_csv_dataset(os, ds); });
  std::cout << "wrote " << ds.size() << " rows to " << (dir / a.name).string() << '\n';
  return 0;
}

// train ---------------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string test;
  std::string label_column = "label";
  double label_proportion = 1.0;
  std::string noise_kind = "symmetric";
  double noise_rate = 0.0;
  double hcr_weight = 1.0;
  bool no_hcr = false;
  std::string unsup;
  double lambda_u = 1.0;
  double tau = 0.07;
  std::string grad_flow;
  hcr::Seed seed = 0;
  int epochs = 0;
  Eigen::Index batch_size = 0;
  double lr = 0;
  double momentum = 0;
  std::string precision;
  std::vector<Eigen::Index> encoder_widths;
  Eigen::Index feature_dim = 0;
  Eigen::Index projection_dim = 0;
  std::string activation;
  std::string out;
};

/// Everything a training run depends on; serialised whole into the manifest.
struct RunSpec {
  hcr::TrainConfig train;
  std::string data;
  std::string test;
  std::string label_column = "label";
  double label_proportion = 1.0;
  hcr::NoiseKind noise_kind = hcr::NoiseKind::symmetric;
  double noise_rate = 0.0;

  json to_json() const {
    json j = hcr::to_json(train);
    j["data"] = data;
    j["test"] = test;
    j["label_column"] = label_column;
    j["label_proportion"] = label_proportion;
    j["noise"] = {{"kind", hcr::to_string(noise_kind)}, {"rate", noise_rate}};
    return j;
  }

  void apply(const json& j) {
    hcr::apply_json(j, train);
    hcr::detail::read_if(j, "data", data);
    hcr::detail::read_if(j, "test", test);
    hcr::detail::read_if(j, "label_column", label_column);
    hcr::detail::read_if(j, "label_proportion", label_proportion);
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      if (n.contains("kind")) noise_kind = hcr::noise_kind_from_string(n.at("kind").get<std::string>());
      hcr::detail::read_if(n, "rate", noise_rate);
    }
  }
};

RunSpec resolve(const TrainArgs& a, const CLI::App& cmd) {
  RunSpec spec;
  if (!a.config.empty()) {
    json j = hcr::load_json_file(a.config);
    // A run manifest is accepted in place of a config file.
    if (j.contains("config") && j.contains("command")) j = j.at("config");
    spec.apply(j);
  }
  auto given = [&](const char* flag) { return cmd.count(flag) > 0; };
  if (given("--data")) spec.data = a.data;
  if (given("--test")) spec.test = a.test;
  if (given("--label-column")) spec.label_column = a.label_column;
  if (given("--label-proportion")) spec.label_proportion = a.label_proportion;
  if (given("--noise-kind")) spec.noise_kind = hcr::noise_kind_from_string(a.noise_kind);
  if (given("--noise-rate")) spec.noise_rate = a.noise_rate;
  auto& t = spec.train;
  if (given("--hcr-weight")) t.hcr.weight = a.hcr_weight;
  if (given("--no-hcr")) t.hcr.enabled = false;
  if (given("--unsup")) t.unsupervised = hcr::unsupervised_kind_from_string(a.unsup);
  if (given("--lambda-u")) t.lambda_u = a.lambda_u;
  if (given("--tau")) t.tau = a.tau;
  if (given("--grad-flow")) t.hcr.gradient_flow = hcr::gradient_flow_from_string(a.grad_flow);
  if (given("--seed")) t.seed = a.seed;
  if (given("--epochs")) t.epochs = a.epochs;
  if (given("--batch-size")) t.batch_size = a.batch_size;
  if (given("--lr")) t.learning_rate = a.lr;
  if (given("--momentum")) t.momentum = a.momentum;
  if (given("--precision")) t.precision = hcr::precision_from_string(a.precision);
  if (given("--encoder-widths")) t.network.encoder_widths = a.encoder_widths;
  if (given("--feature-dim")) t.network.feature_dim = a.feature_dim;
  if (given("--projection-dim")) t.network.projection_dim = a.projection_dim;
  if (given("--activation")) t.network.activation = hcr::activation_from_string(a.activation);
  if (spec.data.empty()) throw UsageError("train: --data is required (directly or through --config)");
  return spec;
}

int run_train(const TrainArgs& a, const CLI::App& cmd, const std::vector<std::string>& argv) {
  RunSpec spec = resolve(a, cmd);
  auto& cfg = spec.train;

  const hcr::Seed noise_seed = hcr::derive_seed(cfg.seed, 5u);
  const hcr::Seed mask_seed = hcr::derive_seed(cfg.seed, 6u);
  hcr::LabeledDataset train_ds = hcr::load_csv_dataset(spec.data, spec.label_column);
  if (spec.noise_rate > 0) train_ds = hcr::apply_noise(train_ds, {spec.noise_kind, spec.noise_rate, noise_seed});
  if (spec.label_proportion < 1) train_ds = hcr::mask_labels(train_ds, spec.label_proportion, mask_seed);
  else if (!(spec.label_proportion == 1)) throw hcr::ConfigError("label proportion must lie in (0, 1]");
  const hcr::LabeledDataset test_ds =
      spec.test.empty() ? train_ds
                        : hcr::align_labels(hcr::load_csv_dataset(spec.test, spec.label_column), train_ds.label_values);

  cfg.network.input_dim = train_ds.dim();
  cfg.network.num_classes = train_ds.num_classes;
  cfg.validate();

  const fs::path dir = prepare(output_dir(a.out));
  json m = manifest("train", argv);
  m["config"] = spec.to_json();
  m["seeds"] = {{"run", cfg.seed}, {"init", hcr::derive_seed(cfg.seed, 1u)}, {"noise", noise_seed}, {"mask", mask_seed}};
  m["data"] = {{"train_rows", train_ds.size()},
               {"labeled_examples", train_ds.labeled_count()},
               {"classes", train_ds.num_classes},
               {"label_values", train_ds.label_values},
               {"test_rows", test_ds.size()},
               {"evaluated_on", spec.test.empty() ? "train" : "test"}};
  m["artifacts"] = {{"metrics", "metrics.csv"}, {"checkpoint", "checkpoint.json"}, {"manifest", "manifest.json"}};
  write_json(dir / "manifest.json", m);

  const auto result = hcr::train(cfg, train_ds, test_ds);
  write_file(dir / "metrics.csv", [&](std::ostream& os) { hcr::write_metrics_csv(os, result.metrics); });
  write_file(dir / "checkpoint.json", [&](std::ostream& os) { hcr::write_checkpoint(os, cfg.network, result.params); });
  if (!result.metrics.empty()) {
    const auto& last = result.metrics.back();
    std::cout << "epochs " << last.epoch << " train_acc " << last.train_acc << " test_acc " << last.test_acc << " ks "
              << last.ks_statistic << '\n';
  }
  return 0;
}

// diagnose ------------------------------------------------------------------------------

struct DiagnoseArgs {
  std::string checkpoint;
  std::string data;
  std::string label_column = "label";
  Eigen::Index batch = 256;
  std::string out;
};

int run_diagnose(const DiagnoseArgs& a, const std::vector<std::string>& argv) {
  const auto ck = hcr::load_checkpoint(a.checkpoint);
  const auto ds = hcr::load_csv_dataset(a.data, a.label_column);
  if (ds.dim() != ck.network.input_dim)
    throw hcr::ShapeMismatch("dataset has " + std::to_string(ds.dim()) + " features, checkpoint expects " +
                             std::to_string(ck.network.input_dim));
  const Eigen::Index rows = std::min(a.batch, ds.size());
  if (rows < 8) throw hcr::ConfigError("diagnose needs at least 8 rows, dataset has " + std::to_string(ds.size()));

  const fs::path dir = prepare(output_dir(a.out));
  json m = manifest("diagnose", argv);
  m["config"] = {{"checkpoint", a.checkpoint}, {"data", a.data}, {"label_column", a.label_column}, {"batch", a.batch}};
  m["artifacts"] = {{"hist_g", "hist_g.csv"}, {"hist_h", "hist_h.csv"}, {"report", "diagnose.json"},
                    {"manifest", "manifest.json"}};
  write_json(dir / "manifest.json", m);

  const auto dc = hcr::distance_consistency(ck.params, hcr::MatD(ds.features.topRows(rows)), ck.network.activation);
  write_file(dir / "hist_g.csv", [&](std::ostream& os) { hcr::write_histogram_csv(os, dc.hist_g); });
  write_file(dir / "hist_h.csv", [&](std::ostream& os) { hcr::write_histogram_csv(os, dc.hist_h); });
  write_json(dir / "diagnose.json", json{{"ks_statistic", dc.ks_statistic},
                                         {"batch_rows", rows},
                                         {"bins", hcr::kDiagnosticBins},
                                         {"range", {0.0, 2.0}}});
  std::cout << "ks " << hcr::format_real(dc.ks_statistic) << '\n';
  return 0;
}

// verify-theory -------------------------------------------------------------------------

struct TheoryArgs {
  std::string only;
  hcr::TheoryOptions options;
  std::string out;
};

int run_verify_theory(const TheoryArgs& a, const std::vector<std::string>& argv) {
  const fs::path dir = prepare(output_dir(a.out));
  const std::vector<std::string> names =
      a.only.empty() ? std::vector<std::string>{"distance", "jl", "mi"} : std::vector<std::string>{a.only};

  json m = manifest("verify-theory", argv);
  m["config"] = {{"checks", names},
                 {"seeds", a.options.seeds},
                 {"base_seed", a.options.base_seed},
                 {"jl_target_dim", a.options.jl_target_dim}};
  json artifacts = json::object();
  for (const auto& n : names) artifacts[n] = "theory_" + n + ".json";
  artifacts["manifest"] = "manifest.json";
  m["artifacts"] = artifacts;
  write_json(dir / "manifest.json", m);

  bool all = true;
  for (const auto& n : names) {
    const auto check = n == "distance" ? hcr::verify_distance_asymptotics(a.options)
                       : n == "jl"     ? hcr::verify_jl(a.options)
                                       : hcr::verify_mi(a.options);
    write_file(dir / ("theory_" + n + ".json"), [&](std::ostream& os) { os << check.report.dump(2) << '\n'; });
    std::cout << n << ' ' << (check.passed ? "PASS" : "FAIL") << '\n';
    all = all && check.passed;
  }
  return all ? 0 : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  CLI::App app{"Hyperspherical consistency regularization toolkit"};
  app.set_version_flag("--version", HCR_VERSION);
  app.require_subcommand(1);
  const std::string out_help = std::string("Output directory (default: $") + kOutEnv + " or ./hcr-out)";

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic dataset as CSV");
  g->add_option("--kind", gen.kind, "Generator: blobs | shells")->required();
  g->add_option("--classes", gen.classes, "Number of classes")->check(CLI::PositiveNumber);
  g->add_option("--dim", gen.dim, "Feature dimension")->check(CLI::PositiveNumber);
  g->add_option("--per-class", gen.per_class, "Rows per class")->check(CLI::PositiveNumber);
  g->add_option("--concentration", gen.concentration, "Blob concentration (inverse noise variance)");
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--name", gen.name, "CSV file name inside the output directory");
  g->add_option("--out", gen.out, out_help);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train with the composite objective; flags override --config");
  t->add_option("--config", tr.config, "JSON config (or a previous run manifest)");
  t->add_option("--data", tr.data, "Training CSV");
  t->add_option("--test", tr.test, "Evaluation CSV (default: the training set)");
  t->add_option("--label-column", tr.label_column, "Name of the label column");
  t->add_option("--label-proportion", tr.label_proportion, "Fraction of training labels kept visible")
      ->check(CLI::Range(0.0, 1.0));
  t->add_option("--noise-kind", tr.noise_kind, "symmetric | asymmetric | instance")
      ->check(CLI::IsMember({"symmetric", "asymmetric", "instance"}));
  t->add_option("--noise-rate", tr.noise_rate, "Label corruption rate in [0, 1)");
  t->add_option("--hcr-weight", tr.hcr_weight, "Regularizer weight (0 skips it)");
  t->add_flag("--no-hcr", tr.no_hcr, "Disable the regularizer code path");
  t->add_option("--unsup", tr.unsup, "none | info_nce | pgc")->check(CLI::IsMember({"none", "info_nce", "pgc"}));
  t->add_option("--lambda-u", tr.lambda_u, "Unsupervised term weight");
  t->add_option("--tau", tr.tau, "Contrastive temperature");
  t->add_option("--grad-flow", tr.grad_flow, "classifier_only | both")
      ->check(CLI::IsMember({"classifier_only", "both"}));
  t->add_option("--seed", tr.seed, "Run seed");
  t->add_option("--epochs", tr.epochs, "Epochs")->check(CLI::NonNegativeNumber);
  t->add_option("--batch-size", tr.batch_size, "Batch size")->check(CLI::PositiveNumber);
  t->add_option("--lr", tr.lr, "SGD learning rate");
  t->add_option("--momentum", tr.momentum, "SGD momentum");
  t->add_option("--precision", tr.precision, "float32 | float64")->check(CLI::IsMember({"float32", "float64"}));
  t->add_option("--encoder-widths", tr.encoder_widths, "Hidden widths before the feature layer");
  t->add_option("--feature-dim", tr.feature_dim, "Encoder output width")->check(CLI::PositiveNumber);
  t->add_option("--projection-dim", tr.projection_dim, "Projection head output width");
  t->add_option("--activation", tr.activation, "tanh | relu")->check(CLI::IsMember({"tanh", "relu"}));
  t->add_option("--out", tr.out, out_help);

  DiagnoseArgs dg;
  auto* d = app.add_subcommand("diagnose", "Distance histograms and KS statistic for a checkpoint");
  d->add_option("--checkpoint", dg.checkpoint, "Checkpoint JSON")->required();
  d->add_option("--data", dg.data, "Dataset CSV")->required();
  d->add_option("--label-column", dg.label_column, "Name of the label column");
  d->add_option("--batch", dg.batch, "Leading rows used for the diagnostic (>= 8)")->check(CLI::Range(8, 1 << 20));
  d->add_option("--out", dg.out, out_help);

  TheoryArgs th;
  auto* v = app.add_subcommand("verify-theory", "Run the geometry checks; exit 0 iff every bound passes");
  v->add_option("--only", th.only, "distance | jl | mi")->check(CLI::IsMember({"distance", "jl", "mi"}));
  v->add_option("--target-dim", th.options.jl_target_dim, "Projection dimension for the JL check")
      ->check(CLI::IsMember({16, 32, 64, 128}));
  v->add_option("--seeds", th.options.seeds, "Seeds per check (default: per-check)")->check(CLI::PositiveNumber);
  v->add_option("--base-seed", th.options.base_seed, "Base seed");
  v->add_option("--out", th.out, out_help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*g) return run_generate(gen, args);
    if (*t) return run_train(tr, *t, args);
    if (*d) return run_diagnose(dg, args);
    if (*v) return run_verify_theory(th, args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const hcr::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}
