#include <CLI11.hpp>
#include <iostream>

#include "twk/commands.hpp"
#include "twk/error.hpp"

namespace {

struct WalkFlags {
  int alpha = 1, beta = 1, gamma = 1;
  double lambda = 1.0, nu = 0.1, tau = 0.05, kappa = 0.001, upsilon = 0.05;
};

void add_kernel_flags(CLI::App* app, WalkFlags& f) {
  app->add_option("--alpha", f.alpha, "maximum arity of tree-walks")->capture_default_str();
  app->add_option("--beta", f.beta, "distinctness order")->capture_default_str();
  app->add_option("--gamma", f.gamma, "maximum depth of tree-walks")->capture_default_str();
  app->add_option("--lambda", f.lambda, "per-node penalization")->capture_default_str();
  app->add_option("--nu", f.nu, "per-leaf penalization")->capture_default_str();
  app->add_option("--tau", f.tau, "bandwidth of the position kernel")->capture_default_str();
  app->add_option("--kappa", f.kappa, "ridge of the position kernel")->capture_default_str();
  app->add_option("--upsilon", f.upsilon, "bandwidth of the attribute kernel")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree-walk kernels between point-cloud graphs"};
  app.require_subcommand(1);

  // preprocess
  twk::PreprocessOptions pre;
  std::string pre_images, pre_labels, pre_out;
  std::vector<std::string> pre_pgm;
  auto* cpre = app.add_subcommand("preprocess", "turn IDX or PGM images into graph files");
  cpre->add_option("--images", pre_images, "IDX image file");
  cpre->add_option("--labels", pre_labels, "IDX label file");
  cpre->add_option("--pgm", pre_pgm, "PGM files or directories (numeric parent directory = label)");
  cpre->add_option("--out", pre_out, "output directory")->required();
  cpre->add_option("--threshold", pre.pipeline.threshold, "binarization threshold")->capture_default_str();
  cpre->add_option("--spacing", pre.pipeline.spacing, "subsampling spacing in pixels")->capture_default_str();
  cpre->add_option("--min-component", pre.pipeline.min_component, "smallest kept skeleton component")
      ->capture_default_str();
  cpre->add_option("--per-class", pre.per_class, "keep the first n images of each class (0 = all)");
  cpre->add_option("--limit", pre.limit, "keep the first n images (0 = all)");
  cpre->add_flag("--continue-on-error", pre.continue_on_error, "record failing images and go on");
  cpre->add_option("--workers", pre.workers, "worker threads")->capture_default_str();

  // gram
  twk::GramOptions gram;
  WalkFlags gflags;
  std::string gram_dir, gram_out;
  std::uint64_t gram_seed = 1;
  auto* cgram = app.add_subcommand("gram", "compute a Gram matrix over a graph directory");
  cgram->add_option("--graphs", gram_dir, "directory written by preprocess")->required();
  cgram->add_option("--out", gram_out, "output Gram file")->required();
  add_kernel_flags(cgram, gflags);
  cgram->add_flag("--normalize", gram.kernel.normalize, "cosine-normalize the kernel");
  cgram->add_flag("--reduced", gram.kernel.reduced_patterns, "chain-window pattern set");
  cgram->add_option("--pattern-cap", gram.kernel.pattern_cap, "maximum patterns per graph")->capture_default_str();
  cgram->add_option("--workers", gram.workers, "worker threads")->capture_default_str();
  cgram->add_option("--seed", gram_seed, "accepted for uniformity; the Gram is deterministic");

  // experiment
  std::string exp_config, exp_out;
  int exp_workers = 0;
  std::int64_t exp_seed = -1;
  std::vector<int> exp_alpha, exp_beta, exp_gamma;
  std::vector<double> exp_lambda, exp_nu, exp_tau, exp_kappa, exp_upsilon;
  bool exp_normalize = false;
  auto* cexp = app.add_subcommand("experiment", "nested cross-validation over a parameter grid");
  cexp->add_option("--config", exp_config, "experiment configuration file")->required()->check(CLI::ExistingFile);
  cexp->add_option("--out", exp_out, "results CSV (overrides output.results)");
  cexp->add_option("--workers", exp_workers, "worker threads (overrides cv.workers)");
  cexp->add_option("--seed", exp_seed, "fold seed (overrides cv.seed)");
  cexp->add_option("--alpha", exp_alpha, "arity grid")->delimiter(',');
  cexp->add_option("--beta", exp_beta, "order grid")->delimiter(',');
  cexp->add_option("--gamma", exp_gamma, "depth grid")->delimiter(',');
  cexp->add_option("--lambda", exp_lambda, "lambda grid")->delimiter(',');
  cexp->add_option("--nu", exp_nu, "nu grid")->delimiter(',');
  cexp->add_option("--tau", exp_tau, "tau grid")->delimiter(',');
  cexp->add_option("--kappa", exp_kappa, "kappa grid")->delimiter(',');
  cexp->add_option("--upsilon", exp_upsilon, "upsilon grid")->delimiter(',');
  cexp->add_flag("--normalize", exp_normalize, "force cosine normalization on");

  // verify
  twk::VerifyOptions ver;
  std::string scale = "quick";
  auto* cver = app.add_subcommand("verify", "run the verification suites");
  cver->add_option("scale", scale, "quick or full")->check(CLI::IsMember({"quick", "full"}))->capture_default_str();
  cver->add_option("--seed", ver.seed, "random seed")->capture_default_str();
  cver->add_option("--workers", ver.workers, "worker threads")->capture_default_str();
  cver->add_flag("--inject-fault", ver.inject_fault, "run with a deliberate fault in the DP (must fail)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cpre->parsed()) {
      pre.idx_images = pre_images;
      pre.idx_labels = pre_labels;
      for (const auto& p : pre_pgm) pre.pgm_inputs.emplace_back(p);
      pre.output_dir = pre_out;
      auto sum = twk::cmd_preprocess(pre, std::cerr);
      return sum.failed ? 1 : 0;
    }
    if (cgram->parsed()) {
      gram.graph_dir = gram_dir;
      gram.output = gram_out;
      gram.kernel.walk = {gflags.alpha, gflags.beta, gflags.gamma, gflags.lambda, gflags.nu};
      gram.kernel.scales = {gflags.tau, gflags.kappa, gflags.upsilon};
      twk::cmd_gram(gram, std::cerr);
      return 0;
    }
    if (cexp->parsed()) {
      std::filesystem::path path = exp_config;
      twk::ExperimentSettings s = twk::parse_experiment(twk::ConfigFile::load(path), path.parent_path());
      if (!exp_out.empty()) s.output = exp_out;
      if (exp_workers > 0) s.cv.workers = exp_workers;
      if (exp_seed >= 0) s.cv.seed = static_cast<std::uint64_t>(exp_seed);
      if (!exp_alpha.empty()) s.alphas = exp_alpha;
      if (!exp_beta.empty()) s.betas = exp_beta;
      if (!exp_gamma.empty()) s.gammas = exp_gamma;
      if (!exp_lambda.empty()) s.lambdas = exp_lambda;
      if (!exp_nu.empty()) s.nus = exp_nu;
      if (!exp_tau.empty()) s.taus = exp_tau;
      if (!exp_kappa.empty()) s.kappas = exp_kappa;
      if (!exp_upsilon.empty()) s.upsilons = exp_upsilon;
      if (exp_normalize) s.normalize = true;
      twk::cmd_experiment(s, std::cerr);
      return 0;
    }
    if (cver->parsed()) {
      ver.full = scale == "full";
      return twk::cmd_verify(ver, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
