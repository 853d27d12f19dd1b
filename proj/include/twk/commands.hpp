#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "twk/charpipe.hpp"
#include "twk/classify.hpp"
#include "twk/config.hpp"
#include "twk/engine.hpp"
#include "twk/verify.hpp"

namespace twk {

struct PreprocessOptions {
  std::filesystem::path idx_images;               // IDX input (with idx_labels)
  std::filesystem::path idx_labels;
  std::vector<std::filesystem::path> pgm_inputs;  // PGM files or directories of them
  std::filesystem::path output_dir;
  PipelineConfig pipeline;
  int per_class = 0;       // keep the first n images of each class; 0 keeps all
  std::size_t limit = 0;   // keep the first n images; 0 keeps all
  bool continue_on_error = false;
  int workers = 1;
};

struct PreprocessSummary {
  std::size_t written = 0;
  std::size_t skipped = 0;  // empty skeleton after component filtering
  std::size_t failed = 0;   // errors tolerated by continue_on_error
};

/// One `pcg` file per image plus `manifest.tsv` with columns
/// file, source, label, vertices, edges, status.
PreprocessSummary cmd_preprocess(const PreprocessOptions& opts, std::ostream& log);

struct GraphDataset {
  std::vector<PointCloudGraph> graphs;
  std::vector<std::string> ids;
  std::vector<int> labels;  // -1 when unknown
};

/// Graphs listed in `manifest.tsv` (status ok) in manifest order, or every
/// `*.pcg` file sorted by name when there is no manifest.
GraphDataset load_graph_dataset(const std::filesystem::path& dir);

struct GramOptions {
  std::filesystem::path graph_dir;
  std::filesystem::path output;
  KernelConfig kernel;
  int workers = 1;
};

void cmd_gram(const GramOptions& opts, std::ostream& log);

struct ExperimentSettings {
  std::string dataset = "mnist";
  std::filesystem::path images;
  std::filesystem::path labels;
  int per_class = 20;
  PipelineConfig pipeline;

  std::vector<int> alphas{1};
  std::vector<int> betas{1, 2, 4};
  std::vector<int> gammas{1, 2, 4, 8, 16, 24};
  std::vector<double> lambdas{1.0};
  std::vector<double> nus{0.1, 0.01};
  std::vector<double> taus{0.05, 0.01, 0.1};
  std::vector<double> kappas{0.001};
  std::vector<double> upsilons{0.05, 0.01, 0.1};
  bool normalize = true;
  bool reduced_patterns = false;
  std::size_t pattern_cap = 100000;

  CvPlan cv;

  bool baseline = true;
  std::string baseline_input = "binary";  // binary (downsampled) or raw
  int baseline_downsample = 2;
  std::vector<double> sigmas{1, 2, 3, 4, 6, 8};

  std::filesystem::path output = "results.csv";
};

/// Reads an experiment description; relative paths are taken relative to
/// `base_dir`. Unknown keys are rejected.
ExperimentSettings parse_experiment(const ConfigFile& cfg, const std::filesystem::path& base_dir);

struct ExperimentRow {
  std::string kernel;  // "treewalk" or "rbf"
  int alpha = 0;
  int beta = 0;
  std::size_t items = 0;
  CvResult cv;
  std::vector<std::pair<std::string, std::string>> modes;  // selected-parameter modes
};

std::vector<ExperimentRow> run_experiment(const ExperimentSettings& s, std::ostream& log);
std::string format_results_csv(const ExperimentSettings& s, const std::vector<ExperimentRow>& rows);

/// run_experiment, then writes the CSV to s.output.
void cmd_experiment(const ExperimentSettings& s, std::ostream& log);

/// Prints the report; returns the process exit code.
int cmd_verify(const VerifyOptions& opts, std::ostream& out);

}  // namespace twk
