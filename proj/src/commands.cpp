#include "twk/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <ostream>
#include <set>

#include "text_util.hpp"
#include "twk/error.hpp"

namespace fs = std::filesystem;

namespace twk {

namespace {

struct InputImage {
  RasterImage image;
  std::string source;
  int label = -1;
};

std::string fmt6(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Keeps the first `per_class` items of each label and then the first `limit`.
std::vector<std::size_t> select_items(const std::vector<int>& labels, int per_class, std::size_t limit) {
  std::vector<std::size_t> out;
  std::map<int, int> taken;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (per_class > 0 && taken[labels[i]]++ >= per_class) continue;
    out.push_back(i);
    if (limit > 0 && out.size() == limit) break;
  }
  return out;
}

std::vector<InputImage> gather_inputs(const PreprocessOptions& opts) {
  std::vector<InputImage> items;
  if (!opts.idx_images.empty()) {
    std::vector<RasterImage> images = load_idx_images(opts.idx_images);
    std::vector<int> labels(images.size(), -1);
    if (!opts.idx_labels.empty()) {
      labels = load_idx_labels(opts.idx_labels);
      if (labels.size() != images.size())
        throw InputError("image and label files disagree on the record count (" + std::to_string(images.size()) +
                         " vs " + std::to_string(labels.size()) + ")");
    } else if (opts.per_class > 0) {
      throw InputError("per-class selection needs a label file");
    }
    for (std::size_t i : select_items(labels, opts.per_class, opts.limit))
      items.push_back({std::move(images[i]), opts.idx_images.filename().string() + "#" + std::to_string(i),
                       labels[i]});
    return items;
  }
  std::vector<fs::path> files;
  for (const auto& p : opts.pgm_inputs) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".pgm") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  std::vector<int> labels;
  for (const auto& f : files) {
    // A numeric parent directory name is the class label.
    const std::string dir = f.parent_path().filename().string();
    int label = -1;
    if (!dir.empty() && std::all_of(dir.begin(), dir.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
        dir.size() < 9)
      label = std::stoi(dir);
    labels.push_back(label);
  }
  for (std::size_t i : select_items(labels, opts.per_class, opts.limit))
    items.push_back({RasterImage{}, files[i].string(), labels[i]});
  return items;
}

}  // namespace

PreprocessSummary cmd_preprocess(const PreprocessOptions& opts, std::ostream& log) {
  opts.pipeline.validate();
  if (opts.idx_images.empty() == opts.pgm_inputs.empty())
    throw InputError("preprocess needs either IDX images or PGM inputs");
  std::vector<InputImage> items = gather_inputs(opts);
  const bool from_pgm = opts.idx_images.empty();

  struct Outcome {
    PointCloudGraph graph;
    std::string status = "ok";
    bool failed = false;
  };
  std::vector<Outcome> out(items.size());
  parallel_for(items.size(), opts.workers, [&](std::size_t i) {
    try {
      const RasterImage img = from_pgm ? load_pgm(items[i].source) : items[i].image;
      out[i].graph = image_to_graph(img, opts.pipeline);
    } catch (const EmptySkeleton&) {
      out[i].status = "skipped:empty-skeleton";
    } catch (const std::exception& e) {
      if (!opts.continue_on_error) throw InputError(items[i].source + ": " + e.what());
      out[i].status = std::string("failed:") + e.what();
      out[i].failed = true;
    }
  });

  fs::create_directories(opts.output_dir);
  PreprocessSummary sum;
  std::string manifest = "file\tsource\tlabel\tvertices\tedges\tstatus\n";
  for (std::size_t i = 0; i < items.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "g%05zu.pcg", i);
    const bool ok = out[i].status == "ok";
    if (ok) {
      save_graph(out[i].graph, opts.output_dir / name);
      ++sum.written;
    } else if (out[i].failed) {
      ++sum.failed;
      log << "error: " << items[i].source << ": " << out[i].status.substr(7) << "\n";
    } else {
      ++sum.skipped;
    }
    std::string status = out[i].status;
    std::replace(status.begin(), status.end(), '\t', ' ');
    std::replace(status.begin(), status.end(), '\n', ' ');
    manifest += std::string(ok ? name : "-") + "\t" + items[i].source + "\t" + std::to_string(items[i].label) + "\t" +
                std::to_string(ok ? out[i].graph.size() : 0) + "\t" +
                std::to_string(ok ? out[i].graph.edges().size() : 0) + "\t" + status + "\n";
  }
  detail::write_file((opts.output_dir / "manifest.tsv").string(), manifest);
  log << "preprocess: " << sum.written << " graphs written, " << sum.skipped << " skipped, " << sum.failed
      << " failed\n";
  return sum;
}

GraphDataset load_graph_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("graph directory not found: " + dir.string());
  GraphDataset ds;
  const fs::path manifest = dir / "manifest.tsv";
  if (fs::exists(manifest)) {
    const std::string text = detail::read_file(manifest.string());
    std::size_t pos = text.find('\n');
    int lineno = 1;
    while (pos != std::string::npos && pos + 1 < text.size()) {
      std::size_t nl = text.find('\n', pos + 1);
      std::string line = text.substr(pos + 1, nl == std::string::npos ? std::string::npos : nl - pos - 1);
      pos = nl;
      ++lineno;
      if (line.empty()) continue;
      std::vector<std::string> cols;
      std::size_t a = 0;
      for (;;) {
        std::size_t t = line.find('\t', a);
        cols.push_back(line.substr(a, t == std::string::npos ? std::string::npos : t - a));
        if (t == std::string::npos) break;
        a = t + 1;
      }
      if (cols.size() != 6) throw InputError(manifest.string() + ":" + std::to_string(lineno) + ": expected 6 columns");
      if (cols[5] != "ok") continue;
      ds.graphs.push_back(load_graph(dir / cols[0]));
      ds.ids.push_back(cols[0]);
      ds.labels.push_back(static_cast<int>(detail::parse_int(cols[2], "label")));
    }
  } else {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".pcg") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      ds.graphs.push_back(load_graph(f));
      ds.ids.push_back(f.filename().string());
      ds.labels.push_back(-1);
    }
  }
  if (ds.graphs.empty()) throw InputError("no graphs found in " + dir.string());
  return ds;
}

namespace {

ProgressFn progress_printer(std::ostream& log) {
  return [&log, next = std::size_t{1}](std::size_t done, std::size_t total) mutable {
    if (done * 10 >= next * total) {
      log << "  pairs " << done << "/" << total << "\n" << std::flush;
      while (next * total <= done * 10) ++next;
    }
  };
}

}  // namespace

void cmd_gram(const GramOptions& opts, std::ostream& log) {
  opts.kernel.validate();
  GraphDataset ds = load_graph_dataset(opts.graph_dir);
  log << "gram: " << ds.graphs.size() << " graphs, " << opts.workers << " workers\n";
  auto t0 = std::chrono::steady_clock::now();
  GramMatrix gram = gram_matrix(ds.graphs, opts.kernel, opts.workers, std::move(ds.ids), std::move(ds.labels),
                                progress_printer(log));
  save_gram(gram, opts.output);
  log << "gram: wall-clock " << fmt6(seconds_since(t0)) << " s\n";
}

// ---------------------------------------------------------------------------
// Experiments

ExperimentSettings parse_experiment(const ConfigFile& cfg, const fs::path& base_dir) {
  ExperimentSettings s;
  auto path = [&](const std::string& sec, const std::string& key, const fs::path& fallback) {
    if (!cfg.has(sec, key)) return fallback;
    fs::path p = cfg.get(sec, key, "");
    return p.is_absolute() ? p : base_dir / p;
  };
  s.dataset = cfg.get("data", "name", s.dataset);
  s.images = path("data", "images", s.images);
  s.labels = path("data", "labels", s.labels);
  s.per_class = static_cast<int>(cfg.get_int("data", "per_class", s.per_class));

  s.pipeline.threshold = static_cast<int>(cfg.get_int("pipeline", "threshold", s.pipeline.threshold));
  s.pipeline.spacing = cfg.get_double("pipeline", "spacing", s.pipeline.spacing);
  s.pipeline.min_component = static_cast<int>(cfg.get_int("pipeline", "min_component", s.pipeline.min_component));

  s.alphas = cfg.get_ints("grid", "alpha", s.alphas);
  s.betas = cfg.get_ints("grid", "beta", s.betas);
  s.gammas = cfg.get_ints("grid", "gamma", s.gammas);
  s.lambdas = cfg.get_doubles("grid", "lambda", s.lambdas);
  s.nus = cfg.get_doubles("grid", "nu", s.nus);
  s.taus = cfg.get_doubles("grid", "tau", s.taus);
  s.kappas = cfg.get_doubles("grid", "kappa", s.kappas);
  s.upsilons = cfg.get_doubles("grid", "upsilon", s.upsilons);
  s.normalize = cfg.get_bool("grid", "normalize", s.normalize);
  s.reduced_patterns = cfg.get_bool("grid", "reduced_patterns", s.reduced_patterns);
  s.pattern_cap = static_cast<std::size_t>(cfg.get_int("grid", "pattern_cap", static_cast<long long>(s.pattern_cap)));

  s.cv.outer_folds = static_cast<int>(cfg.get_int("cv", "outer_folds", s.cv.outer_folds));
  s.cv.inner_folds = static_cast<int>(cfg.get_int("cv", "inner_folds", s.cv.inner_folds));
  s.cv.c_grid = cfg.get_doubles("cv", "c", s.cv.c_grid);
  s.cv.seed = static_cast<std::uint64_t>(cfg.get_int("cv", "seed", static_cast<long long>(s.cv.seed)));
  s.cv.workers = static_cast<int>(cfg.get_int("cv", "workers", s.cv.workers));

  s.baseline = cfg.get_bool("baseline", "enabled", s.baseline);
  s.baseline_input = cfg.get("baseline", "input", s.baseline_input);
  s.baseline_downsample = static_cast<int>(cfg.get_int("baseline", "downsample", s.baseline_downsample));
  s.sigmas = cfg.get_doubles("baseline", "sigma", s.sigmas);

  s.output = path("output", "results", s.output);

  auto unused = cfg.unused_keys();
  if (!unused.empty()) {
    std::string msg = "unknown configuration keys:";
    for (const auto& k : unused) msg += " " + k;
    throw InputError(msg);
  }
  if (s.images.empty() || s.labels.empty()) throw InputError("experiment needs data.images and data.labels");
  if (s.baseline_input != "binary" && s.baseline_input != "raw")
    throw InputError("baseline.input must be 'binary' or 'raw'");
  for (auto* grid : {&s.alphas, &s.betas, &s.gammas})
    if (grid->empty()) throw InputError("empty integer grid in [grid]");
  for (auto* grid : {&s.lambdas, &s.nus, &s.taus, &s.kappas, &s.upsilons})
    if (grid->empty()) throw InputError("empty real grid in [grid]");
  if (s.baseline && s.sigmas.empty()) throw InputError("baseline.sigma is empty");
  return s;
}

namespace {

// Most frequent value; ties go to the smallest.
double mode_of(const std::vector<double>& xs) {
  std::map<double, int> counts;
  for (double x : xs) ++counts[x];
  double best = 0.0;
  int best_n = 0;
  for (auto [x, n] : counts)
    if (n > best_n) {
      best = x;
      best_n = n;
    }
  return best;
}

std::vector<std::pair<std::string, std::string>> selection_modes(const std::vector<KernelCandidate>& candidates,
                                                                 const CvResult& cv,
                                                                 const std::vector<std::string>& names) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& name : names) {
    std::vector<double> xs;
    for (const auto& f : cv.folds) xs.push_back(candidates[f.candidate].params.at(name));
    out.emplace_back(name, fmt6(mode_of(xs)));
  }
  std::vector<double> cs;
  for (const auto& f : cv.folds) cs.push_back(f.c);
  out.emplace_back("c", fmt6(mode_of(cs)));
  return out;
}

}  // namespace

std::vector<ExperimentRow> run_experiment(const ExperimentSettings& s, std::ostream& log) {
  s.pipeline.validate();
  std::vector<RasterImage> images = load_idx_images(s.images);
  std::vector<int> all_labels = load_idx_labels(s.labels);
  if (images.size() != all_labels.size()) throw InputError("image and label files disagree on the record count");
  std::vector<std::size_t> chosen = select_items(all_labels, s.per_class, 0);

  std::vector<PointCloudGraph> graphs(chosen.size());
  std::vector<char> usable(chosen.size(), 1);
  parallel_for(chosen.size(), s.cv.workers, [&](std::size_t i) {
    try {
      graphs[i] = image_to_graph(images[chosen[i]], s.pipeline);
    } catch (const EmptySkeleton&) {
      usable[i] = 0;
    }
  });
  std::vector<PointCloudGraph> data;
  std::vector<RasterImage> data_images;
  std::vector<int> labels;
  double vertices = 0.0;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    if (!usable[i]) {
      log << "experiment: record " << chosen[i] << " has an empty skeleton, dropped\n";
      continue;
    }
    vertices += static_cast<double>(graphs[i].size());
    data.push_back(std::move(graphs[i]));
    data_images.push_back(images[chosen[i]]);
    labels.push_back(all_labels[chosen[i]]);
  }
  if (data.empty()) throw InputError("experiment: no usable items");
  log << "experiment: " << data.size() << " items, mean vertex count " << fmt6(vertices / data.size()) << "\n";

  const int gamma_max = *std::max_element(s.gammas.begin(), s.gammas.end());
  std::vector<ExperimentRow> rows;
  for (int alpha : s.alphas)
    for (int beta : s.betas) {
      auto t0 = std::chrono::steady_clock::now();
      std::vector<KernelCandidate> candidates;
      for (double tau : s.taus)
        for (double kappa : s.kappas)
          for (double lambda : s.lambdas) {
            KernelConfig cfg;
            cfg.walk = {alpha, beta, gamma_max, lambda, s.nus.front()};
            cfg.scales = {tau, kappa, s.upsilons.front()};
            cfg.normalize = s.normalize;
            cfg.reduced_patterns = s.reduced_patterns;
            cfg.pattern_cap = s.pattern_cap;
            log << "experiment: alpha " << alpha << " beta " << beta << " tau " << fmt6(tau) << " kappa "
                << fmt6(kappa) << " lambda " << fmt6(lambda) << "\n";
            GramProfile prof =
                gram_profile(data, cfg, gamma_max, s.nus, s.upsilons, s.cv.workers, progress_printer(log));
            for (int gamma : s.gammas)
              for (std::size_t v = 0; v < s.nus.size(); ++v)
                for (std::size_t u = 0; u < s.upsilons.size(); ++u) {
                  KernelCandidate c;
                  c.params = {{"gamma", gamma}, {"lambda", lambda}, {"nu", s.nus[v]},
                              {"tau", tau},     {"kappa", kappa},   {"upsilon", s.upsilons[u]}};
                  for (const auto& [k, x] : c.params) c.label += (c.label.empty() ? "" : ",") + k + "=" + fmt6(x);
                  c.gram = std::make_shared<const Matrix>(prof[u][v][gamma - 1]);
                  candidates.push_back(std::move(c));
                }
          }
      ExperimentRow row;
      row.kernel = "treewalk";
      row.alpha = alpha;
      row.beta = beta;
      row.items = data.size();
      row.cv = nested_cv(candidates, labels, s.cv);
      row.modes = selection_modes(candidates, row.cv, {"gamma", "lambda", "nu", "tau", "kappa", "upsilon"});
      log << "experiment: alpha " << alpha << " beta " << beta << " error " << fmt6(100 * row.cv.mean_error)
          << " +- " << fmt6(100 * row.cv.std_error) << " (x100), " << fmt6(seconds_since(t0)) << " s\n";
      rows.push_back(std::move(row));
    }

  if (s.baseline) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<double>> vectors;
    for (const auto& img : data_images) {
      if (s.baseline_input == "raw") {
        std::vector<double> v(img.pixels.size());
        for (std::size_t p = 0; p < v.size(); ++p) v[p] = img.pixels[p] / 255.0;
        vectors.push_back(std::move(v));
      } else {
        vectors.push_back(binary_feature_vector(img, s.pipeline.threshold, s.baseline_downsample));
      }
    }
    std::vector<KernelCandidate> candidates;
    for (double sigma : s.sigmas) {
      KernelCandidate c;
      c.label = "sigma=" + fmt6(sigma);
      c.params = {{"sigma", sigma}};
      c.gram = std::make_shared<const Matrix>(rbf_baseline_gram(vectors, sigma));
      candidates.push_back(std::move(c));
    }
    ExperimentRow row;
    row.kernel = "rbf";
    row.items = data.size();
    row.cv = nested_cv(candidates, labels, s.cv);
    row.modes = selection_modes(candidates, row.cv, {"sigma"});
    log << "experiment: rbf error " << fmt6(100 * row.cv.mean_error) << " +- " << fmt6(100 * row.cv.std_error)
        << " (x100), " << fmt6(seconds_since(t0)) << " s\n";
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_results_csv(const ExperimentSettings& s, const std::vector<ExperimentRow>& rows) {
  static const std::vector<std::string> params{"gamma", "lambda", "nu", "tau", "kappa", "upsilon", "sigma", "c"};
  std::string out = "dataset,kernel,alpha,beta,items,mean_error,std_error,fold_errors";
  for (const auto& p : params) out += "," + p;
  out += ",seed\n";
  for (const auto& r : rows) {
    out += s.dataset + "," + r.kernel + "," + (r.alpha ? std::to_string(r.alpha) : "") + "," +
           (r.beta ? std::to_string(r.beta) : "") + "," + std::to_string(r.items) + "," + fmt6(r.cv.mean_error) +
           "," + fmt6(r.cv.std_error) + ",";
    for (std::size_t f = 0; f < r.cv.folds.size(); ++f) out += (f ? ";" : "") + fmt6(r.cv.folds[f].test_error);
    for (const auto& p : params) {
      out += ",";
      for (const auto& [name, value] : r.modes)
        if (name == p) out += value;
    }
    out += "," + std::to_string(s.cv.seed) + "\n";
  }
  return out;
}

void cmd_experiment(const ExperimentSettings& s, std::ostream& log) {
  auto t0 = std::chrono::steady_clock::now();
  auto rows = run_experiment(s, log);
  detail::write_file(s.output.string(), format_results_csv(s, rows));
  log << "experiment: wrote " << s.output.string() << ", wall-clock " << fmt6(seconds_since(t0)) << " s\n";
}

int cmd_verify(const VerifyOptions& opts, std::ostream& out) {
  out << "verify " << (opts.full ? "full" : "quick") << " seed " << opts.seed
      << (opts.inject_fault ? " fault-injection" : "") << "\n";
  VerifyReport rep = run_verify(opts);
  out << rep.format();
  return rep.passed() ? 0 : 1;
}

}  // namespace twk
