#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "votereg/dataprep.hpp"
#include "votereg/optweight.hpp"
#include "votereg/simbench.hpp"
#include "votereg/voteselect.hpp"

namespace {

using json = nlohmann::json;
using namespace votereg;

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitConfigError = 2;

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Loss grammar: "<selection>;<estimation>", each a comma list of
//   q(tau) | sq | abs | qgrid(K,tenths|even) | cq(K,tenths|even)
// qgrid expands to K separate check losses; tenths = k/10, even = k/(K+1).
// ---------------------------------------------------------------------------

std::vector<std::string> split_top_level(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string current;
  int depth = 0;
  for (char c : text) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == sep && depth == 0) {
      parts.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  parts.push_back(current);
  return parts;
}

std::string strip(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t");
  return text.substr(begin, end - begin + 1);
}

std::vector<double> make_levels(int count, const std::string& spacing) {
  if (count < 1) throw ConfigError("quantile grid size must be positive");
  std::vector<double> levels(static_cast<std::size_t>(count));
  if (spacing == "tenths") {
    if (count > 9) throw ConfigError("tenths spacing supports at most 9 levels");
    for (int k = 1; k <= count; ++k)
      levels[static_cast<std::size_t>(k - 1)] = static_cast<double>(k) / 10.0;
  } else if (spacing == "even") {
    for (int k = 1; k <= count; ++k)
      levels[static_cast<std::size_t>(k - 1)] =
          static_cast<double>(k) / static_cast<double>(count + 1);
  } else {
    throw ConfigError("unknown spacing '" + spacing + "' (expected tenths|even)");
  }
  return levels;
}

std::vector<LossSpec> parse_loss_list(const std::string& text) {
  std::vector<LossSpec> losses;
  for (const std::string& raw : split_top_level(text, ',')) {
    const std::string item = strip(raw);
    if (item.empty()) throw ConfigError("empty loss item");
    if (item == "sq") {
      losses.push_back(LossSpec::squared());
      continue;
    }
    if (item == "abs") {
      losses.push_back(LossSpec::absolute());
      continue;
    }
    const auto open = item.find('(');
    if (open == std::string::npos || item.back() != ')')
      throw ConfigError("cannot parse loss item '" + item + "'");
    const std::string head = item.substr(0, open);
    const std::string body = item.substr(open + 1, item.size() - open - 2);
    try {
      if (head == "q") {
        losses.push_back(LossSpec::quantile(std::stod(body)));
      } else if (head == "qgrid" || head == "cq") {
        const auto args = split_top_level(body, ',');
        if (args.size() != 2) throw ConfigError("'" + head + "' needs (K,spacing)");
        const auto levels = make_levels(std::stoi(strip(args[0])), strip(args[1]));
        if (head == "cq") {
          losses.push_back(LossSpec::composite(levels));
        } else {
          for (double tau : levels) losses.push_back(LossSpec::quantile(tau));
        }
      } else {
        throw ConfigError("unknown loss '" + head + "'");
      }
    } catch (const Error& e) {
      throw ConfigError(std::string("bad loss item '") + item + "': " + e.what());
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad numeric argument in loss item '" + item + "'");
    }
  }
  if (losses.empty()) throw ConfigError("at least one loss required");
  return losses;
}

std::pair<std::vector<LossSpec>, std::vector<LossSpec>> parse_losses(const std::string& spec) {
  const auto parts = split_top_level(spec, ';');
  if (parts.size() > 2) throw ConfigError("losses spec has more than two ';' sections");
  auto selection = parse_loss_list(parts[0]);
  auto estimation = parts.size() == 2 ? parse_loss_list(parts[1]) : selection;
  return {std::move(selection), std::move(estimation)};
}

// ---------------------------------------------------------------------------
// Run configuration: defaults < config file < flags.
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string config_path;
  std::string data_path;
  std::string validation_path;
  std::string response = "y";
  bool no_header = false;
  std::string out_dir = ".";
  std::string losses = "qgrid(9,tenths)";
  std::uint64_t seed = 0;
  std::string workers = "auto";
  int folds = 5;
  int grid = 40;
  std::vector<int> alpha_candidates;

  int n = 200;
  int p = 12;
  double rho = 0.5;
  int replicates = 200;
  int validation_n = 2000;
  std::string distributions = "n03";
  std::string methods = "wqr-vote,ladr,lsr,cqr";
  bool timing = false;

  std::string response_probe;
  int top = 300;
  double max_quantile = 0.25;
  double min_range = 1.0;
  bool probes_in_columns = false;

  std::string density = "normal(1)";
  std::string k_values = "9,29,99";
};

template <typename T>
void maybe_set(const json& section, const char* key, T& target) {
  if (section.contains(key)) target = section.at(key).get<T>();
}

void apply_config_file(RunConfig& config, const CLI::App& app, const CLI::App* sub) {
  if (config.config_path.empty()) return;
  std::ifstream in(config.config_path);
  if (!in) throw ConfigError("cannot open config file '" + config.config_path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad JSON in config file: ") + e.what());
  }

  auto flag_absent = [&](const std::string& name) {
    const CLI::Option* global = app.get_option_no_throw(name);
    if (global != nullptr && global->count() > 0) return false;
    if (sub == nullptr) return true;
    const CLI::Option* local = sub->get_option_no_throw(name);
    return local == nullptr || local->count() == 0;
  };

  auto set_if_absent = [&](const char* key, const std::string& flag, auto& target) {
    if (doc.contains(key) && flag_absent(flag)) target = doc.at(key).get<std::decay_t<decltype(target)>>();
  };

  set_if_absent("data", "--data", config.data_path);
  set_if_absent("validation", "--validation", config.validation_path);
  set_if_absent("response", "--response", config.response);
  set_if_absent("no_header", "--no-header", config.no_header);
  set_if_absent("out", "--out", config.out_dir);
  set_if_absent("losses", "--losses", config.losses);
  set_if_absent("seed", "--seed", config.seed);
  set_if_absent("workers", "--workers", config.workers);
  set_if_absent("folds", "--folds", config.folds);
  set_if_absent("grid", "--grid", config.grid);
  set_if_absent("alpha_candidates", "--alpha", config.alpha_candidates);

  if (doc.contains("simulate")) {
    const json& sim = doc.at("simulate");
    if (flag_absent("--n")) maybe_set(sim, "n", config.n);
    if (flag_absent("--p")) maybe_set(sim, "p", config.p);
    if (flag_absent("--rho")) maybe_set(sim, "rho", config.rho);
    if (flag_absent("--replicates")) maybe_set(sim, "replicates", config.replicates);
    if (flag_absent("--validation-n")) maybe_set(sim, "validation_n", config.validation_n);
    if (flag_absent("--distributions")) maybe_set(sim, "distributions", config.distributions);
    if (flag_absent("--methods")) maybe_set(sim, "methods", config.methods);
    if (flag_absent("--timing")) maybe_set(sim, "timing", config.timing);
  }
  if (doc.contains("screen")) {
    const json& screen = doc.at("screen");
    if (flag_absent("--response-probe")) maybe_set(screen, "response_probe", config.response_probe);
    if (flag_absent("--top")) maybe_set(screen, "top", config.top);
    if (flag_absent("--max-quantile")) maybe_set(screen, "max_quantile", config.max_quantile);
    if (flag_absent("--min-range")) maybe_set(screen, "min_range", config.min_range);
    if (flag_absent("--probes-in-columns"))
      maybe_set(screen, "probes_in_columns", config.probes_in_columns);
  }
  if (doc.contains("diagnose")) {
    const json& diag = doc.at("diagnose");
    if (flag_absent("--density")) maybe_set(diag, "density", config.density);
    if (flag_absent("--k")) maybe_set(diag, "k_values", config.k_values);
  }
}

unsigned resolve_workers(const std::string& text, std::size_t task_cap) {
  unsigned workers;
  if (text == "auto") {
    workers = std::max(1u, std::thread::hardware_concurrency());
  } else {
    try {
      const long value = std::stol(text);
      if (value < 1) throw ConfigError("workers must be positive");
      workers = static_cast<unsigned>(value);
    } catch (const std::invalid_argument&) {
      throw ConfigError("workers must be a positive integer or 'auto'");
    }
  }
  if (task_cap > 0) workers = static_cast<unsigned>(std::min<std::size_t>(workers, task_cap));
  return workers;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (const std::string& part : split_top_level(text, ',')) {
    const std::string item = strip(part);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ColumnRef parse_response_ref(const std::string& text, bool has_header) {
  if (!text.empty() && text.find_first_not_of("0123456789") == std::string::npos) {
    const int one_based = std::stoi(text);
    if (one_based < 1) throw ConfigError("response column number is 1-based");
    return ColumnRef{one_based - 1};
  }
  if (!has_header)
    throw ConfigError("header-less data needs a numeric (1-based) response column");
  return ColumnRef{text};
}

ErrorDensity parse_density(const std::string& text) {
  const auto open = text.find('(');
  if (open == std::string::npos || text.back() != ')')
    throw ConfigError("density must be normal(var) or uniform(a,b)");
  const std::string head = strip(text.substr(0, open));
  const auto args = split_list(text.substr(open + 1, text.size() - open - 2));
  try {
    if (head == "normal" && args.size() == 1) return ErrorDensity::normal(std::stod(args[0]));
    if (head == "uniform" && args.size() == 2)
      return ErrorDensity::uniform(std::stod(args[0]), std::stod(args[1]));
  } catch (const Error& e) {
    throw ConfigError(std::string("bad density: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad numeric argument in density '" + text + "'");
  }
  throw ConfigError("unknown density '" + text + "'");
}

std::string predictor_label(const Dataset& data, int j) {
  if (!data.column_names.empty()) return data.column_names[static_cast<std::size_t>(j)];
  return std::to_string(j + 1);
}

std::string joined_labels(const Dataset& data, const std::vector<int>& indices) {
  std::string out;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i) out += ",";
    out += predictor_label(data, indices[i]);
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << content;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json array = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) array.push_back(v[i]);
  return array;
}

// ---------------------------------------------------------------------------
// Commands.
// ---------------------------------------------------------------------------

int cmd_fit(const RunConfig& config) {
  if (config.data_path.empty()) throw ConfigError("fit needs --data");
  auto [selection, estimation] = parse_losses(config.losses);
  if (config.grid < 1) throw ConfigError("grid size must be positive");
  if (config.folds < 2) throw ConfigError("folds must be at least 2");

  const ColumnRef response = parse_response_ref(config.response, !config.no_header);
  const Dataset data = load_csv(config.data_path, !config.no_header, response);

  TuningCriterion tuning;
  if (!config.validation_path.empty())
    tuning.validation = load_csv(config.validation_path, !config.no_header, response);
  tuning.alpha_candidates = config.alpha_candidates;
  tuning.cv_folds = config.folds;
  tuning.cv_seed = config.seed;

  PipelineConfig pipeline;
  pipeline.lambda_grid_size = config.grid;

  SolverConfig solver;
  WorkerPool pool(resolve_workers(config.workers, selection.size()));

  std::cerr << "fitting: n=" << data.n() << " p=" << data.p() << " K=" << selection.size()
            << " K'=" << estimation.size() << "\n";
  const PipelineResult result = run_pipeline(data, selection, estimation, tuning, solver,
                                             pipeline, &pool);
  for (const std::string& warning : result.warnings) std::cerr << "warning: " << warning << "\n";

  json out;
  out["command"] = "fit";
  out["n"] = data.n();
  out["p"] = data.p();
  json sel_losses = json::array();
  for (const LossSpec& loss : selection) sel_losses.push_back(loss.describe());
  out["selection_losses"] = sel_losses;
  json est_losses = json::array();
  for (const LossSpec& loss : estimation) est_losses.push_back(loss.describe());
  out["estimation_losses"] = est_losses;
  out["lambda"] = result.lambda_by_loss;
  out["xi"] = vector_to_json(result.xi);
  out["alpha"] = result.vote.alpha;
  out["vote_counts"] = result.vote.vote_counts;
  json selected_names = json::array();
  for (int j : result.vote.selected) selected_names.push_back(predictor_label(data, j));
  out["selected"] = selected_names;
  json selected_indices = json::array();
  for (int j : result.vote.selected) selected_indices.push_back(j + 1);
  out["selected_indices"] = selected_indices;
  json per_loss = json::array();
  json per_loss_intercepts = json::array();
  for (const SparseFit& fit : result.refits) {
    per_loss.push_back(vector_to_json(fit.coefficients));
    per_loss_intercepts.push_back(vector_to_json(fit.intercepts));
  }
  out["per_loss_coefficients"] = per_loss;
  out["per_loss_intercepts"] = per_loss_intercepts;
  out["weights"] = vector_to_json(result.plan.w_star);
  out["final_coefficients"] = vector_to_json(result.combined.coefficients);
  out["weight_plan"] = {{"tau", result.plan.tau},
                        {"beta_hat", vector_to_json(result.plan.beta_hat)},
                        {"f_hat", vector_to_json(result.plan.f_hat)},
                        {"bandwidth", result.plan.bandwidth},
                        {"uniform_fallback", result.plan.uniform_fallback}};
  out["empty_selection"] = result.empty_selection;
  out["warnings"] = result.warnings;

  std::ostringstream table;
  char line[256];
  table << "selected: " << joined_labels(data, result.vote.selected) << "\n";
  std::snprintf(line, sizeof(line), "alpha: %d of K=%zu\n", result.vote.alpha,
                selection.size());
  table << line;
  std::snprintf(line, sizeof(line), "%-6s %-20s %6s %14s\n", "index", "name", "votes",
                "coefficient");
  table << line;
  for (int j : result.vote.selected) {
    std::snprintf(line, sizeof(line), "%-6d %-20s %6d %14.6f\n", j + 1,
                  predictor_label(data, j).c_str(),
                  result.vote.vote_counts[static_cast<std::size_t>(j)],
                  result.combined.coefficients[j]);
    table << line;
  }
  table << "weights:";
  for (Eigen::Index k = 0; k < result.plan.w_star.size(); ++k) {
    std::snprintf(line, sizeof(line), " %.4f", result.plan.w_star[k]);
    table << line;
  }
  table << "\nlambda:";
  for (double lambda : result.lambda_by_loss) {
    std::snprintf(line, sizeof(line), " %.6g", lambda);
    table << line;
  }
  table << "\n";

  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);
  write_text_file(dir / "results.json", out.dump(2) + "\n");
  write_text_file(dir / "report.txt", table.str());
  std::cout << table.str();
  return kExitOk;
}

int cmd_simulate(const RunConfig& config) {
  std::vector<ErrorDist> dists;
  if (config.distributions == "all") {
    dists = all_dists();
  } else {
    for (const std::string& token : split_list(config.distributions)) {
      const auto dist = parse_dist(token);
      if (!dist) throw ConfigError("unknown distribution '" + token + "'");
      dists.push_back(*dist);
    }
  }
  if (dists.empty()) throw ConfigError("no distributions selected");

  std::vector<Method> methods;
  for (const std::string& token : split_list(config.methods)) {
    const auto method = parse_method(token);
    if (!method) throw ConfigError("unknown method '" + token + "'");
    methods.push_back(*method);
  }
  if (methods.empty()) throw ConfigError("no methods selected");

  SimDesign design;
  design.n = config.n;
  design.p = config.p;
  design.rho = config.rho;
  design.replicates = config.replicates;
  design.validation_n = config.validation_n;
  design.seed = config.seed;
  design.pipeline.lambda_grid_size = config.grid;

  WorkerPool pool(resolve_workers(config.workers, static_cast<std::size_t>(config.replicates)));

  SimReport report;
  for (ErrorDist dist : dists) {
    design.error_dist = dist;
    std::cerr << "simulate: dist=" << name_of(dist) << " n=" << design.n
              << " p=" << design.p << " replicates=" << design.replicates << "\n";
    report.append(run_study(design, methods, &pool));
  }

  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(dir / "report.csv", std::ios::binary);
    if (!csv) throw InputError("cannot write report.csv");
    write_report_csv(report, csv, config.timing);
  }
  const std::string table = format_report_table(report, config.timing);
  write_text_file(dir / "report.txt", table);
  std::cout << table;
  return kExitOk;
}

int cmd_screen(const RunConfig& config) {
  if (config.data_path.empty()) throw ConfigError("screen needs --data");
  if (config.response_probe.empty()) throw ConfigError("screen needs --response-probe");

  const ExpressionMatrix matrix =
      load_expression_csv(config.data_path, !config.probes_in_columns);
  const Dataset screened = screen_probes(matrix, config.response_probe, config.top,
                                         config.max_quantile, config.min_range);

  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);
  write_dataset_csv(screened, (dir / "screened.csv").string(), config.response_probe);

  std::ostringstream table;
  table << "probes:     " << matrix.probe_ids.size() << "\n"
        << "samples:    " << matrix.sample_ids.size() << "\n"
        << "predictors: " << screened.p() << "\n"
        << "response:   " << config.response_probe << "\n";
  std::cout << table.str();
  return kExitOk;
}

int cmd_diagnose(const RunConfig& config) {
  const ErrorDensity density = parse_density(config.density);
  std::vector<int> k_values;
  for (const std::string& token : split_list(config.k_values)) {
    try {
      k_values.push_back(std::stoi(token));
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad K value '" + token + "'");
    }
  }
  if (k_values.empty()) throw ConfigError("no K values given");

  const auto table = fisher_limit_check(density, k_values);

  double max_dev = 0.0;
  for (int k_count : k_values) {
    std::vector<double> tau(static_cast<std::size_t>(k_count));
    Eigen::VectorXd f(k_count);
    for (int k = 1; k <= k_count; ++k) {
      tau[static_cast<std::size_t>(k - 1)] =
          static_cast<double>(k) / static_cast<double>(k_count + 1);
      f[k - 1] = density.pdf(density.quantile(tau[static_cast<std::size_t>(k - 1)]));
    }
    const Eigen::MatrixXd h = h_hat(tau, f);
    const Eigen::MatrixXd inverse = analytic_h_inverse(tau, f);
    const double dev = (h * inverse - Eigen::MatrixXd::Identity(k_count, k_count))
                           .cwiseAbs()
                           .maxCoeff();
    max_dev = std::max(max_dev, dev);
  }

  std::ostringstream out;
  char line[128];
  out << "density: " << density.describe() << "\n";
  std::snprintf(line, sizeof(line), "%6s %16s\n", "K", "r'H^-1r");
  out << line;
  for (const auto& [k_count, value] : table) {
    std::snprintf(line, sizeof(line), "%6d %16.8f\n", k_count, value);
    out << line;
  }
  std::snprintf(line, sizeof(line), "max |H*Hinv - I| = %.3e\n", max_dev);
  out << line;

  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);
  write_text_file(dir / "report.txt", out.str());
  std::cout << out.str();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig config;
  CLI::App app{"Sparse regression with multiple penalized losses and selection by vote"};
  app.require_subcommand(1);
  app.fallthrough();

  app.add_option("--config", config.config_path, "JSON config file (flags take precedence)");
  app.add_option("--data", config.data_path, "input CSV");
  app.add_option("--validation", config.validation_path, "held-out validation CSV");
  app.add_option("--response", config.response, "response column name or 1-based number");
  app.add_flag("--no-header", config.no_header, "data file has no header row");
  app.add_option("--out", config.out_dir, "output directory");
  app.add_option("--losses", config.losses, "loss spec '<selection>;<estimation>'");
  app.add_option("--seed", config.seed, "random seed");
  app.add_option("--workers", config.workers, "worker threads or 'auto'");
  app.add_option("--folds", config.folds, "cross-validation folds");
  app.add_option("--grid", config.grid, "lambda grid size");
  app.add_option("--alpha", config.alpha_candidates, "explicit alpha candidates");

  CLI::App* fit = app.add_subcommand("fit", "two-step fit on a dataset");
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo benchmark");
  simulate->add_option("--n", config.n, "sample size");
  simulate->add_option("--p", config.p, "predictor count");
  simulate->add_option("--rho", config.rho, "AR(1) correlation");
  simulate->add_option("--replicates", config.replicates, "replicates per distribution");
  simulate->add_option("--validation-n", config.validation_n, "validation sample size");
  simulate->add_option("--distributions", config.distributions,
                       "comma list (t2,n03,smn,lmn,gamma,de,beta,unif) or 'all'");
  simulate->add_option("--methods", config.methods, "comma list of methods");
  simulate->add_flag("--timing", config.timing, "write measured wall times (non-deterministic)");
  CLI::App* screen = app.add_subcommand("screen", "expression probe screening");
  screen->add_option("--response-probe", config.response_probe, "response probe id");
  screen->add_option("--top", config.top, "predictors to keep");
  screen->add_option("--max-quantile", config.max_quantile, "percentile for the max filter");
  screen->add_option("--min-range", config.min_range, "minimum per-probe range");
  screen->add_flag("--probes-in-columns", config.probes_in_columns,
                   "probes are columns, samples are rows");
  CLI::App* diagnose = app.add_subcommand("diagnose", "efficiency limit diagnostics");
  diagnose->add_option("--density", config.density, "normal(var) or uniform(a,b)");
  diagnose->add_option("--k", config.k_values, "comma list of K values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfigError;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    apply_config_file(config, app, sub);
    if (sub == fit) return cmd_fit(config);
    if (sub == simulate) return cmd_simulate(config);
    if (sub == screen) return cmd_screen(config);
    if (sub == diagnose) return cmd_diagnose(config);
    throw ConfigError("unknown command");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunFailure;
  }
}
