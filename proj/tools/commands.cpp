#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>
#include <unordered_set>

#include "crossed/oracle.hpp"
#include "crossed/report.hpp"
#include "crossed/simulator.hpp"

namespace crossed::cli {

std::size_t default_shards() {
  if (const char* env = std::getenv("CROSSED_LMM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

struct InputArgs {
  std::string path;
  bool no_header = false;
  char delimiter = ',';
  std::string dedup = "assume-unique";
};

void add_input_options(CLI::App* cmd, InputArgs& in) {
  cmd->add_option("--input", in.path, "Observation CSV (row_id,col_id,y,x1..xp)")->required();
  cmd->add_flag("--no-header", in.no_header, "The file has no header line");
  cmd->add_option("--delimiter", in.delimiter, "Field delimiter");
  cmd->add_option("--dedup", in.dedup, "keep-last|keep-first|error|assume-unique")
      ->check(CLI::IsMember({"keep-last", "keep-first", "error", "assume-unique"}));
}

IndexedDataset load(const InputArgs& in) {
  CsvSchema schema;
  schema.has_header = !in.no_header;
  schema.delimiter = in.delimiter;
  return index_dataset(open_source(in.path, schema), parse_dedup_policy(in.dedup));
}

template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      if constexpr (std::is_floating_point_v<T>) {
        out.push_back(static_cast<T>(std::stod(item)));
      } else {
        out.push_back(static_cast<T>(std::stoll(item)));
      }
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "cannot parse list item '" + item + "'");
    }
  }
  return out;
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path);
  f << text;
}

std::array<EffectDist, 3> parse_dists(const std::string& text) {
  std::vector<std::string> names;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) names.push_back(item);
  if (names.size() == 1) names.assign(3, names[0]);
  if (names.size() != 3) throw Error(ErrorCode::InvalidArgument, "--dist takes one or three names");
  return {parse_effect_dist(names[0]), parse_effect_dist(names[1]), parse_effect_dist(names[2])};
}

std::array<double, 3> parse_vc(const std::string& text) {
  const auto v = parse_list<double>(text);
  if (v.size() != 3) throw Error(ErrorCode::InvalidArgument, "--vc takes a,b,e");
  return {v[0], v[1], v[2]};
}

double max_rel(const Eigen::MatrixXd& got, const Eigen::MatrixXd& ref) {
  const double scale = std::max(ref.cwiseAbs().maxCoeff(), 1e-300);
  return (got - ref).cwiseAbs().maxCoeff() / scale;
}

// Keeps rows and columns by a seeded coin until N fits the dense guard.
IndexedDataset subsample(const IndexedDataset& data, Count max_n, std::uint64_t seed, std::ostream& err) {
  if (data.profile().n <= max_n) return data;
  double keep = std::sqrt(0.9 * static_cast<double>(max_n) / static_cast<double>(data.profile().n));
  for (int attempt = 0; attempt < 20; ++attempt, keep *= 0.9) {
    SplitMix64 rng(seed, static_cast<std::uint64_t>(attempt));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<char> row_in(static_cast<std::size_t>(data.profile().r));
    std::vector<char> col_in(static_cast<std::size_t>(data.profile().c));
    for (auto& v : row_in) v = u(rng) < keep;
    for (auto& v : col_in) v = u(rng) < keep;
    std::vector<Observation> kept;
    data.scan([&](const RecordBatch& b) {
      for (std::size_t k = 0; k < b.size(); ++k) {
        if (!row_in[b.rows[k]] || !col_in[b.cols[k]]) continue;
        const auto col = b.x.col(static_cast<Eigen::Index>(k));
        kept.push_back({data.row_keys()[b.rows[k]], data.col_keys()[b.cols[k]],
                        std::vector<double>(col.data(), col.data() + col.size()), b.y[k]});
      }
    });
    if (!kept.empty() && static_cast<Count>(kept.size()) <= max_n) {
      err << "verify: down-sampled from N=" << data.profile().n << " to N=" << kept.size()
          << " to fit the dense guard\n";
      return dataset_from_observations(kept, DedupPolicy::AssumeUnique);
    }
  }
  throw Error(ErrorCode::TooLarge, "could not down-sample to the dense guard");
}

int cmd_fit(const InputArgs& in, const FitOptions& opts, const std::string& output, std::ostream& out,
            std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  const IndexedDataset data = load(in);
  const double parse_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  FitResult<double> res = fit<double>(data, opts);
  res.timings["index"] = parse_secs;
  for (const auto& w : res.warnings) err << "warning: " << w << '\n';
  write_text(output, to_json(res).dump(2) + "\n", out);
  return (res.flags.any() || res.degraded) ? 2 : 0;
}

int cmd_simulate(const SimConfig& cfg, std::uint64_t replicate, const std::string& output, std::ostream& out) {
  const Simulated sim = simulate_crossed(cfg, replicate);
  std::ostringstream text;
  write_csv(text, sim.data);
  write_text(output, text.str(), out);
  return 0;
}

int cmd_study(const std::vector<Count>& grid, const StudyOptions& opts, std::size_t covariates,
              const std::array<double, 3>& vc, const std::array<EffectDist, 3>& dist, std::uint64_t seed,
              const std::string& output, bool print_slopes, std::ostream& out) {
  std::vector<SimConfig> cells;
  for (Count n : grid) {
    SimConfig cfg = SimConfig::square_design(n, covariates, seed);
    cfg.vc_truth = vc;
    cfg.dist = dist;
    cells.push_back(cfg);
  }
  const StudyResult res = mc_study(cells, opts);
  std::ostringstream text;
  write_study_csv(text, res);
  write_text(output, text.str(), out);
  if (print_slopes && grid.size() >= 2) {
    for (const auto& [param, slope] : study_slopes(res)) {
      out << "slope " << param << ' ' << slope << '\n';
    }
  }
  return res.failures == 0 ? 0 : 2;
}

int cmd_bench(const std::vector<Count>& sizes, std::size_t covariates, std::uint64_t seed, std::size_t repeats,
              const FitOptions& opts, const std::string& output, std::ostream& out) {
  const auto rows = bench_fit(sizes, covariates, seed, repeats, opts);
  std::ostringstream text;
  text.precision(10);
  text << "N,secs\n";
  std::vector<double> n, secs;
  for (const auto& r : rows) {
    text << r.n << ',' << r.secs << '\n';
    n.push_back(static_cast<double>(r.n));
    secs.push_back(r.secs);
  }
  write_text(output, text.str(), out);
  if (rows.size() >= 2) out << "slope " << loglog_slope(n, secs) << '\n';
  return 0;
}

int cmd_verify(const InputArgs& in, Count max_n, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  const IndexedDataset full = load(in);
  const IndexedDataset data = subsample(full, std::min<Count>(max_n, 2000), seed, err);
  const oracle::DenseDesign d = oracle::materialize(data);

  const OlsFit<double> ols = ols_fit<double>(data);
  VarianceComponents<double> vc = VarianceComponents<double>::fixed(1.0, 0.5, 1.0);
  try {
    const auto est = estimate_variance_components<double>(data, ols.beta);
    const double e = est.sigma2_e;
    vc = VarianceComponents<double>::fixed(std::max(est.sigma2_a, 0.25 * e), std::max(est.sigma2_b, 0.25 * e), e);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingularMomentSystem) throw;
  }
  out << "verify: N=" << data.profile().n << " R=" << data.profile().r << " C=" << data.profile().c
      << " components used a=" << vc.sigma2_a << " b=" << vc.sigma2_b << " e=" << vc.sigma2_e << '\n';

  const auto n = static_cast<Eigen::Index>(d.n());
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd v_r = oracle::dense_covariance(d, vc);
  const Eigen::MatrixXd v_a = vc.sigma2_e * id + vc.sigma2_a * d.a_r();
  const Eigen::MatrixXd v_b = vc.sigma2_e * id + vc.sigma2_b * d.b_r();

  std::vector<std::pair<std::string, double>> checks;
  const auto u = compute_u_statistics<double>(data, ols.beta);
  const auto un = oracle::naive_u_statistics(d, ols.beta);
  checks.emplace_back("u_statistics", max_rel(Eigen::Vector3d(u.u_a, u.u_b, u.u_e),
                                              Eigen::Vector3d(un.u_a, un.u_b, un.u_e)));
  checks.emplace_back("ols_beta", max_rel(ols.beta, oracle::dense_gls(d.x, d.y, id).beta));
  const auto rls = rls_fit<double>(data, vc);
  const auto cls = cls_fit<double>(data, vc);
  checks.emplace_back("rls_beta", max_rel(rls.beta, oracle::dense_gls(d.x, d.y, v_a).beta));
  checks.emplace_back("cls_beta", max_rel(cls.beta, oracle::dense_gls(d.x, d.y, v_b).beta));
  checks.emplace_back("rls_cov", max_rel(var_beta_rls<double>(data, vc, rls.neq), oracle::dense_sandwich(d.x, v_a, v_r)));
  checks.emplace_back("cls_cov", max_rel(var_beta_cls<double>(data, vc, cls.neq), oracle::dense_sandwich(d.x, v_b, v_r)));
  checks.emplace_back("ols_sandwich",
                      max_rel(var_beta_ols_sandwich<double>(data, vc, ols.xtx), oracle::dense_sandwich(d.x, id, v_r)));

  bool ok = true;
  for (const auto& [name, disc] : checks) {
    const bool pass = disc <= 1e-8;
    ok = ok && pass;
    out << (pass ? "PASS " : "FAIL ") << name << " max_rel_discrepancy=" << disc << '\n';
  }
  return ok ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Crossed random-effects regression by moments and single-factor GLS", "crossed_lmm"};
  app.require_subcommand(1);

  // fit
  InputArgs fit_in;
  std::string fit_mode = "auto";
  std::string fit_output;
  std::size_t shards = default_shards();
  bool deterministic = false;
  bool diagnostics = false;
  std::optional<std::size_t> compare_coef;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a data file and write the result as JSON");
  add_input_options(fit_cmd, fit_in);
  fit_cmd->add_option("--mode", fit_mode, "auto|row|col|both-compare")
      ->check(CLI::IsMember({"auto", "row", "col", "both-compare"}));
  fit_cmd->add_option("--shards", shards, "Parallel scan shards")->check(CLI::PositiveNumber);
  fit_cmd->add_flag("--deterministic", deterministic, "Bit-identical results for any shard count");
  fit_cmd->add_flag("--diagnostics", diagnostics, "Compute the CLT condition diagnostics (two extra passes)");
  fit_cmd->add_option("--compare-coef", compare_coef, "Coefficient index used by both-compare");
  fit_cmd->add_option("--output", fit_output, "Output JSON path ('-' for stdout)");

  // simulate
  SimConfig sim;
  std::optional<Count> fill_count;
  std::optional<double> fill_prob;
  std::string beta_text;
  std::string vc_text = "2,0.5,1";
  std::string dist_text = "gaussian";
  std::string sim_output;
  std::uint64_t replicate = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "Write a synthetic crossed dataset as CSV");
  sim_cmd->add_option("--rows", sim.rows, "Configured rows")->required();
  sim_cmd->add_option("--cols", sim.cols, "Configured columns")->required();
  auto* fc_opt = sim_cmd->add_option("--fill-count", fill_count, "Exact number of observed cells");
  auto* fp_opt = sim_cmd->add_option("--fill-prob", fill_prob, "Independent observation probability");
  fc_opt->excludes(fp_opt);
  sim_cmd->add_option("--p", sim.covariates, "Covariates besides the intercept");
  sim_cmd->add_option("--beta", beta_text, "Coefficients, intercept first (default all 1)");
  sim_cmd->add_option("--vc", vc_text, "sigma2_A,sigma2_B,sigma2_E");
  sim_cmd->add_option("--dist", dist_text, "gaussian|uniform|laplace|t5, one or three");
  sim_cmd->add_option("--seed", sim.seed, "Seed");
  sim_cmd->add_option("--replicate", replicate, "Replicate stream");
  sim_cmd->add_option("--output", sim_output, "Output CSV path ('-' for stdout)");

  // study
  std::string grid_text;
  StudyOptions study_opts;
  std::size_t study_p = 5;
  std::string study_vc = "2,0.5,1";
  std::string study_dist = "gaussian";
  std::uint64_t study_seed = 1;
  std::string study_output;
  std::string study_mode = "auto";
  bool no_slopes = false;
  auto* study_cmd = app.add_subcommand("study", "Monte Carlo study on the square design R = C = 2 sqrt(N)");
  study_cmd->add_option("--grid", grid_text, "Sample sizes N1,N2,...")->required();
  study_cmd->add_option("--reps", study_opts.replicates, "Replicates per size")->required();
  study_cmd->add_option("--p", study_p, "Covariates besides the intercept");
  study_cmd->add_option("--vc", study_vc, "sigma2_A,sigma2_B,sigma2_E");
  study_cmd->add_option("--dist", study_dist, "Effect distributions");
  study_cmd->add_option("--seed", study_seed, "Seed");
  study_cmd->add_option("--mode", study_mode, "auto|row|col|both-compare")
      ->check(CLI::IsMember({"auto", "row", "col", "both-compare"}));
  study_cmd->add_flag("--fix-pattern", study_opts.fix_pattern, "Reuse one observation pattern for all replicates");
  study_cmd->add_flag("--no-slopes", no_slopes, "Do not print log-log MSE slopes");
  study_cmd->add_option("--output", study_output, "Output CSV path ('-' for stdout)");

  // bench
  std::string sizes_text;
  std::size_t bench_p = 5;
  std::uint64_t bench_seed = 1;
  std::size_t repeats = 3;
  std::string bench_output;
  auto* bench_cmd = app.add_subcommand("bench", "Time the fit on the square design");
  bench_cmd->add_option("--sizes", sizes_text, "Sample sizes N1,N2,...")->required();
  bench_cmd->add_option("--p", bench_p, "Covariates besides the intercept");
  bench_cmd->add_option("--seed", bench_seed, "Seed");
  bench_cmd->add_option("--repeats", repeats, "Timed repeats per size (best is kept)");
  bench_cmd->add_option("--output", bench_output, "Output CSV path ('-' for stdout)");

  // verify
  InputArgs verify_in;
  Count max_n = 2000;
  std::uint64_t verify_seed = 1;
  auto* verify_cmd = app.add_subcommand("verify", "Compare streaming results with dense computations on a subsample");
  add_input_options(verify_cmd, verify_in);
  verify_cmd->add_option("--max-n", max_n, "Largest subsample (at most 2000)");
  verify_cmd->add_option("--seed", verify_seed, "Subsampling seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (*fit_cmd) {
      FitOptions opts;
      opts.mode = parse_fit_mode(fit_mode);
      opts.dedup_policy = parse_dedup_policy(fit_in.dedup);
      opts.shards = shards;
      opts.deterministic_reduction = deterministic;
      opts.emit_diagnostics = diagnostics;
      opts.compare_coefficient = compare_coef;
      return cmd_fit(fit_in, opts, fit_output, out, err);
    }
    if (*sim_cmd) {
      if (fill_count) sim.fill = FillCount{*fill_count};
      else if (fill_prob) sim.fill = FillProb{*fill_prob};
      else sim.fill = FillCount{sim.rows * sim.cols / 4};
      sim.beta = beta_text.empty() ? std::vector<double>(sim.covariates + 1, 1.0) : parse_list<double>(beta_text);
      sim.vc_truth = parse_vc(vc_text);
      sim.dist = parse_dists(dist_text);
      return cmd_simulate(sim, replicate, sim_output, out);
    }
    if (*study_cmd) {
      study_opts.fit.mode = parse_fit_mode(study_mode);
      return cmd_study(parse_list<Count>(grid_text), study_opts, study_p, parse_vc(study_vc),
                       parse_dists(study_dist), study_seed, study_output, !no_slopes, out);
    }
    if (*bench_cmd) {
      FitOptions opts;
      opts.shards = default_shards();
      return cmd_bench(parse_list<Count>(sizes_text), bench_p, bench_seed, repeats, opts, bench_output, out);
    }
    if (*verify_cmd) return cmd_verify(verify_in, max_n, verify_seed, out, err);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace crossed::cli
