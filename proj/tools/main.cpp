// sigmafit CLI: self-tuning RANSAC thresholds for two-view relative pose.
//
// Subcommands:
//   estimate   per-pair threshold estimation on a match file
//   multi      multi-pair (geometric-mean filtered) estimation, file order
//   sweep      method x tau0 grid over a match file
//   synthbench method x tau0 grid over generated synthetic scenes
//   histfit    squared-residual histogram with the chi-square(1) fit
//
// Every command writes a run manifest (<out>.manifest) with all resolved
// parameters; outputs are byte-identical for a fixed seed and thread count
// independent (exit codes: 0 ok, 1 usage, 2 data, 3 estimation failed).

#include <CLI11.hpp>

#include <sigmafit/distributions.hpp>
#include <sigmafit/io.hpp>
#include <sigmafit/parallel.hpp>
#include <sigmafit/scale.hpp>
#include <sigmafit/synthetic.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace sigmafit;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitEstimation = 3;

struct CommonOptions {
    ScaleConfig scale;
    std::string model = "F";
    std::string method = "simfitpp";
    int threads = 1;
    bool timings = false;
    bool lenient = false;
    std::string input;
    std::string out;
};

void add_scale_flags(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--alpha", opt.scale.alpha, "Inlier confidence level")
        ->capture_default_str();
    cmd->add_option("--tau0", opt.scale.tau0, "Initial threshold guess (pixels)")
        ->capture_default_str();
    cmd->add_option("--tau-min", opt.scale.tau_min, "Lowest allowed threshold (pixels)")
        ->capture_default_str();
    cmd->add_option("--tau-max", opt.scale.tau_max, "Highest allowed threshold (pixels)")
        ->capture_default_str();
    cmd->add_option("--p-train", opt.scale.p_train, "Train split proportion")
        ->capture_default_str();
    cmd->add_option("--ftol", opt.scale.ftol, "Relative convergence tolerance")
        ->capture_default_str();
    cmd->add_option("--max-iters", opt.scale.max_outer_iters, "Outer estimation iterations")
        ->capture_default_str();
    cmd->add_option("--fixedpoint-iters", opt.scale.fixedpoint_iters,
                    "Percentile fixed-point iteration cap")
        ->capture_default_str();
    cmd->add_option("--ransac-iters", opt.scale.ransac_iters, "RANSAC iterations")
        ->capture_default_str();
    cmd->add_option("--seed", opt.scale.seed, "Master seed")->capture_default_str();
    cmd->add_flag("--early-stop", opt.scale.early_stop,
                  "Enable RANSAC inlier-ratio early termination");
    cmd->add_option("--model", opt.model, "Model kind: F or E")->capture_default_str();
    cmd->add_option("--threads", opt.threads, "Worker threads for per-pair work")
        ->capture_default_str();
    cmd->add_flag("--timings", opt.timings,
                  "Record wall-clock runtimes (makes outputs non-reproducible)");
}

ModelKind parse_model(const std::string& name) {
    if (name == "F" || name == "f")
        return ModelKind::Fundamental;
    if (name == "E" || name == "e")
        return ModelKind::Essential;
    throw CLI::ValidationError("--model", "expected F or E");
}

// Data-stage guard: pairs below the minimal solver size are invalid input.
// Strict mode aborts (exit 2); lenient mode drops them with a warning.
bool screen_pairs(io::MatchFile& file, ModelKind kind, bool lenient, const char* command) {
    const std::size_t minimal = minimal_sample_size(kind);
    std::vector<io::MatchPair> kept;
    for (auto& pair : file.pairs) {
        if (pair.matches.size() < minimal) {
            std::ostringstream msg;
            msg << command << ": pair '" << pair.id << "' has " << pair.matches.size()
                << " matches, below the minimal sample size " << minimal;
            if (!lenient) {
                std::cerr << msg.str() << "\n";
                return false;
            }
            std::cerr << msg.str() << " (skipped)\n";
            continue;
        }
        kept.push_back(std::move(pair));
    }
    file.pairs = std::move(kept);
    return true;
}

io::Manifest base_manifest(const std::string& command, const CommonOptions& opt) {
    io::Manifest m;
    m["command"] = command;
    m["alpha"] = io::format_double(opt.scale.alpha);
    m["tau0"] = io::format_double(opt.scale.tau0);
    m["tau_min"] = io::format_double(opt.scale.tau_min);
    m["tau_max"] = io::format_double(opt.scale.tau_max);
    m["p_train"] = io::format_double(opt.scale.p_train);
    m["ftol"] = io::format_double(opt.scale.ftol);
    m["max_outer_iters"] = std::to_string(opt.scale.max_outer_iters);
    m["fixedpoint_iters"] = std::to_string(opt.scale.fixedpoint_iters);
    m["ransac_iters"] = std::to_string(opt.scale.ransac_iters);
    m["seed"] = std::to_string(opt.scale.seed);
    m["early_stop"] = opt.scale.early_stop ? "true" : "false";
    m["model"] = opt.model;
    m["threads"] = std::to_string(opt.threads);
    m["timings"] = opt.timings ? "true" : "false";
    return m;
}

void write_output(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write output file: " + path);
    out << contents;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
}

std::string grid_to_string(const std::vector<double>& grid) {
    std::string s;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (i)
            s += ',';
        s += io::format_double(grid[i]);
    }
    return s;
}

// Threshold estimation + final MSAC for one pair; shared by estimate/sweep.
io::ResultRow run_pair(const io::MatchPair& pair, Method method, const ScaleConfig& scale,
                       std::optional<double> preset_tau, std::uint64_t estimator_seed,
                       std::uint64_t eval_seed, bool timings) {
    io::ResultRow row;
    row.pair_id = pair.id;
    row.method = to_string(method);
    row.tau0 = scale.tau0;
    const auto start = std::chrono::steady_clock::now();
    try {
        double tau = scale.tau0;
        switch (method) {
        case Method::Fixed:
            row.tau_star = tau;
            row.converged = true;
            break;
        case Method::Simfit: {
            ScaleConfig cfg = scale;
            cfg.seed = estimator_seed;
            const auto est = simfit(pair.matches, cfg);
            if (!(est.tau_star > 0.0) || !std::isfinite(est.tau_star))
                throw EstimationFailureError("simfit estimate collapsed to zero");
            tau = est.tau_star;
            row.tau_star = est.tau_star;
            row.sigma_hat = est.sigma_hat;
            row.converged = est.converged;
            break;
        }
        case Method::Simfitpp: {
            ScaleConfig cfg = scale;
            cfg.seed = estimator_seed;
            const auto est = simfitpp(pair.matches, cfg);
            tau = est.tau_star;
            row.tau_star = est.tau_star;
            row.sigma_hat = est.sigma_hat;
            row.converged = est.converged;
            break;
        }
        case Method::SimfitppMulti: {
            if (!preset_tau)
                throw std::invalid_argument("multi method needs a dataset-level estimate");
            tau = *preset_tau;
            row.tau_star = tau;
            row.sigma_hat = tau / chi_quantile(scale.alpha);
            row.converged = true;
            break;
        }
        }
        const auto rr = msac(pair.matches, scale.ransac(tau, eval_seed));
        row.n_inliers = static_cast<std::int64_t>(rr.num_inliers());
        if (timings)
            row.runtime_ms = elapsed_ms(start);
    } catch (const std::exception& e) {
        row.error = e.what();
        if (timings)
            row.runtime_ms = elapsed_ms(start);
    }
    return row;
}

int cmd_estimate(const CommonOptions& opt) {
    opt.scale.validate();
    ScaleConfig scale = opt.scale;
    scale.model_kind = parse_model(opt.model);
    const Method method = parse_method(opt.method);
    if (method == Method::SimfitppMulti) {
        std::cerr << "estimate: use the 'multi' subcommand for simfitpp-multi\n";
        return kExitUsage;
    }

    io::MatchFile file;
    std::vector<std::string> rejected;
    try {
        file = io::load_matches(opt.input, !opt.lenient, &rejected);
    } catch (const std::exception& e) {
        std::cerr << "estimate: " << e.what() << "\n";
        return kExitData;
    }
    for (const auto& r : rejected)
        std::cerr << "estimate: skipped " << r << "\n";
    if (!screen_pairs(file, scale.model_kind, opt.lenient, "estimate"))
        return kExitData;
    if (file.pairs.empty()) {
        std::cerr << "estimate: no usable pairs in " << opt.input << "\n";
        return kExitData;
    }

    std::vector<io::ResultRow> rows(file.pairs.size());
    parallel_for(file.pairs.size(), opt.threads, [&](std::size_t i) {
        rows[i] = run_pair(file.pairs[i], method, scale, std::nullopt,
                           derive_seed(scale.seed, SeedStream::Estimator, i),
                           derive_seed(scale.seed, SeedStream::Evaluation, i), opt.timings);
    });

    std::ostringstream csv;
    io::write_results_csv(csv, rows);
    write_output(opt.out, csv.str());

    io::Manifest manifest = base_manifest("estimate", opt);
    manifest["method"] = opt.method;
    manifest["input"] = opt.input;
    manifest["output"] = opt.out;
    manifest["schema"] = io::kResultsSchema;
    manifest["lenient"] = opt.lenient ? "true" : "false";
    io::write_manifest(opt.out + ".manifest", manifest);

    std::size_t failed = 0;
    for (const auto& r : rows)
        failed += !r.error.empty();
    std::cout << "estimate: " << rows.size() - failed << "/" << rows.size() << " pairs ok -> "
              << opt.out << "\n";
    return failed == rows.size() ? kExitEstimation : kExitOk;
}

int cmd_multi(const CommonOptions& opt) {
    opt.scale.validate();
    ScaleConfig scale = opt.scale;
    scale.model_kind = parse_model(opt.model);

    io::MatchFile file;
    std::vector<std::string> rejected;
    try {
        file = io::load_matches(opt.input, !opt.lenient, &rejected);
    } catch (const std::exception& e) {
        std::cerr << "multi: " << e.what() << "\n";
        return kExitData;
    }
    for (const auto& r : rejected)
        std::cerr << "multi: skipped " << r << "\n";
    if (!screen_pairs(file, scale.model_kind, opt.lenient, "multi"))
        return kExitData;
    if (file.pairs.empty()) {
        std::cerr << "multi: no usable pairs in " << opt.input << "\n";
        return kExitData;
    }

    std::vector<MatchSet> dataset;
    dataset.reserve(file.pairs.size());
    for (const auto& pair : file.pairs)
        dataset.push_back(pair.matches);
    const auto est = simfitpp_multi(dataset, scale);

    // per-pair rows at the aggregated threshold, then the aggregate row
    std::vector<io::ResultRow> rows(file.pairs.size());
    parallel_for(file.pairs.size(), opt.threads, [&](std::size_t i) {
        rows[i] = run_pair(file.pairs[i], Method::SimfitppMulti, scale, est.tau_star, 0,
                           derive_seed(scale.seed, SeedStream::Evaluation, i), opt.timings);
    });
    io::ResultRow aggregate;
    aggregate.pair_id = "(multi)";
    aggregate.method = to_string(Method::SimfitppMulti);
    aggregate.tau0 = scale.tau0;
    aggregate.tau_star = est.tau_star;
    aggregate.sigma_hat = est.sigma_hat;
    aggregate.converged = est.converged;
    rows.push_back(aggregate);

    std::ostringstream csv;
    io::write_results_csv(csv, rows);
    write_output(opt.out, csv.str());

    io::Manifest manifest = base_manifest("multi", opt);
    manifest["input"] = opt.input;
    manifest["output"] = opt.out;
    manifest["schema"] = io::kResultsSchema;
    manifest["lenient"] = opt.lenient ? "true" : "false";
    manifest["pairs"] = std::to_string(file.pairs.size());
    io::write_manifest(opt.out + ".manifest", manifest);

    std::cout << "multi: tau* = " << io::format_double(est.tau_star)
              << " (sigma = " << io::format_double(est.sigma_hat) << ", "
              << est.accepted_estimates.size() << "/" << file.pairs.size()
              << " pairs accepted) -> " << opt.out << "\n";
    return est.converged ? kExitOk : kExitEstimation;
}

int cmd_sweep(const CommonOptions& opt, std::vector<double> grid, std::string methods_arg) {
    opt.scale.validate();
    ScaleConfig scale = opt.scale;
    scale.model_kind = parse_model(opt.model);

    std::vector<Method> methods;
    {
        std::stringstream ss(methods_arg);
        std::string name;
        while (std::getline(ss, name, ','))
            methods.push_back(parse_method(name));
    }
    if (methods.empty() || grid.empty()) {
        std::cerr << "sweep: empty method list or tau0 grid\n";
        return kExitUsage;
    }

    io::MatchFile file;
    std::vector<std::string> rejected;
    try {
        file = io::load_matches(opt.input, !opt.lenient, &rejected);
    } catch (const std::exception& e) {
        std::cerr << "sweep: " << e.what() << "\n";
        return kExitData;
    }
    if (!screen_pairs(file, scale.model_kind, opt.lenient, "sweep"))
        return kExitData;
    if (file.pairs.empty()) {
        std::cerr << "sweep: no usable pairs in " << opt.input << "\n";
        return kExitData;
    }

    const std::size_t n = file.pairs.size();
    std::vector<io::ResultRow> rows(methods.size() * grid.size() * n);
    std::size_t cell = 0;
    std::size_t failed = 0;
    for (const Method method : methods) {
        for (const double tau0 : grid) {
            ScaleConfig cell_scale = scale;
            cell_scale.tau0 = std::clamp(tau0, scale.tau_min, scale.tau_max);

            std::optional<double> preset;
            if (method == Method::SimfitppMulti) {
                std::vector<MatchSet> dataset;
                for (const auto& pair : file.pairs)
                    dataset.push_back(pair.matches);
                ScaleConfig multi_scale = cell_scale;
                multi_scale.seed = derive_seed(scale.seed, SeedStream::MultiPair, cell);
                preset = simfitpp_multi(dataset, multi_scale).tau_star;
            }

            io::ResultRow* out_rows = rows.data() + cell * n;
            parallel_for(n, opt.threads, [&, out_rows](std::size_t i) {
                const std::uint64_t task = cell * n + i;
                out_rows[i] = run_pair(file.pairs[i], method, cell_scale, preset,
                                       derive_seed(scale.seed, SeedStream::Estimator, task),
                                       derive_seed(scale.seed, SeedStream::Evaluation, task),
                                       opt.timings);
            });
            ++cell;
        }
    }
    for (const auto& r : rows)
        failed += !r.error.empty();

    std::ostringstream csv;
    io::write_results_csv(csv, rows);
    write_output(opt.out, csv.str());

    io::Manifest manifest = base_manifest("sweep", opt);
    manifest["input"] = opt.input;
    manifest["output"] = opt.out;
    manifest["schema"] = io::kResultsSchema;
    manifest["methods"] = methods_arg;
    manifest["tau0_grid"] = grid_to_string(grid);
    manifest["lenient"] = opt.lenient ? "true" : "false";
    io::write_manifest(opt.out + ".manifest", manifest);

    std::cout << "sweep: " << rows.size() - failed << "/" << rows.size() << " rows ok -> "
              << opt.out << "\n";
    return failed == rows.size() ? kExitEstimation : kExitOk;
}

struct SynthbenchOptions {
    std::size_t scenes = 200;
    std::size_t n_points = 500;
    double sigma = 1.0;
    double outlier_frac = 0.3;
    std::string rows_out;
    std::string export_matches;
};

int cmd_synthbench(const CommonOptions& opt, const SynthbenchOptions& synth,
                   std::vector<double> grid, std::string methods_arg) {
    opt.scale.validate();
    SweepOptions options;
    options.scale = opt.scale;
    options.scale.model_kind = parse_model(opt.model);
    options.threads = opt.threads;

    std::vector<Method> methods;
    {
        std::stringstream ss(methods_arg);
        std::string name;
        while (std::getline(ss, name, ','))
            methods.push_back(parse_method(name));
    }
    if (methods.empty() || grid.empty() || synth.scenes == 0) {
        std::cerr << "synthbench: empty methods, grid or scene count\n";
        return kExitUsage;
    }

    std::vector<SceneSpec> specs(synth.scenes);
    for (std::size_t i = 0; i < synth.scenes; ++i) {
        SceneSpec spec;
        spec.n_points = synth.n_points;
        spec.sigma = synth.sigma;
        spec.outlier_fraction = synth.outlier_frac;
        spec.seed = derive_seed(opt.scale.seed, SeedStream::Scene, i);
        Rng pose_rng(spec.seed);
        spec.pose = random_pose(pose_rng);
        specs[i] = spec;
    }

    if (!synth.export_matches.empty()) {
        io::MatchFile file;
        for (std::size_t i = 0; i < specs.size(); ++i) {
            io::MatchPair pair;
            std::ostringstream id;
            id << "scene" << i;
            pair.id = id.str();
            pair.matches = generate_scene(specs[i]).matches;
            file.pairs.push_back(std::move(pair));
        }
        io::save_matches(synth.export_matches, file);
    }

    BenchmarkTable table;
    try {
        table = sweep_benchmark(specs, grid, methods, options);
    } catch (const std::exception& e) {
        std::cerr << "synthbench: " << e.what() << "\n";
        return kExitEstimation;
    }

    std::vector<io::CellRow> cells;
    for (const auto& c : table.cells) {
        io::CellRow row;
        row.method = to_string(c.method);
        row.tau0 = c.tau0;
        row.n_scenes = c.n_scenes;
        row.n_failed = c.n_failed;
        row.auc5 = c.auc5;
        row.auc10 = c.auc10;
        row.auc20 = c.auc20;
        row.rot_err_median = c.rot_err_median;
        row.trans_err_median = c.trans_err_median;
        row.sigma_hat_mean = c.sigma_hat_mean;
        row.sigma_hat_median = c.sigma_hat_median;
        row.tau_star_median = c.tau_star_median;
        cells.push_back(row);
    }
    std::ostringstream csv;
    io::write_cells_csv(csv, cells);
    write_output(opt.out, csv.str());

    if (!synth.rows_out.empty()) {
        std::vector<io::ResultRow> rows;
        rows.reserve(table.rows.size());
        for (const auto& r : table.rows) {
            io::ResultRow row;
            std::ostringstream id;
            id << "scene" << r.scene_index;
            row.pair_id = id.str();
            row.method = to_string(r.method);
            row.tau0 = r.tau0;
            row.tau_star = r.tau_star;
            row.sigma_hat = r.sigma_hat;
            row.converged = r.converged;
            row.n_inliers = r.failed() ? -1 : static_cast<std::int64_t>(r.n_inliers);
            row.rot_err_deg = r.rot_err_deg;
            row.trans_err_deg = r.trans_err_deg;
            row.error = r.error;
            rows.push_back(row);
        }
        std::ostringstream rows_csv;
        io::write_results_csv(rows_csv, rows);
        write_output(synth.rows_out, rows_csv.str());
    }

    io::Manifest manifest = base_manifest("synthbench", opt);
    manifest["output"] = opt.out;
    manifest["rows_output"] = synth.rows_out.empty() ? "(none)" : synth.rows_out;
    manifest["schema"] = io::kCellsSchema;
    manifest["methods"] = methods_arg;
    manifest["tau0_grid"] = grid_to_string(grid);
    manifest["scenes"] = std::to_string(synth.scenes);
    manifest["n_points"] = std::to_string(synth.n_points);
    manifest["scene_sigma"] = io::format_double(synth.sigma);
    manifest["outlier_fraction"] = io::format_double(synth.outlier_frac);
    io::write_manifest(opt.out + ".manifest", manifest);

    std::cout << "synthbench: " << table.cells.size() << " cells over " << synth.scenes
              << " scenes -> " << opt.out << "\n";
    return kExitOk;
}

struct HistfitOptions {
    bool synthetic = false;
    double sigma = 1.0;
    std::size_t n_points = 10000;
    int bins = 40;
};

int cmd_histfit(const CommonOptions& opt, const HistfitOptions& hist) {
    opt.scale.validate();
    if (hist.bins < 4) {
        std::cerr << "histfit: need at least 4 bins\n";
        return kExitUsage;
    }
    ScaleConfig scale = opt.scale;
    scale.model_kind = parse_model(opt.model);

    struct Sample {
        std::string id;
        std::vector<double> normalized_r2;  // r^2 / sigma_hat^2
        double range = 0.0;                 // truncation end in normalized units
        double sigma_hat = 0.0;
        double ks_p = 0.0;
        bool truncated = false;
    };
    std::vector<Sample> samples;

    if (hist.synthetic) {
        SceneSpec spec;
        spec.n_points = std::max<std::size_t>(hist.n_points, 16);
        spec.sigma = hist.sigma;
        spec.outlier_fraction = 0.0;
        spec.seed = derive_seed(opt.scale.seed, SeedStream::Scene, 0);
        Rng pose_rng(spec.seed);
        spec.pose = random_pose(pose_rng);
        const auto scene = generate_scene(spec);

        const auto gt_f = essential_to_pixel_fundamental(essential_from_pose(scene.gt_pose),
                                                         spec.intrinsics, spec.intrinsics);
        const auto r2 = residuals_squared(gt_f, scene.matches);
        Sample s;
        s.id = "synthetic";
        s.sigma_hat = median_sigma(r2);
        s.ks_p = chi2_gof(r2, s.sigma_hat);
        s.range = chi2_quantile(0.999);
        for (double v : r2)
            s.normalized_r2.push_back(v / (s.sigma_hat * s.sigma_hat));
        samples.push_back(std::move(s));
    } else {
        io::MatchFile file;
        try {
            file = io::load_matches(opt.input, !opt.lenient, nullptr);
        } catch (const std::exception& e) {
            std::cerr << "histfit: " << e.what() << "\n";
            return kExitData;
        }
        if (!screen_pairs(file, scale.model_kind, opt.lenient, "histfit"))
            return kExitData;
        if (file.pairs.empty()) {
            std::cerr << "histfit: no usable pairs\n";
            return kExitData;
        }
        for (std::size_t i = 0; i < file.pairs.size(); ++i) {
            const auto& pair = file.pairs[i];
            try {
                ScaleConfig cfg = scale;
                cfg.seed = derive_seed(scale.seed, SeedStream::Estimator, i);
                const auto est = simfitpp(pair.matches, cfg);
                const auto rr = msac(pair.matches,
                                     scale.ransac(est.tau_star,
                                                  derive_seed(scale.seed, SeedStream::Evaluation,
                                                              i)));
                Sample s;
                s.id = pair.id;
                s.sigma_hat = est.sigma_hat;
                s.truncated = true;
                const double s2 = est.sigma_hat * est.sigma_hat;
                const double tau_sq = est.tau_star * est.tau_star;
                std::vector<double> u;
                for (double v : rr.residuals_sq) {
                    if (v <= tau_sq) {
                        s.normalized_r2.push_back(v / s2);
                        u.push_back(chi2_cdf(v / s2) / chi2_cdf(tau_sq / s2));
                    }
                }
                if (s.normalized_r2.size() < 20)
                    throw EstimationFailureError("too few inlier residuals for the fit");
                s.range = tau_sq / s2;
                s.ks_p = ks_uniform_pvalue(std::move(u));
                samples.push_back(std::move(s));
            } catch (const std::exception& e) {
                std::cerr << "histfit: pair '" << pair.id << "' failed: " << e.what() << "\n";
            }
        }
        if (samples.empty())
            return kExitEstimation;
    }

    std::vector<io::HistfitRow> rows;
    for (const auto& s : samples) {
        const double width = s.range / hist.bins;
        std::vector<std::size_t> counts(static_cast<std::size_t>(hist.bins), 0);
        for (double v : s.normalized_r2) {
            auto bin = static_cast<std::size_t>(v / width);
            if (bin >= counts.size())
                bin = counts.size() - 1;
            ++counts[bin];
        }
        const double total_mass = chi2_cdf(s.range);
        for (int b = 0; b < hist.bins; ++b) {
            io::HistfitRow row;
            row.pair_id = s.id;
            row.bin_lo = b * width;
            row.bin_hi = (b + 1) * width;
            row.observed = counts[static_cast<std::size_t>(b)];
            const double mass = chi2_cdf(row.bin_hi) - chi2_cdf(row.bin_lo);
            row.expected = static_cast<double>(s.normalized_r2.size()) *
                           (s.truncated ? mass / total_mass : mass);
            row.sigma_hat = s.sigma_hat;
            row.ks_p = s.ks_p;
            rows.push_back(row);
        }
    }

    std::ostringstream csv;
    io::write_histfit_csv(csv, rows);
    write_output(opt.out, csv.str());

    io::Manifest manifest = base_manifest("histfit", opt);
    manifest["output"] = opt.out;
    manifest["schema"] = io::kHistfitSchema;
    manifest["bins"] = std::to_string(hist.bins);
    manifest["synthetic"] = hist.synthetic ? "true" : "false";
    if (hist.synthetic) {
        manifest["scene_sigma"] = io::format_double(hist.sigma);
        manifest["n_points"] = std::to_string(hist.n_points);
    } else {
        manifest["input"] = opt.input;
    }
    io::write_manifest(opt.out + ".manifest", manifest);

    for (const auto& s : samples)
        std::cout << "histfit: " << s.id << " sigma = " << io::format_double(s.sigma_hat)
                  << " ks_p = " << io::format_double(s.ks_p) << "\n";
    std::cout << "histfit: " << samples.size() << " fits -> " << opt.out << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-tuning RANSAC inlier thresholds for two-view relative pose"};
    app.require_subcommand(1);

    const std::vector<double> default_grid = {0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0};

    CommonOptions est_opt;
    auto* est = app.add_subcommand("estimate", "Per-pair threshold estimation on a match file");
    add_scale_flags(est, est_opt);
    est->add_option("-i,--input", est_opt.input, "Match file")->required();
    est->add_option("--out", est_opt.out, "Results CSV path")->required();
    est->add_option("--method", est_opt.method, "fixed | simfit | simfitpp")
        ->capture_default_str();
    est->add_flag("--lenient", est_opt.lenient, "Skip invalid pairs instead of aborting");

    CommonOptions multi_opt;
    auto* multi = app.add_subcommand("multi", "Multi-pair estimation over the file, in order");
    add_scale_flags(multi, multi_opt);
    multi->add_option("-i,--input", multi_opt.input, "Match file")->required();
    multi->add_option("--out", multi_opt.out, "Results CSV path")->required();
    multi->add_flag("--lenient", multi_opt.lenient, "Skip invalid pairs instead of aborting");

    CommonOptions sweep_opt;
    std::vector<double> sweep_grid = default_grid;
    std::string sweep_methods = "fixed,simfit,simfitpp,simfitpp-multi";
    auto* sweep = app.add_subcommand("sweep", "Method x tau0 grid over a match file");
    add_scale_flags(sweep, sweep_opt);
    sweep->add_option("-i,--input", sweep_opt.input, "Match file")->required();
    sweep->add_option("--out", sweep_opt.out, "Results CSV path")->required();
    sweep->add_option("--tau0-grid", sweep_grid, "Initial thresholds")->delimiter(',')->capture_default_str();
    sweep->add_option("--methods", sweep_methods, "Comma-separated method list")
        ->capture_default_str();
    sweep->add_flag("--lenient", sweep_opt.lenient, "Skip invalid pairs instead of aborting");

    CommonOptions synth_opt;
    SynthbenchOptions synth;
    std::vector<double> synth_grid = default_grid;
    std::string synth_methods = "fixed,simfit,simfitpp,simfitpp-multi";
    auto* synthbench =
        app.add_subcommand("synthbench", "Method x tau0 grid over synthetic scenes");
    add_scale_flags(synthbench, synth_opt);
    synthbench->add_option("--out", synth_opt.out, "Cells CSV path")->required();
    synthbench->add_option("--rows-out", synth.rows_out, "Optional per-scene rows CSV");
    synthbench->add_option("--export-matches", synth.export_matches,
                           "Also write the generated scenes as a match file");
    synthbench->add_option("--scenes", synth.scenes, "Number of scenes")->capture_default_str();
    synthbench->add_option("--n-points", synth.n_points, "Correspondences per scene")
        ->capture_default_str();
    synthbench->add_option("--sigma", synth.sigma, "True inlier noise scale (pixels)")
        ->capture_default_str();
    synthbench->add_option("--outlier-frac", synth.outlier_frac, "Outlier fraction")
        ->capture_default_str();
    synthbench->add_option("--tau0-grid", synth_grid, "Initial thresholds")->delimiter(',')
        ->capture_default_str();
    synthbench->add_option("--methods", synth_methods, "Comma-separated method list")
        ->capture_default_str();

    CommonOptions hist_opt;
    HistfitOptions hist;
    auto* histfit = app.add_subcommand("histfit",
                                       "Squared-residual histogram and chi-square(1) fit");
    add_scale_flags(histfit, hist_opt);
    histfit->add_option("-i,--input", hist_opt.input, "Match file (omit with --synthetic)");
    histfit->add_option("--out", hist_opt.out, "Histogram CSV path")->required();
    histfit->add_flag("--synthetic", hist.synthetic, "Fit a generated noisy scene instead");
    histfit->add_option("--scene-sigma", hist.sigma, "Synthetic noise scale (pixels)")
        ->capture_default_str();
    histfit->add_option("--n-points", hist.n_points, "Synthetic scene size")
        ->capture_default_str();
    histfit->add_option("--bins", hist.bins, "Histogram bins")->capture_default_str();
    histfit->add_flag("--lenient", hist_opt.lenient, "Skip invalid pairs instead of aborting");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (est->parsed())
            return cmd_estimate(est_opt);
        if (multi->parsed())
            return cmd_multi(multi_opt);
        if (sweep->parsed())
            return cmd_sweep(sweep_opt, sweep_grid, sweep_methods);
        if (synthbench->parsed())
            return cmd_synthbench(synth_opt, synth, synth_grid, synth_methods);
        if (histfit->parsed()) {
            if (!hist.synthetic && hist_opt.input.empty()) {
                std::cerr << "histfit: need --input or --synthetic\n";
                return kExitUsage;
            }
            return cmd_histfit(hist_opt, hist);
        }
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const io::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitData;
    } catch (const io::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitEstimation;
    }
    return kExitUsage;
}
