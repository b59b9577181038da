// mcev: marginal likelihood (Bayesian evidence) estimation from posterior
// sample chains, via k-th nearest-neighbour density estimation in a
// Mahalanobis-whitened parameter space.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mcev/chain.hpp"
#include "mcev/pipeline.hpp"
#include "mcev/synthetic.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using json = nlohmann::ordered_json;

mcev::KnnBackend parse_backend(const std::string& name) {
    if (name == "auto") return mcev::KnnBackend::automatic;
    if (name == "brute") return mcev::KnnBackend::brute;
    if (name == "tree") return mcev::KnnBackend::tree;
    throw CLI::ValidationError("--knn-backend", "must be one of auto, brute, tree");
}

struct ChainFlags {
    std::vector<std::string> inputs;
    int weight_col = 0;
    bool no_weights = false;
    int logtarget_col = 1;
    bool neglog = true;
    std::vector<int> params;
    double burn_in = 0.3;
    std::string thin = "auto";
};

void add_chain_flags(CLI::App* cmd, ChainFlags& f) {
    cmd->add_option("inputs", f.inputs, "chain text file(s), concatenated in order")
        ->required()
        ->expected(-1);
    cmd->add_option("--weight-col", f.weight_col, "column holding multiplicity/importance weights")
        ->capture_default_str();
    cmd->add_flag("--no-weights", f.no_weights, "no weight column; all weights 1");
    cmd->add_option("--logtarget-col", f.logtarget_col, "column holding the log target value")
        ->capture_default_str();
    cmd->add_flag("--neglog,!--no-neglog", f.neglog,
                  "stored values are -ln(target) (default true)");
    cmd->add_option("--params", f.params,
                    "explicit parameter column indices (default: all remaining)");
    cmd->add_option("--burn-in", f.burn_in, "fraction of each file discarded from the front")
        ->capture_default_str();
    cmd->add_option("--thin", f.thin, "thinning stride, or 'auto' for ceil(max autocorr time)")
        ->capture_default_str();
}

mcev::ColumnSpec to_column_spec(const ChainFlags& f) {
    mcev::ColumnSpec spec;
    if (f.no_weights) spec.weight_column.reset();
    else spec.weight_column = f.weight_col;
    spec.log_target_column = f.logtarget_col;
    spec.negate_log_target = f.neglog;
    spec.parameter_columns = f.params;
    return spec;
}

mcev::Chain append_rows(const mcev::Chain& a, const mcev::Chain& b) {
    if (a.dim() != b.dim())
        throw mcev::ValidationError("input files have differing parameter counts (" +
                                    std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
    mcev::Chain out;
    out.parameters.resize(a.size() + b.size(), a.dim());
    out.parameters << a.parameters, b.parameters;
    out.log_target.resize(a.size() + b.size());
    out.log_target << a.log_target, b.log_target;
    out.weights.resize(a.size() + b.size());
    out.weights << a.weights, b.weights;
    out.param_names = a.param_names;
    return out;
}

mcev::Chain load_one(const std::string& path, const mcev::ColumnSpec& spec, double burn_in) {
    std::ifstream in(path);
    if (!in) throw mcev::ValidationError("cannot open input file '" + path + "'");
    mcev::Chain chain;
    try {
        chain = mcev::parse_chain(in, spec);
    } catch (const mcev::Error& e) {
        throw mcev::ParseError(path + ": " + e.what());
    }
    return mcev::apply_burn_in(chain, burn_in);
}

// parse files -> per-file burn-in -> concatenate -> thin -> compact
mcev::Chain load_chain(const ChainFlags& f) {
    const mcev::ColumnSpec spec = to_column_spec(f);
    mcev::Chain chain = load_one(f.inputs[0], spec, f.burn_in);
    for (std::size_t i = 1; i < f.inputs.size(); ++i)
        chain = append_rows(chain, load_one(f.inputs[i], spec, f.burn_in));

    std::size_t stride = 1;
    if (f.thin == "auto") {
        if (chain.size() < 10 * chain.dim())
            std::cerr << "warning: only " << chain.size() << " rows for " << chain.dim()
                      << " parameters; autocorrelation estimate may be unreliable\n";
        stride = mcev::suggested_thin_stride(chain);
        if (stride > 1)
            std::cerr << "auto-thinning with stride " << stride << "\n";
    } else {
        try {
            stride = static_cast<std::size_t>(std::stoul(f.thin));
        } catch (const std::exception&) {
            throw mcev::ValidationError("--thin must be a positive integer or 'auto'");
        }
    }
    chain = mcev::thin(chain, stride);
    return mcev::compact_duplicates(chain);
}

json result_to_json(const mcev::EstimateResult& res, const json& settings) {
    json out;
    out["schema_version"] = 1;
    out["tool"] = "mcev";
    out["version"] = kVersion;
    out["log_map"] = res.posterior.log_map;
    out["log10_map"] = res.posterior.log_map / std::log(10.0);
    out["sigma_frac"] = res.posterior.sigma_frac;
    out["sigma_frac_conservative"] = res.posterior.sigma_frac_conservative;
    out["credible_level"] = res.credible_level;
    out["log_low"] = res.log_low;
    out["log_high"] = res.log_high;
    out["n_used"] = res.n_used;
    out["m"] = res.m;
    out["k"] = res.k;
    out["log_jacobian"] = res.log_jacobian;
    out["whitened"] = res.whitened;
    out["resolution"] = {{"indicator", res.resolution.indicator},
                         {"flagged", res.resolution.threshold_exceeded}};
    out["zero_distance_count"] = res.zero_distance_count;
    out["settings"] = settings;
    return out;
}

void print_text_result(const mcev::EstimateResult& res) {
    std::printf("ln(E)  MAP      : %.6f  (log10: %.6f)\n", res.posterior.log_map,
                res.posterior.log_map / std::log(10.0));
    std::printf("sigma_frac      : %.6g  (conservative: %.6g)\n", res.posterior.sigma_frac,
                res.posterior.sigma_frac_conservative);
    std::printf("%.0f%% interval    : [%.6f, %.6f]  (ln E)\n", 100.0 * res.credible_level,
                res.log_low, res.log_high);
    std::printf("N used          : %zu   (m = %td, k = %d)\n", res.n_used, res.m, res.k);
    std::printf("ln(Jacobian)    : %.6f  (whitening %s)\n", res.log_jacobian,
                res.whitened ? "on" : "off");
    std::printf("resolution      : %.4f %s\n", res.resolution.indicator,
                res.resolution.threshold_exceeded ? "(FLAGGED > 0.5)" : "(ok)");
}

int run(int argc, char** argv) {
    CLI::App app{"Marginal likelihood estimation from posterior sample chains"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // --- estimate ---
    auto* est = app.add_subcommand("estimate", "estimate ln(E) from chain file(s)");
    ChainFlags est_flags;
    add_chain_flags(est, est_flags);
    int k = 1;
    bool no_whiten = false;
    std::string backend_name = "auto";
    double level = 0.68;
    std::string format = "text";
    est->add_option("--k", k, "neighbour order (1 is optimal)")->capture_default_str();
    est->add_flag("--no-whiten", no_whiten, "skip Mahalanobis whitening");
    est->add_option("--knn-backend", backend_name, "auto|brute|tree")->capture_default_str();
    est->add_option("--level", level, "credible interval level")->capture_default_str();
    est->add_option("--format", format, "text|json")->capture_default_str();

    // --- benchmark ---
    auto* bench = app.add_subcommand("benchmark", "synthetic Gaussian benchmark sweeps");
    std::vector<int> dims{8};
    std::vector<std::size_t> lengths{10000};
    std::vector<int> ks{1};
    std::vector<int> whiten_list{1};
    int repeats = 1;
    std::uint64_t seed = 0;
    int n_data = 1000;
    bool quick = false;
    bool timings = false;
    std::string bench_format = "csv";
    std::string bench_backend = "auto";
    std::string output_path;
    bench->add_option("--dims", dims, "parameter dimensions")->capture_default_str();
    bench->add_option("--lengths", lengths, "chain lengths N")->capture_default_str();
    bench->add_option("--ks", ks, "neighbour orders")->capture_default_str();
    bench->add_option("--whiten", whiten_list, "whitening flags (0/1)")->capture_default_str();
    bench->add_option("--repeats", repeats, "repeats per cell")->capture_default_str();
    bench->add_option("--seed", seed, "master seed")->capture_default_str();
    bench->add_option("--n-data", n_data, "data vectors per benchmark")->capture_default_str();
    bench->add_flag("--quick", quick, "small preset sweep");
    bench->add_flag("--timings", timings, "include wall-clock runtimes (breaks byte-identical output)");
    bench->add_option("--format", bench_format, "csv|json")->capture_default_str();
    bench->add_option("--knn-backend", bench_backend, "auto|brute|tree")->capture_default_str();
    bench->add_option("-o,--output", output_path, "write table to file instead of stdout");

    // --- dump ---
    auto* dump = app.add_subcommand("dump", "re-emit the canonical chain text form");
    ChainFlags dump_flags;
    dump_flags.burn_in = 0.0;
    dump_flags.thin = "1";
    add_chain_flags(dump, dump_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (est->parsed()) {
        if (format != "text" && format != "json")
            throw mcev::ValidationError("--format must be text or json");
        mcev::EstimateOptions opt;
        opt.k = k;
        opt.whiten = !no_whiten;
        opt.backend = parse_backend(backend_name);
        opt.credible_level = level;
        const mcev::Chain chain = load_chain(est_flags);
        const mcev::EstimateResult res = mcev::estimate_evidence(chain, opt);
        for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
        if (format == "json") {
            json settings{{"inputs", est_flags.inputs},
                          {"burn_in", est_flags.burn_in},
                          {"thin", est_flags.thin},
                          {"k", k},
                          {"whiten", !no_whiten},
                          {"knn_backend", backend_name},
                          {"level", level},
                          {"neglog", est_flags.neglog},
                          {"weight_col", est_flags.no_weights ? json(nullptr) : json(est_flags.weight_col)},
                          {"logtarget_col", est_flags.logtarget_col}};
            std::cout << result_to_json(res, settings).dump(2) << "\n";
        } else {
            print_text_result(res);
        }
        return 0;
    }

    if (bench->parsed()) {
        if (quick) {
            dims = {2, 5};
            lengths = {2000, 10000};
            ks = {1};
            whiten_list = {1};
            repeats = 2;
        }
        std::vector<bool> whiten_flags;
        for (int w : whiten_list) whiten_flags.push_back(w != 0);
        auto records = mcev::run_sweep(dims, lengths, ks, whiten_flags, repeats, seed, n_data,
                                       parse_backend(bench_backend));
        if (!timings)
            for (auto& r : records) r.runtime_seconds = 0.0;
        std::ostringstream body;
        if (bench_format == "json") {
            json arr = json::array();
            for (const auto& r : records)
                arr.push_back({{"m", r.m},
                               {"N", r.n_samples},
                               {"k", r.k},
                               {"whitened", r.whitened},
                               {"repeat", r.repeat},
                               {"seed", r.seed},
                               {"log_ratio", r.log_ratio},
                               {"sigma_frac", r.sigma_frac},
                               {"runtime_seconds", r.runtime_seconds}});
            body << arr.dump(2) << "\n";
        } else if (bench_format == "csv") {
            mcev::write_sweep_csv(records, body);
        } else {
            throw mcev::ValidationError("--format must be csv or json");
        }
        if (output_path.empty()) {
            std::cout << body.str();
        } else {
            std::ofstream out(output_path);
            if (!out) throw mcev::ValidationError("cannot open output file '" + output_path + "'");
            out << body.str();
        }
        return 0;
    }

    // dump
    const mcev::Chain chain = load_chain(dump_flags);
    mcev::serialize_chain(chain, std::cout);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const mcev::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const mcev::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const mcev::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
