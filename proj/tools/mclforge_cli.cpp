// Command-line front end: data generation, training, evaluation, the kNN
// probe, and curve export. Every command is reproducible byte-for-byte
// given identical arguments and seed.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mclforge/dataset.hpp"
#include "mclforge/engine.hpp"
#include "mclforge/errors.hpp"
#include "mclforge/eval.hpp"
#include "mclforge/network.hpp"

namespace fs = std::filesystem;
using namespace mclforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError(std::string("cannot parse ") + what + ": " + item);
        }
    }
    if (out.empty()) throw ConfigError(std::string(what) + " list is empty");
    return out;
}

// "0;1;2;0,1,2" -> four subsets.
std::vector<std::vector<int>> parse_subsets(const std::string& text) {
    std::vector<std::vector<int>> out;
    std::stringstream ss(text);
    std::string group;
    while (std::getline(ss, group, ';')) {
        out.push_back(parse_int_list(group, "subset"));
    }
    if (out.empty()) throw ConfigError("subset list is empty");
    return out;
}

// Rows separated by ';', per-class entries by ','.
std::vector<std::vector<double>> parse_matrix(const std::string& text) {
    std::vector<std::vector<double>> out;
    std::stringstream ss(text);
    std::string row;
    while (std::getline(ss, row, ';')) {
        std::vector<double> values;
        std::stringstream rs(row);
        std::string item;
        while (std::getline(rs, item, ',')) {
            try {
                values.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw ConfigError("cannot parse separability entry: " + item);
            }
        }
        out.push_back(std::move(values));
    }
    return out;
}

// Flat key=value config support. The file supplies defaults for the parsed
// subcommand; anything given on the command line wins. Implemented by
// splicing the file's entries in as "--key=value" tokens right after the
// subcommand name and letting a take-last policy resolve the precedence.
std::vector<std::string> splice_config_tokens(std::vector<std::string> args) {
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw ConfigError("--config needs a file path");
            config_path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                       args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (config_path.empty()) return args;
    if (args.empty()) throw ConfigError("--config is only valid after a subcommand");

    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config file: " + config_path);
    std::vector<std::string> tokens;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              " is not key=value");
        }
        auto strip = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              " has an empty key");
        }
        tokens.push_back("--" + key + "=" + value);
    }
    // After the subcommand name, before any explicit flags.
    args.insert(args.begin() + 1, tokens.begin(), tokens.end());
    return args;
}

int env_threads() {
    const char* v = std::getenv("MCL_FORGE_THREADS");
    if (v == nullptr) return 1;
    try {
        const int n = std::stoi(v);
        if (n < 1) throw ConfigError("MCL_FORGE_THREADS must be >= 1");
        return n;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError(std::string("cannot parse MCL_FORGE_THREADS: ") + v);
    }
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::vector<int>> report_subset_order(const EvalReport& report) {
    std::vector<std::vector<int>> subsets;
    for (const auto& [subset, acc] : report.subset_accuracies) {
        (void)acc;
        subsets.push_back(subset);
    }
    return subsets;
}

void write_reports_csv(const fs::path& path, const std::vector<EvalReport>& reports) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    if (!reports.empty()) {
        out << report_csv_header(static_cast<int>(reports.front().per_modality_accuracy.size()),
                                 report_subset_order(reports.front()))
            << "\n";
        for (const auto& r : reports) out << report_to_csv_row(r) << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

struct GenArgs {
    std::string preset;
    int m = 0, c = 0, n_per_class = 125;
    std::string dims_text;
    double noise_sigma = 0.25;
    std::string d_matrix_text;
    std::uint64_t seed = 0;
    std::string out_path;
};

int run_gen(const GenArgs& args) {
    MultimodalDataset ds;
    if (!args.preset.empty()) {
        if (args.preset == "complementary") {
            ds = complementary_preset(args.seed, args.n_per_class);
        } else if (args.preset == "fast-modality") {
            ds = fast_modality_preset(args.seed, args.n_per_class);
        } else {
            throw ConfigError("unknown preset: " + args.preset);
        }
    } else {
        if (args.m <= 0 || args.c <= 0) {
            throw ConfigError("gen needs --preset or both --m and --c");
        }
        std::vector<int> dims;
        if (args.dims_text.empty()) {
            dims.assign(static_cast<std::size_t>(args.m), 16);
        } else {
            dims = parse_int_list(args.dims_text, "dims");
            if (dims.size() == 1) dims.assign(static_cast<std::size_t>(args.m), dims[0]);
        }
        SeparabilityProfile profile;
        profile.noise_sigma = args.noise_sigma;
        if (args.d_matrix_text.empty()) {
            profile.d.assign(static_cast<std::size_t>(args.m),
                             std::vector<double>(static_cast<std::size_t>(args.c), 1.0));
        } else {
            profile.d = parse_matrix(args.d_matrix_text);
        }
        ds = generate(args.m, args.c, dims, args.n_per_class, profile, args.seed);
    }
    save(ds, args.out_path);
    std::printf("wrote %s: M=%d C=%d N=%d dims=", args.out_path.c_str(),
                ds.modality_count, ds.class_count, ds.sample_count());
    for (std::size_t i = 0; i < ds.dims.size(); ++i) {
        std::printf("%s%d", i ? "," : "", ds.dims[i]);
    }
    std::printf(" train=%zu test=%zu seed=%llu\n", ds.train_indices.size(),
                ds.test_indices.size(), static_cast<unsigned long long>(args.seed));
    return kExitOk;
}

struct TrainArgs {
    std::string data_path;
    std::string variant = "dmcl";
    TrainConfig config;
    std::string hidden_text = "64";
    std::string out_dir = "out";
    std::string subsets_text;
};

int run_train(const TrainArgs& args) {
    const MultimodalDataset ds = load(args.data_path);
    TrainConfig config = args.config;
    config.variant = variant_from_name(args.variant);
    config.threads = env_threads();
    config.validate();

    Ensemble ensemble = make_ensemble(ds.dims, parse_int_list(args.hidden_text, "hidden"),
                                      ds.class_count, config.variant, config.seed);

    fs::create_directories(args.out_dir);
    const fs::path out_dir(args.out_dir);
    std::ofstream metrics_file(out_dir / "metrics.csv", std::ios::trunc);
    if (!metrics_file) throw IoError("cannot open metrics log for writing");
    MetricsWriter metrics(metrics_file, config.variant, config.seed);

    TrainResult result = train(ensemble, ds, config, &metrics);
    metrics_file.flush();
    if (!metrics_file) throw IoError("metrics log write failed");

    save_checkpoint(ensemble, (out_dir / "checkpoint.mclf").string());
    write_reports_csv(out_dir / "reports.csv", result.reports);

    // Re-evaluate the final model over any extra requested subsets.
    EvalReport final_report =
        evaluate(ensemble, ds,
                 args.subsets_text.empty() ? std::vector<std::vector<int>>{}
                                           : parse_subsets(args.subsets_text));
    final_report.step_index = config.steps;
    if (!result.reports.empty()) {
        final_report.winner_fraction = result.reports.back().winner_fraction;
    }
    write_text_file(out_dir / "report_final.txt", report_to_text(final_report));

    std::printf("trained variant=%s steps=%d seed=%llu\n", variant_name(config.variant),
                config.steps, static_cast<unsigned long long>(config.seed));
    std::fputs(report_to_text(final_report).c_str(), stdout);
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint_path;
    std::string data_path;
    std::string subsets_text;
    std::string out_dir = ".";
};

int run_eval(const EvalArgs& args) {
    const MultimodalDataset ds = load(args.data_path);
    const Ensemble ensemble = load_checkpoint(args.checkpoint_path);
    EvalReport report =
        evaluate(ensemble, ds,
                 args.subsets_text.empty() ? std::vector<std::vector<int>>{}
                                           : parse_subsets(args.subsets_text));
    fs::create_directories(args.out_dir);
    write_text_file(fs::path(args.out_dir) / "report.txt", report_to_text(report));
    write_reports_csv(fs::path(args.out_dir) / "report.csv", {report});
    std::fputs(report_to_text(report).c_str(), stdout);
    return kExitOk;
}

struct ProbeArgs {
    std::string data_path;
    std::string k_text = "1,5,10,50";
    std::string hidden_text = "64";
    std::uint64_t seed = 0;
    std::string out_path = "probe.csv";
};

int run_probe(const ProbeArgs& args) {
    const MultimodalDataset ds = load(args.data_path);
    const Ensemble ensemble =
        make_ensemble(ds.dims, parse_int_list(args.hidden_text, "hidden"), ds.class_count,
                      Variant::independent, args.seed);
    const KnnTable table = knn_probe(ensemble, ds, parse_int_list(args.k_text, "k"));

    std::ostringstream csv;
    csv << "modality";
    for (int k : table.k_values) csv << ",k" << k;
    csv << "\n";
    for (std::size_t m = 0; m < table.accuracy.size(); ++m) {
        csv << m;
        for (double acc : table.accuracy[m]) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", acc);
            csv << ',' << buf;
        }
        csv << "\n";
    }
    write_text_file(args.out_path, csv.str());
    std::fputs(csv.str().c_str(), stdout);
    return kExitOk;
}

struct CurvesArgs {
    std::string log_path;
    std::string out_path;
    int smooth_window = 0;
};

int run_curves(const CurvesArgs& args) {
    export_curves(args.log_path, args.out_path, args.smooth_window);
    std::printf("wrote %s\n", args.out_path.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal multiple-choice-learning ensemble trainer"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic multimodal dataset");

    gen_cmd->add_option("--preset", gen.preset, "complementary | fast-modality");
    gen_cmd->add_option("--m", gen.m, "modality count");
    gen_cmd->add_option("--c", gen.c, "class count");
    gen_cmd->add_option("--n-per-class", gen.n_per_class, "samples per class")
        ->capture_default_str();
    gen_cmd->add_option("--dims", gen.dims_text, "per-modality widths, comma separated");
    gen_cmd->add_option("--noise-sigma", gen.noise_sigma, "cluster spread")
        ->capture_default_str();
    gen_cmd->add_option("--d-matrix", gen.d_matrix_text,
                        "separability rows per modality, ';' separated");
    gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
    gen_cmd->add_option("-o,--out", gen.out_path, "output dataset file")->required();

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "train an ensemble");

    train_cmd->add_option("--data", tr.data_path, "dataset file")->required();
    train_cmd->add_option("--variant", tr.variant,
                          "independent | smcl | cmcl | dmcl | dmcl-random-teacher")
        ->capture_default_str();
    train_cmd->add_option("--t", tr.config.temperature, "soft-target temperature")
        ->capture_default_str();
    train_cmd->add_option("--lambda", tr.config.lambda, "distillation blend")
        ->capture_default_str();
    train_cmd->add_option("--beta", tr.config.beta, "CMCL uniform-loss weight")
        ->capture_default_str();
    train_cmd->add_option("--lr", tr.config.lr, "learning rate")->capture_default_str();
    train_cmd->add_option("--momentum", tr.config.momentum, "SGD momentum")
        ->capture_default_str();
    train_cmd->add_option("--batch-size", tr.config.batch_size, "minibatch size")
        ->capture_default_str();
    train_cmd->add_option("--steps", tr.config.steps, "training steps")->required();
    train_cmd->add_option("--seed", tr.config.seed, "training seed")->capture_default_str();
    train_cmd->add_flag("--no-student-temp",
                        [&tr](std::int64_t) { tr.config.student_temperature_on = false; },
                        "keep the student at T=1 in the distillation term");
    train_cmd->add_flag("--t2-rescale",
                        [&tr](std::int64_t) { tr.config.t_squared_rescale = true; },
                        "rescale the distillation term by T^2");
    train_cmd->add_option("--eval-every", tr.config.eval_every, "steps between reports")
        ->capture_default_str();
    train_cmd->add_option("--hidden", tr.hidden_text, "hidden layer sizes, comma separated")
        ->capture_default_str();
    train_cmd->add_option("--subsets", tr.subsets_text,
                          "extra modality subsets for the final report, e.g. 0;1;0,1");
    train_cmd->add_option("-o,--out-dir", tr.out_dir, "output directory")
        ->capture_default_str();

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");

    eval_cmd->add_option("--checkpoint", ev.checkpoint_path, "MCLF checkpoint")->required();
    eval_cmd->add_option("--data", ev.data_path, "dataset file")->required();
    eval_cmd->add_option("--subsets", ev.subsets_text, "extra modality subsets");
    eval_cmd->add_option("-o,--out-dir", ev.out_dir, "output directory")
        ->capture_default_str();

    ProbeArgs pr;
    auto* probe_cmd = app.add_subcommand("probe", "kNN probe over untrained features");

    probe_cmd->add_option("--data", pr.data_path, "dataset file")->required();
    probe_cmd->add_option("--k", pr.k_text, "k values, comma separated")
        ->capture_default_str();
    probe_cmd->add_option("--hidden", pr.hidden_text, "hidden layer sizes")
        ->capture_default_str();
    probe_cmd->add_option("--seed", pr.seed, "network init seed")->capture_default_str();
    probe_cmd->add_option("-o,--out", pr.out_path, "output CSV")->capture_default_str();

    CurvesArgs cu;
    auto* curves_cmd = app.add_subcommand("curves", "export loss/winner-fraction curves");

    curves_cmd->add_option("--log", cu.log_path, "metrics.csv from train")->required();
    curves_cmd->add_option("-o,--out", cu.out_path, "output CSV")->required();
    curves_cmd->add_option("--smooth-window", cu.smooth_window,
                           "trailing-mean window (0 = off)")
        ->capture_default_str();

    for (auto* sub : {gen_cmd, train_cmd, eval_cmd, probe_cmd, curves_cmd}) {
        sub->add_option("--config")
            ->description("flat key=value file supplying defaults; flags override it");
        // Config tokens are spliced in before explicit flags; take-last
        // makes the explicit flag win.
        for (auto* opt : sub->get_options()) {
            opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        }
    }

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = splice_config_tokens(std::move(args));
        std::reverse(args.begin(), args.end());  // CLI11 consumes back-to-front
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }

    try {
        if (gen_cmd->parsed()) return run_gen(gen);
        if (train_cmd->parsed()) return run_train(tr);
        if (eval_cmd->parsed()) return run_eval(ev);
        if (probe_cmd->parsed()) return run_probe(pr);
        if (curves_cmd->parsed()) return run_curves(cu);
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
