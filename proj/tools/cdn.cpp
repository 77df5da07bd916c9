// cdn: command-line front end for pooling, training, end-to-end experiments,
// synthetic data generation and file validation.

#include "cdn/cdn.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace cdn;

namespace {

const std::vector<std::string> kPoolKeys = {"manifest", "reservoir_size", "leak_rate", "activation",
                                            "connection_density", "input_scale", "spectral_target", "esn_seed",
                                            "target_len", "standardize", "pool_start", "pool_end", "threads"};
const std::vector<std::string> kTrainKeys = {"output", "label", "train_mode", "epochs", "learning_rate", "beta1",
                                             "beta2", "epsilon", "ridge_lambda", "batch_size", "train_seed",
                                             "replications", "base_seed", "curve_stride", "threads"};

std::string flag_name(std::string key)
{
    for (auto& ch : key)
        if (ch == '_') ch = '-';
    return "--" + key;
}

/// Registers one string flag per setting key; values are applied after parsing
/// so that explicit flags override the config file.
struct SettingFlags {
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    std::string config_file;

    void add(CLI::App& app, const std::vector<std::string>& keys)
    {
        for (const auto& key : keys) {
            if (options.count(key)) continue;
            options[key] = app.add_option(flag_name(key), values[key], "setting '" + key + "'");
        }
        if (!app.get_option_no_throw("--config"))
            app.add_option("--config", config_file, "experiment config file (key = value lines)");
    }

    ExperimentConfig build(const std::set<std::string>& skip = {}) const
    {
        ExperimentConfig base;
        if (!config_file.empty()) base = parse_config_text(io::read_file(config_file), base);
        for (const auto& [key, opt] : options)
            if (opt->count() > 0 && skip.count(key) == 0) apply_setting(base, key, values.at(key));
        return base;
    }
};

int exit_code(ErrorCategory c)
{
    switch (c) {
    case ErrorCategory::Config: return 2;
    case ErrorCategory::Format:
    case ErrorCategory::Io: return 3;
    case ErrorCategory::Dimension: return 4;
    case ErrorCategory::Numerical: return 5;
    }
    return 1;
}

std::vector<std::size_t> parse_size_list(const std::string& text)
{
    std::vector<std::size_t> out;
    for (const auto& part : cdn::detail::split(text, ','))
        out.push_back(static_cast<std::size_t>(cdn::detail::parse_count("reservoir_size", cdn::detail::trim(part))));
    return out;
}

void write_outputs(const fs::path& dir, const ExperimentConfig& config, const Metrics& metrics)
{
    io::write_file(dir / "config.txt", format_config_text(config));
    io::write_file(dir / "metrics.json", metrics_to_json(metrics));
    nlohmann::ordered_json t = {{"load_seconds", metrics.timings.load_seconds},
                                {"pool_seconds", metrics.timings.pool_seconds},
                                {"train_seconds", metrics.timings.train_seconds}};
    io::write_file(dir / "timings.json", t.dump(2) + "\n");
}

ExperimentHooks partial_writer(const fs::path& dir)
{
    return {[dir](const Metrics& m) {
        try {
            io::write_file(dir / "metrics.partial.json", metrics_to_json(m));
            std::cerr << "cdn: wrote partial results for " << m.replications << " replications to "
                      << (dir / "metrics.partial.json").string() << '\n';
        } catch (const std::exception& e) {
            std::cerr << "cdn: could not write partial results: " << e.what() << '\n';
        }
    }};
}

void write_report(const fs::path& dir, const std::vector<Metrics>& runs, const std::string& dataset)
{
    std::string report = render_table(runs, dataset, ReportFormat::Text) + "\n";
    for (const auto& m : runs) report += render_summary(m);
    io::write_file(dir / "report.txt", report);
    io::write_file(dir / "report.md", render_table(runs, dataset, ReportFormat::Markdown));
    io::write_file(dir / "curve.csv", render_curve_csv(runs));
    std::cout << report;
}

int cmd_inspect(const std::vector<std::string>& paths)
{
    int failures = 0;
    for (const auto& p : paths) {
        try {
            const std::string data = io::read_file(p);
            const std::string_view head = std::string_view(data).substr(0, 5);
            if (head.starts_with(kFeatureMagic)) {
                const auto m = decode_feature_file(data, p);
                std::cout << p << ": CDNF feature file, " << m.rows() << " frames x " << m.cols() << " dims\n";
            } else if (head.starts_with(kModelMagic)) {
                const auto model = decode_model(data, p);
                std::cout << p << ": CDNW readout, " << model.w_out.rows() << " classes x " << model.w_out.cols()
                          << " inputs\n";
            } else if (head.starts_with(kPooledMagic)) {
                const auto pooled = decode_pooled(data, p);
                std::cout << p << ": CDNP pooled cache, " << pooled.rows.rows() << " videos x " << pooled.rows.cols()
                          << " (N_u=" << pooled.input_dim << ", N_x=" << pooled.reservoir_size << ", "
                          << pooled.class_labels.size() << " classes)\n";
            } else if (head.starts_with("#CDNM")) {
                const auto manifest = parse_manifest(data, fs::path(p).parent_path(), p);
                const auto seqs = load_dataset(manifest);
                std::size_t min_len = seqs.empty() ? 0 : seqs.front().length(), max_len = min_len;
                for (const auto& s : seqs) {
                    min_len = std::min(min_len, s.length());
                    max_len = std::max(max_len, s.length());
                }
                std::cout << p << ": manifest, " << manifest.entries.size() << " videos, "
                          << manifest.class_set.size() << " classes, N_u=" << manifest.feature_dim << ", frames "
                          << min_len << ".." << max_len << "; all files valid\n";
            } else {
                fail(ErrorCategory::Format, p + ": unrecognised file type");
            }
        } catch (const Error& e) {
            std::cerr << "cdn: error [" << category_name(e.category()) << "]: " << e.what() << '\n';
            failures = failures ? failures : exit_code(e.category());
        }
    }
    return failures;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Echo state network sequence classifier over per-frame feature files"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic temporal dataset");
    SynthSpec synth_spec;
    fs::path synth_out;
    std::string pattern = "frequency";
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--classes", synth_spec.classes);
    synth->add_option("--per-class", synth_spec.per_class);
    synth->add_option("--feature-dim", synth_spec.feature_dim);
    synth->add_option("--length", synth_spec.length);
    synth->add_option("--pattern", pattern)->check(CLI::IsMember({"frequency", "bump"}));
    synth->add_option("--noise", synth_spec.noise);
    synth->add_option("--amplitude", synth_spec.amplitude);
    synth->add_option("--jitter", synth_spec.jitter);
    synth->add_option("--seed", synth_spec.seed);

    // inspect
    auto* inspect = app.add_subcommand("inspect", "validate feature, manifest, model or pooled files");
    std::vector<std::string> inspect_paths;
    inspect->add_option("paths", inspect_paths)->required();

    // pool
    auto* pool = app.add_subcommand("pool", "manifest -> pooled cache file");
    SettingFlags pool_flags;
    fs::path pool_out;
    pool->add_option("--out", pool_out, "pooled cache file (.cdnp)")->required();
    pool_flags.add(*pool, kPoolKeys);

    // train
    auto* train = app.add_subcommand("train", "pooled cache -> metrics");
    SettingFlags train_flags;
    fs::path pooled_path, model_path;
    std::string train_dataset = "dataset";
    train->add_option("--pooled", pooled_path, "pooled cache file")->required();
    train->add_option("--save-model", model_path, "also fit on all rows and save a CDNW readout");
    train->add_option("--dataset-name", train_dataset, "title used in the report table");
    train_flags.add(*train, kTrainKeys);

    // run
    auto* run = app.add_subcommand("run", "end-to-end experiment");
    SettingFlags run_flags;
    std::string run_dataset = "dataset";
    run->add_option("--dataset-name", run_dataset, "title used in the report table");
    run_flags.add(*run, config_keys());

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            synth_spec.pattern = pattern == "bump" ? SynthPattern::Bump : SynthPattern::Frequency;
            const auto manifest = write_synth_dataset(synth_spec, synth_out);
            std::cout << "wrote " << manifest.entries.size() << " videos and " << (synth_out / "manifest.tsv").string()
                      << '\n';
            return 0;
        }
        if (*inspect) return cmd_inspect(inspect_paths);
        if (*pool) {
            const auto config = pool_flags.build();
            validate(config);
            require(!config.manifest.empty(), ErrorCategory::Config, "--manifest is required");
            const auto manifest = load_manifest(config.manifest);
            const auto pooled = pool_dataset(manifest, config.esn, config.target_len,
                                             {config.standardize, config.window, config.threads});
            save_pooled(pool_out, pooled);
            std::cout << "pooled " << pooled.rows.rows() << " videos into " << pool_out.string() << " ("
                      << pooled.rows.cols() << " columns, rho(W^x) = " << pooled.natural_radius << ")\n";
            return 0;
        }
        if (*train) {
            auto config = train_flags.build();
            require(!config.output.empty(), ErrorCategory::Config, "--output is required");
            const auto pooled = load_pooled(pooled_path);
            const auto metrics = evaluate_pooled(pooled, config, {}, partial_writer(config.output));
            write_outputs(config.output, config, metrics);
            write_report(config.output, {metrics}, train_dataset);
            if (!model_path.empty()) {
                ReadoutModel model;
                if (config.train.mode == TrainMode::Ridge)
                    model = ridge_fit(pooled.rows, one_hot(pooled.labels, pooled.class_labels.size()),
                                      config.train.ridge_lambda, pooled.class_labels);
                else
                    model = train_softmax(pooled.rows, pooled.labels, pooled.class_labels, config.train).model;
                save_model(model_path, model);
            }
            return 0;
        }
        if (*run) {
            // --reservoir-size may be a comma list, swept one run per size
            const bool sweep = run_flags.options.at("reservoir_size")->count() > 0;
            const auto config = run_flags.build(sweep ? std::set<std::string>{"reservoir_size"} : std::set<std::string>{});
            const auto sizes = sweep ? parse_size_list(run_flags.values.at("reservoir_size"))
                                     : std::vector<std::size_t>{config.esn.reservoir_size};
            require(!config.manifest.empty(), ErrorCategory::Config, "--manifest is required");
            require(!config.output.empty(), ErrorCategory::Config, "--output is required");
            std::vector<Metrics> runs;
            for (const auto n : sizes) {
                ExperimentConfig one = config;
                one.esn.reservoir_size = n;
                const fs::path dir = sizes.size() == 1 ? config.output : config.output / ("nx" + std::to_string(n));
                one.output = dir;
                runs.push_back(run_experiment(one, {}, partial_writer(dir)));
                write_outputs(dir, one, runs.back());
            }
            write_report(config.output, runs, run_dataset);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "cdn: error [" << category_name(e.category()) << "]: " << e.what() << '\n';
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << "cdn: error [internal]: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
